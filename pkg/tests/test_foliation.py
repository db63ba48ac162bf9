import csv
import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pftsim import (
    Foliation,
    LatticeSpec,
    build_inertial,
    build_interpolating,
    bump_embedding,
    decompose_deformation,
    flat_embedding,
    tilted_embedding,
)
from pftsim.errors import InvalidEmbedding, NonTimelikeDeformation
from pftsim.foliation import reconstruction_residual, schedule_weights


def test_inertial_unit_lapse_zero_shift():
    spec = LatticeSpec(16, 0.1)
    fol = build_inertial(spec, 0.4, (0.0, 1.0), 10)
    assert fol.n_steps == 10
    assert fol.dt(3) == pytest.approx(0.1)
    for k in (0, 5, 9):
        lapse, shift = decompose_deformation(fol, k)
        assert np.allclose(lapse, 1.0, atol=1e-12)
        assert np.allclose(shift, 0.0, atol=1e-12)
    assert fol.diagnostics["foliating"]


def test_interpolating_flat_to_flat_is_time_translation():
    spec = LatticeSpec(12, 0.1)
    fol = build_interpolating(flat_embedding(spec), flat_embedding(spec, time=0.5), "linear", 5)
    assert fol.times[-1] == 1.0 and fol.dt(0) == pytest.approx(0.2)
    lapse, shift = decompose_deformation(fol, 2)
    assert np.allclose(lapse, 0.5) and np.allclose(shift, 0.0)
    assert fol.leaves[-1].same_geometry(flat_embedding(spec, time=0.5))


def test_tilted_leaves_lapse_shift_oracle():
    lam = 0.3
    spec = LatticeSpec(10, 0.2, boundary="periodic")
    fol = build_interpolating(tilted_embedding(spec, lam), tilted_embedding(spec, lam, time=1.0), "linear", 4)
    lapse, shift = decompose_deformation(fol, 1)
    g = 1 - lam * lam
    assert np.allclose(lapse, 1 / np.sqrt(g), rtol=1e-13)
    assert np.allclose(shift, -lam / g, rtol=1e-13)


def test_drag_backwards_is_rejected():
    spec = LatticeSpec(12, 0.1)
    with pytest.raises(NonTimelikeDeformation):
        build_interpolating(flat_embedding(spec, time=1.0), flat_embedding(spec), "linear", 4)
    fol = build_interpolating(flat_embedding(spec, time=1.0), flat_embedding(spec), "linear", 4,
                              validate=False)
    assert not fol.diagnostics["foliating"]


def test_crossing_leaves_are_flagged():
    spec = LatticeSpec(21, 0.1)
    # start above the end slice near the centre only: leaves cross there
    start = bump_embedding(spec, 0.4, 0.8)
    end = flat_embedding(spec, time=0.2)
    with pytest.raises(NonTimelikeDeformation):
        build_interpolating(start, end, "linear", 4)


def test_time_parameter_validation():
    spec = LatticeSpec(8, 0.1)
    e = flat_embedding(spec)
    with pytest.raises(InvalidEmbedding):
        Foliation((e,), [0.0])
    with pytest.raises(InvalidEmbedding):
        Foliation((e, flat_embedding(spec, time=1.0)), [1.0, 0.0])
    with pytest.raises(ValueError):
        build_interpolating(e, flat_embedding(spec, time=1.0), "zigzag", 3)
    with pytest.raises(ValueError):
        build_inertial(spec, 0.0, (0, 1), 0)


@pytest.mark.parametrize("schedule", ["linear", "smoothstep", "bump"])
def test_schedules_share_endpoints(schedule):
    spec = LatticeSpec(16, 0.1)
    e1, e2 = flat_embedding(spec), bump_embedding(spec, 0.2, time=0.5)
    fol = build_interpolating(e1, e2, schedule, 8, bump_amplitude=0.1)
    assert fol.leaves[0] is e1 and fol.leaves[-1] is e2
    f, g = schedule_weights(schedule, np.array([0.0, 1.0]))
    assert np.allclose(f, [0, 1]) and np.allclose(g, 0, atol=1e-15)


def test_bump_schedule_differs_in_the_middle():
    spec = LatticeSpec(16, 0.1)
    e1, e2 = flat_embedding(spec), flat_embedding(spec, time=0.5)
    a = build_interpolating(e1, e2, "linear", 4)
    b = build_interpolating(e1, e2, "bump", 4, bump_amplitude=0.1)
    assert not a.leaves[2].same_geometry(b.leaves[2])


@given(st.floats(0.0, 0.3), st.floats(0.2, 1.0), st.integers(2, 12))
def test_lapse_shift_reconstruct_deformation(amp, t_end, n_steps):
    spec = LatticeSpec(20, 0.1)
    fol = build_interpolating(flat_embedding(spec), bump_embedding(spec, amp, time=t_end), "smoothstep",
                              n_steps, validate=False)
    for k in range(fol.n_steps):
        assert reconstruction_residual(fol, k) <= 1e-12


def test_csv_layout():
    spec = LatticeSpec(6, 0.1)
    fol = build_inertial(spec, 0.0, (0.0, 0.2), 2)
    rows = list(csv.DictReader(io.StringIO(fol.to_csv())))
    assert len(rows) == 3 * 6
    assert set(rows[0]) == {"step", "site", "T", "X", "N", "N^x"}
    assert float(rows[0]["N"]) == pytest.approx(1.0)
    assert rows[-1]["N"] == "nan"
