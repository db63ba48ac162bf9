import numpy as np
import pytest
import sympy as sym

from pftsim import (
    DeformationVector,
    LatticeSpec,
    anomaly_potential,
    bump_embedding,
    flat_embedding,
    hyperbola_embedding,
    integrated_anomaly,
    smear_flux,
    tilted_embedding,
)
from pftsim.errors import InvalidEmbedding, MassiveField
from pftsim.field_model import centered_difference, flat_stiffness
from pftsim.hamiltonian import flat_hamiltonian


def test_time_translation_on_flat_slice_is_kg():
    spec = LatticeSpec(10, 0.2, mass=1.1)
    h = smear_flux(spec, flat_embedding(spec), DeformationVector.constant(10, 1.0, 0.0))
    n = 10
    assert np.allclose(h.form.matrix[:n, :n], flat_stiffness(spec))
    assert np.allclose(h.form.matrix[n:, n:], np.eye(n))
    assert h.para.is_zero() or np.max(np.abs(h.para.matrix)) == 0.0
    assert h.anomaly_rate == 0.0


def test_space_translation_is_momentum():
    spec = LatticeSpec(10, 0.2, mass=1.1, boundary="periodic")
    h = smear_flux(spec, flat_embedding(spec), DeformationVector.constant(10, 0.0, 1.0))
    n = 10
    # sum_i pi_i (phi_{i+1} - phi_{i-1}) / (2 dx) dx  in (q, p) variables
    c = centered_difference(spec).toarray()
    want = np.zeros((2 * n, 2 * n))
    want[:n, n:] = c.T
    want[n:, :n] = c
    assert np.allclose(h.form.matrix, want)
    assert np.max(np.abs(h.perp.matrix)) == 0.0


@pytest.mark.parametrize("factory", [lambda s: tilted_embedding(s, 0.3),
                                     lambda s: bump_embedding(s, 0.25, 0.8)])
def test_perp_plus_para_is_total(factory):
    spec = LatticeSpec(16, 0.2, mass=0.5)
    emb = factory(spec)
    v = np.stack([1 + 0.1 * np.cos(spec.labels), 0.2 * np.sin(spec.labels)], axis=1)
    h = smear_flux(spec, emb, v)
    assert np.max(np.abs((h.perp + h.para).matrix - h.form.matrix)) == 0.0


def test_generator_is_linear_in_deformation():
    spec = LatticeSpec(12, 0.2)
    emb = bump_embedding(spec, 0.2)
    a = np.stack([np.ones(12), np.zeros(12)], axis=1)
    b = np.stack([0.3 * np.cos(spec.labels), 0.1 * np.ones(12)], axis=1)
    ha = smear_flux(spec, emb, a).form.matrix
    hb = smear_flux(spec, emb, b).form.matrix
    hab = smear_flux(spec, emb, 2 * a - 3 * b).form.matrix
    assert np.allclose(hab, 2 * ha - 3 * hb, atol=1e-12)


def test_flat_hamiltonian_positive():
    spec = LatticeSpec(8, 0.3, mass=0.0)
    assert np.linalg.eigvalsh(flat_hamiltonian(spec).matrix).min() > 0


def test_smear_flux_wrong_size():
    with pytest.raises(InvalidEmbedding):
        smear_flux(LatticeSpec(9, 0.1), flat_embedding(LatticeSpec(8, 0.1)), np.zeros((8, 2)))


# -- anomaly -------------------------------------------------------------------


def test_flat_and_tilted_anomaly_vanish_pointwise():
    spec = LatticeSpec(16, 0.1)
    assert np.array_equal(anomaly_potential(spec, flat_embedding(spec)), np.zeros((16, 2)))
    assert np.max(np.abs(anomaly_potential(spec, tilted_embedding(spec, 0.4)))) < 1e-10


def test_massive_field_rejected():
    spec = LatticeSpec(16, 0.1, mass=1.0)
    with pytest.raises(MassiveField):
        anomaly_potential(spec, bump_embedding(spec, 0.2))


def _continuum_anomaly(amp, width, x):
    s = sym.symbols("s", real=True)
    t = amp * sym.exp(-(s / width) ** 2)
    tp = sym.diff(t, s)
    g = 1 - tp**2
    k = -sym.diff(t, s, 2) / g ** sym.Rational(3, 2)
    dk_ds = sym.diff(k, s) / sym.sqrt(g)
    e_low = sym.Matrix([-tp, 1]) / sym.sqrt(g)
    n_low = sym.Matrix([-1, tp]) / sym.sqrt(g)
    a = e_low * dk_ds - k**2 * n_low
    fs = [sym.lambdify(s, comp, "numpy") for comp in a]
    return np.stack([f(x) for f in fs], axis=1)


def test_bump_anomaly_matches_continuum_at_second_order():
    errs = []
    for n, dx in ((61, 0.1), (121, 0.05), (241, 0.025)):
        spec = LatticeSpec(n, dx)
        a = anomaly_potential(spec, bump_embedding(spec, 0.3, 1.0))
        want = _continuum_anomaly(0.3, 1.0, spec.labels)
        errs.append(np.max(np.abs(a[3:-3] - want[3:-3])))
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_bump_anomaly_integrates_to_zero():
    spec = LatticeSpec(121, 0.1)
    emb = bump_embedding(spec, 0.3, 1.0)
    a = anomaly_potential(spec, emb)
    v = DeformationVector.constant(121, 1.0, 0.0)
    total = integrated_anomaly(spec, emb, v)
    assert abs(total) <= 1e-8 * np.max(np.abs(a))
    assert smear_flux(spec, emb, v).anomaly_rate == pytest.approx(total, abs=0.0)


def test_half_bump_integrates_to_boundary_value():
    # centre just inside the left end: both K and T' are nonzero at the boundary,
    # and the integral tends to -(K e_0) there at first order
    amp, off = 0.3, 0.5
    t1 = amp * 2 * off * np.exp(-off * off)
    t2 = amp * (4 * off * off - 2) * np.exp(-off * off)
    g = 1 - t1 * t1
    want = -(-t2 / g**1.5) * (-t1 / np.sqrt(g))
    errs = []
    for n, dx in ((61, 0.1), (121, 0.05), (241, 0.025)):
        spec = LatticeSpec(n, dx)
        emb = bump_embedding(spec, amp, 1.0, center=spec.labels[0] + off)
        total = integrated_anomaly(spec, emb, DeformationVector.constant(n, 1.0, 0.0))
        errs.append(abs(total / want - 1))
    assert want > 0.05
    assert errs[0] / errs[1] > 1.8 and errs[1] / errs[2] > 1.8
    assert errs[-1] < 0.2


def test_central_charge_scales_linearly():
    spec = LatticeSpec(41, 0.1)
    emb = bump_embedding(spec, 0.2, 1.0)
    assert np.allclose(anomaly_potential(spec, emb, central_charge=3.0),
                       3.0 * anomaly_potential(spec, emb))


def test_hyperbola_anomaly_finite():
    spec = LatticeSpec(41, 0.05)
    a = anomaly_potential(spec, hyperbola_embedding(spec, 2.0))
    assert np.all(np.isfinite(a))
    # constant K = 1/2: interior A = -K^2 n_mu, whose Minkowski square is -K^4
    assert np.allclose(a[5:-5, 0] ** 2 - a[5:-5, 1] ** 2, 0.5**4, rtol=1e-3, atol=0)
