"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Experiments run at their full built-in configuration, so this module takes a
few minutes.
"""
import numpy as np
import pytest

from pftsim import (
    DeformationVector,
    LatticeSpec,
    build_interpolating,
    bump_embedding,
    evolve_foliation,
    flat_embedding,
    translate,
    vacuum_state,
)
from pftsim.runner import default_config, parse_config, run


@pytest.fixture(scope="module")
def experiment(tmp_path_factory):
    done = {}

    def get(name):
        if name not in done:
            done[name] = run(parse_config(default_config(name)), out_dir=tmp_path_factory.mktemp(name),
                             threads=4)
        return done[name]

    return get


def report(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {number:2d} ({title}): {detail}")
    assert ok, detail


def checks_of(res):
    return {c["name"]: c for c in res.manifest.checks}


def summarize(res):
    return ", ".join(f"{c['name']}={c['value']:.3g}{'' if c['passed'] else ' (failed)'}"
                     for c in res.manifest.checks)


def report_run(capsys, number, title, res):
    ok = res.exit_code == 0 and res.manifest.error is None
    report(capsys, number, title, ok, summarize(res) or str(res.manifest.error))


def test_criterion_01_translate_group_action(capsys):
    r = np.random.default_rng(2024)
    bad = 0
    for _ in range(100):
        n = int(r.integers(8, 40))
        spec = LatticeSpec(n, float(r.uniform(0.05, 0.3)))
        lab = spec.labels
        emb = bump_embedding(spec, float(r.uniform(0.0, 0.1)), float(r.uniform(0.8, 2.0)),
                             time=float(r.uniform(-1, 1)))
        comps = np.stack([1.0 + 0.2 * r.random() * np.sin(lab), 0.1 * r.random() * np.cos(lab)], axis=1)
        v = DeformationVector(comps)
        s1, s2 = (float(x) for x in r.uniform(-0.5, 0.5, 2))
        once = translate(emb, v, s1)
        shift_ok = (np.array_equal(once.t_coord, emb.t_coord + s1 * comps[:, 0])
                    and np.array_equal(once.x_coord, emb.x_coord + s1 * comps[:, 1]))
        twice, direct = translate(once, v, s2), translate(emb, v, s1 + s2)
        law_ok = np.array_equal(twice.t_coord, direct.t_coord) and np.array_equal(twice.x_coord, direct.x_coord)
        bad += not (shift_ok and law_ok)
    report(capsys, 1, "translate shift and group law, bitwise", bad == 0, f"{bad}/100 triples differ")


def test_criterion_02_schrodinger_recovery(capsys, experiment):
    report_run(capsys, 2, "Schrodinger recovery", experiment("schrodinger_recovery"))


def test_criterion_03_foliation_independence(capsys, experiment):
    report_run(capsys, 3, "foliation independence", experiment("foliation_independence"))


def test_criterion_04_dual_path(capsys, experiment):
    report_run(capsys, 4, "dual-path equality", experiment("dual_path_equality"))


def test_criterion_05_symplecticity_purity(capsys):
    spec = LatticeSpec(32, 0.2, mass=1.0)
    e1, e2 = flat_embedding(spec), bump_embedding(spec, 0.3, 1.0, time=20.0)
    fol = build_interpolating(e1, e2, "bump", 10_000, bump_amplitude=0.2)
    out, prop = evolve_foliation(vacuum_state(spec, e1), fol, return_propagator=True)
    step_drift = out.diagnostics["max_step_drift"]
    total = prop.diagnostics["drift"]
    purity = out.purity_defect()
    ok = len(fol.leaves) == 10_001 and step_drift <= 1e-12 and total <= 1e-10 and purity <= 1e-10
    report(capsys, 5, "symplecticity over 1e4 steps", ok,
           f"per-step {step_drift:.2e}, end-to-end {total:.2e}, purity {purity:.2e}")


def test_criterion_06_microcausality(capsys, experiment):
    res = experiment("microcausality_check")
    assert len(res.output.rows) == 1000
    report_run(capsys, 6, "microcausality over 1000 pairs", res)


def test_criterion_07_anomaly(capsys, experiment):
    report_run(capsys, 7, "anomaly", experiment("anomaly_check"))


def test_criterion_08_bogoliubov(capsys, experiment):
    res = experiment("quench_bogoliubov")
    assert {"quench_norm_defect", "curved_norm_defect", "quench_vs_analytic"} <= set(checks_of(res))
    report_run(capsys, 8, "Bogoliubov canonical relations", res)


def test_criterion_09_boost_vacuum(capsys, experiment):
    report_run(capsys, 9, "boost vacuum", experiment("boost_vacuum"))


def test_criterion_10_qrf(capsys, experiment):
    report_run(capsys, 10, "QRF particle creation", experiment("qrf_particle_creation"))


def test_criterion_11_residuals(capsys, experiment):
    ts, hz = experiment("ts_residual"), experiment("heisenberg_residual")
    ok = ts.exit_code == 0 and hz.exit_code == 0
    report(capsys, 11, "TS and Heisenberg residuals", ok, f"TS: {summarize(ts)}; Heisenberg: {summarize(hz)}")


def test_criterion_12_trinity(capsys, experiment):
    res = experiment("trinity_battery")
    assert len(res.output.rows) == 20
    report_run(capsys, 12, "trinity battery", res)


def test_criterion_13_reproducibility(capsys, tmp_path):
    differing = []
    for name in ("qrf_particle_creation", "microcausality_check", "foliation_independence"):
        cfg = parse_config(default_config(name, quick=name == "foliation_independence"))
        run(cfg, out_dir=tmp_path / name / "a", threads=2)
        run(cfg, out_dir=tmp_path / name / "b", threads=2)
        for f in ("results.csv", "manifest.json"):
            if (tmp_path / name / "a" / f).read_bytes() != (tmp_path / name / "b" / f).read_bytes():
                differing.append(f"{name}/{f}")
    report(capsys, 13, "byte-identical reruns", not differing, ", ".join(differing) or "all outputs identical")
