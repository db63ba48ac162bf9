import warnings

import numpy as np
import pytest
import scipy.sparse as sp
import sympy as sym
from hypothesis import given
from hypothesis import strategies as st

from pftsim import (
    Boundary,
    LatticeSpec,
    QuadraticForm,
    canonical_form,
    commutator_form,
    flat_embedding,
    flat_mode_frame,
    kg_inner_product,
    lattice_dispersion,
    stress_energy_forms,
    symplectic_matrix,
)
from pftsim.embedding_geometry import bump_embedding, induced_metric, tilted_embedding
from pftsim.errors import CurvedEmbedding, DimensionMismatch, InvalidEmbedding, MasslessZeroMode
from pftsim.field_model import check_orthonormal, flat_stiffness, kg_matrix, smearing_support
from pftsim.foliation import lapse_shift
from pftsim.hamiltonian import flat_hamiltonian


def dense_canonical(spec, gamma, lapse, shift, mass):
    """Hand-rolled loop assembly of the canonical generator, no sparse helpers."""
    n, dx = spec.n_sites, spec.spacing
    m = np.zeros((2 * n, 2 * n))
    w_site = lapse / np.sqrt(gamma)
    links = [(i, (i + 1) % n) for i in range(n)] if spec.periodic else [(i, i + 1) for i in range(n - 1)]
    for i, j in links:
        w = 0.5 * (w_site[i] + w_site[j])
        for a, b, s in ((i, i, 1), (j, j, 1), (i, j, -1), (j, i, -1)):
            m[a, b] += s * w / dx**2
    if not spec.periodic:
        # ghost links carry the full weight of their real site
        m[0, 0] += w_site[0] / dx**2
        m[n - 1, n - 1] += w_site[n - 1] / dx**2
    for i in range(n):
        m[i, i] += lapse[i] * np.sqrt(gamma[i]) * mass**2
        m[n + i, n + i] += lapse[i] / np.sqrt(gamma[i])
        for j, sgn in (((i + 1), 1.0), ((i - 1), -1.0)):
            if spec.periodic:
                j %= n
            elif not 0 <= j < n:
                continue
            m[j, n + i] += sgn * shift[i] / (2 * dx)
            m[n + i, j] += sgn * shift[i] / (2 * dx)
    return m


# -- lattice -----------------------------------------------------------------


def test_lattice_validation():
    with pytest.raises(ValueError):
        LatticeSpec(3, 0.1)
    with pytest.raises(ValueError):
        LatticeSpec(8, 0.0)
    with pytest.raises(ValueError):
        LatticeSpec(8, 0.1, mass=-1.0)
    with pytest.raises(ValueError):
        LatticeSpec(8.5, 0.1)
    spec = LatticeSpec(8, 0.5, boundary="periodic")
    assert spec.boundary is Boundary.PERIODIC
    assert spec.labels[0] == pytest.approx(-1.75)
    assert spec.length == 4.0


def test_symplectic_matrix_shape():
    om = symplectic_matrix(3)
    assert np.array_equal(om @ om, -np.eye(6))
    assert np.array_equal(om.T, -om)


def test_form_rejects_asymmetric_and_odd():
    with pytest.raises(ValueError):
        QuadraticForm(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(DimensionMismatch):
        QuadraticForm(np.eye(3))


def test_form_expectation_dense_and_sparse_agree(rng):
    a = rng.standard_normal((8, 8))
    a = a + a.T
    mean = rng.standard_normal(8)
    cov = np.eye(8) * 0.5
    d = QuadraticForm(a, 0.3)
    s = QuadraticForm(sp.csr_matrix(a), 0.3)
    want = 0.5 * np.trace(a @ cov) + 0.5 * mean @ a @ mean + 0.3
    assert d.expectation(mean, cov) == pytest.approx(want, rel=1e-13)
    assert s.expectation(mean, cov) == pytest.approx(want, rel=1e-13)


# -- commutators ---------------------------------------------------------------


def test_commutator_of_squares_gives_symmetrized_product():
    # A = q^2, B = p^2 (single site): (1/i)[q^2, p^2] = 2 (qp + pq), i.e. z^T M z / 2 with M = [[0,4],[4,0]]
    a = QuadraticForm(np.diag([2.0, 0.0]))
    b = QuadraticForm(np.diag([0.0, 2.0]))
    c = commutator_form(a, b)
    assert np.allclose(c.matrix, [[0.0, 4.0], [4.0, 0.0]])
    assert c.offset == 0.0


def test_commutator_oscillator_equations():
    # i[H, q] and i[H, p] for H = (p^2 + w^2 q^2)/2 reproduce the linear equations through the form algebra
    w = 1.7
    h = QuadraticForm(np.diag([w * w, 1.0]))
    # (1/i)[q^2/2 , H] = (qp + pq)/2: matrix [[0,1],[1,0]]
    c = commutator_form(QuadraticForm(np.diag([1.0, 0.0])), h)
    assert np.allclose(c.matrix, [[0.0, 1.0], [1.0, 0.0]])


@given(st.integers(0, 2**32 - 1))
def test_commutator_antisymmetric_and_self_zero(seed):
    r = np.random.default_rng(seed)
    a = r.standard_normal((6, 6))
    b = r.standard_normal((6, 6))
    fa, fb = QuadraticForm(a + a.T), QuadraticForm(b + b.T)
    assert np.max(np.abs(commutator_form(fa, fa).matrix)) < 1e-12
    s = commutator_form(fa, fb).matrix + commutator_form(fb, fa).matrix
    assert np.max(np.abs(s)) < 1e-12
    assert commutator_form(fa, fb).symmetry_defect() < 1e-12


def test_commutator_jacobi(rng):
    forms = []
    for _ in range(3):
        a = rng.standard_normal((6, 6))
        forms.append(QuadraticForm(a + a.T))
    a, b, c = forms
    j = (commutator_form(a, commutator_form(b, c)).matrix
         + commutator_form(b, commutator_form(c, a)).matrix
         + commutator_form(c, commutator_form(a, b)).matrix)
    assert np.max(np.abs(j)) < 1e-10


# -- canonical forms -------------------------------------------------------


@pytest.mark.parametrize("boundary", ["periodic", "fixed-zero"])
def test_canonical_form_matches_loop_assembly(boundary, rng):
    spec = LatticeSpec(9, 0.3, mass=0.7, boundary=boundary)
    gamma = 0.5 + rng.random(9)
    lapse = 0.5 + rng.random(9)
    shift = rng.standard_normal(9)
    got = canonical_form(spec, gamma, lapse, shift).matrix
    want = dense_canonical(spec, gamma, lapse, shift, 0.7)
    assert np.max(np.abs(got - want)) < 1e-12
    assert np.max(np.abs(got - got.T)) == 0.0


def test_flat_hamiltonian_is_kg():
    spec = LatticeSpec(12, 0.25, mass=1.3)
    h = flat_hamiltonian(spec).matrix
    n = spec.n_sites
    assert np.allclose(h[:n, :n], flat_stiffness(spec), atol=1e-12)
    assert np.allclose(h[n:, n:], np.eye(n), atol=1e-14)
    assert np.max(np.abs(h[:n, n:])) < 1e-14


def test_flat_spectrum_is_lattice_dispersion():
    spec = LatticeSpec(16, 0.2, mass=0.8, boundary="periodic")
    w2 = np.sort(np.linalg.eigvalsh(flat_stiffness(spec)))
    k = 2 * np.pi * (np.arange(16) - 7) / spec.length
    want = np.sort(lattice_dispersion(k, 0.2, 0.8) ** 2)
    assert np.allclose(w2, want, rtol=1e-12)


def test_tilted_slice_adm_coefficients():
    # T = lam x: gamma = 1 - lam^2, and a unit time translation has lapse 1/sqrt(gamma), shift -lam/gamma
    lam, m = 0.4, 0.9
    spec = LatticeSpec(10, 0.2, mass=m, boundary="periodic")
    emb = tilted_embedding(spec, lam)
    g = induced_metric(emb)
    assert np.allclose(g, 1 - lam * lam, rtol=1e-14)
    lapse, shift = lapse_shift(emb, np.tile([1.0, 0.0], (10, 1)))
    assert np.allclose(lapse, 1 / np.sqrt(1 - lam * lam))
    assert np.allclose(shift, -lam / (1 - lam * lam))
    form = canonical_form(spec, g, lapse, shift).matrix
    n, dx = 10, 0.2
    root = np.sqrt(1 - lam * lam)
    # pi^2 coefficient N / sqrt(g), mass coefficient N sqrt(g) m^2, gradient N / sqrt(g), pi phi' coefficient N^x
    assert np.allclose(np.diag(form)[n:], lapse / root)
    assert np.allclose(np.diag(form)[:n], 2 * lapse / root / dx**2 + lapse * root * m * m)
    assert form[1, n + 0] == pytest.approx(shift[0] / (2 * dx))


def test_stress_energy_densities_sympy_oracle():
    """Pointwise flux -n_nu T^nu_mu v^mu equals N H_perp + N^x H_x for a generic slice."""
    tp, xp, at, ax, m, phi, lapse, shift = sym.symbols("Tp Xp A B m phi N Nx", real=True)
    g = xp**2 - tp**2
    eta = sym.diag(-1, 1)
    dphi = sym.Matrix([at, ax])  # partial_mu phi, lower index
    dphi_up = eta * dphi
    lag_kin = (dphi.T * dphi_up)[0]
    tmix = sym.zeros(2, 2)  # T^nu_mu
    for nu in range(2):
        for mu in range(2):
            tmix[nu, mu] = dphi_up[nu] * dphi[mu] - sym.KroneckerDelta(nu, mu) * (lag_kin + m**2 * phi**2) / 2
    conorm = sym.Matrix([xp, -tp])
    normal = sym.Matrix([xp, tp]) / sym.sqrt(g)
    v = lapse * normal + shift * sym.Matrix([tp, xp])
    flux = -sum(conorm[nu] * tmix[nu, mu] * v[mu] for nu in range(2) for mu in range(2))
    pi = xp * at + tp * ax  # sqrt(g) n^mu d_mu phi
    dphi_x = tp * at + xp * ax
    h_perp = (pi**2 / sym.sqrt(g) + sym.sqrt(g) * (dphi_x**2 / g + m**2 * phi**2)) / 2
    h_x = pi * dphi_x
    assert sym.simplify(flux - (lapse * h_perp + shift * h_x)) == 0

    # the lattice coefficient arrays reproduce d_mu phi from (pi, phi')
    spec = LatticeSpec(6, 0.1, boundary="periodic")
    emb = tilted_embedding(spec, 0.3)
    se = stress_energy_forms(spec, emb)
    tv, xv = 0.3, 1.0
    a_num, b_num = 0.37, -1.21
    pi_v, dx_v = xv * a_num + tv * b_num, tv * a_num + xv * b_num
    rec = se.a_lower[0] * pi_v + se.b_lower[0] * dx_v
    assert np.allclose(rec, [a_num, b_num])


@pytest.mark.parametrize("factory", ["tilted", "bump"])
def test_stress_energy_contraction_equals_canonical(factory):
    spec = LatticeSpec(16, 0.25, mass=0.6)
    emb = tilted_embedding(spec, 0.35) if factory == "tilted" else bump_embedding(spec, 0.3)
    se = stress_energy_forms(spec, emb)
    r = np.random.default_rng(3)
    v = np.stack([1.0 + 0.2 * r.random(16), 0.3 * r.standard_normal(16)], axis=1)
    total = np.zeros((32, 32))
    for i in range(16):
        for mu in range(2):
            total += v[i, mu] * se.flux(i, mu).matrix
    lapse, shift = lapse_shift(emb, v)
    want = canonical_form(spec, induced_metric(emb), lapse, shift).matrix
    assert np.max(np.abs(total - want)) < 1e-11


def test_stress_energy_wrong_size():
    spec = LatticeSpec(8, 0.1)
    with pytest.raises(InvalidEmbedding):
        stress_energy_forms(LatticeSpec(9, 0.1), flat_embedding(spec))


def test_smearing_support_local():
    spec = LatticeSpec(12, 0.1)
    se = stress_energy_forms(spec, flat_embedding(spec))
    supp = smearing_support([se.flux(5, 0)])[0]
    sites = np.unique(supp % 12)
    assert set(sites) <= {3, 4, 5, 6, 7}


# -- Klein-Gordon product and mode frames -------------------------------------


def test_flat_modes_orthonormal_both_boundaries():
    for boundary in ("periodic", "fixed-zero"):
        spec = LatticeSpec(16, 0.2, mass=1.0, boundary=boundary)
        fr = flat_mode_frame(spec, flat_embedding(spec))
        d1, d2 = check_orthonormal(fr)
        assert d1 < 1e-12 and d2 < 1e-12


def test_kg_product_identities(rng):
    spec = LatticeSpec(10, 0.2, mass=1.0, boundary="periodic")
    emb = flat_embedding(spec)
    fr = flat_mode_frame(spec, emb)
    a = (fr.u[:, 2], fr.udot[:, 2])
    assert kg_inner_product(a, a, emb) == pytest.approx(1.0, abs=1e-13)
    conj = (np.conj(a[0]), np.conj(a[1]))
    assert abs(kg_inner_product(conj, conj, emb) + 1.0) < 1e-13
    # real solutions have zero norm
    real = (np.real(a[0]), np.real(a[1]))
    assert abs(kg_inner_product(real, real, emb)) < 1e-14
    b = (rng.standard_normal(10) + 1j * rng.standard_normal(10), rng.standard_normal(10) + 0j)
    c = (rng.standard_normal(10) + 0j, rng.standard_normal(10) + 1j * rng.standard_normal(10))
    assert kg_inner_product(b, c, emb) == pytest.approx(np.conj(kg_inner_product(c, b, emb)), abs=1e-12)
    bc = (np.conj(b[0]), np.conj(b[1]))
    cc = (np.conj(c[0]), np.conj(c[1]))
    assert kg_inner_product(b, c, emb) == pytest.approx(-kg_inner_product(cc, bc, emb), abs=1e-12)


def test_kg_matrix_matches_pointwise_product():
    spec = LatticeSpec(8, 0.3, mass=0.5)
    emb = flat_embedding(spec)
    fr = flat_mode_frame(spec, emb)
    z = fr.phase_vectors()
    mat = kg_matrix(z, z)
    for j, k in ((0, 0), (1, 3), (5, 2)):
        want = kg_inner_product((fr.u[:, j], fr.udot[:, j]), (fr.u[:, k], fr.udot[:, k]), emb)
        assert mat[j, k] == pytest.approx(want, abs=1e-13)


def test_periodic_modes_diagonalize_hamiltonian():
    spec = LatticeSpec(8, 0.5, mass=0.9, boundary="periodic")
    fr = flat_mode_frame(spec, flat_embedding(spec))
    k = flat_stiffness(spec)
    # profiles are eigenvectors of K with eigenvalue omega^2
    prof = fr.u * np.sqrt(2 * fr.frequencies * spec.spacing)
    assert np.allclose(k @ prof, prof * fr.frequencies**2, atol=1e-12)


def test_massless_periodic_drops_zero_mode():
    spec = LatticeSpec(8, 0.5, boundary="periodic")
    with pytest.warns(MasslessZeroMode):
        fr = flat_mode_frame(spec, flat_embedding(spec))
    assert fr.n_modes == 7
    assert fr.diagnostics["zero_mode_excluded"]


def test_tilted_frame_dispersion_uses_proper_length():
    spec = LatticeSpec(12, 0.2, mass=1.0, boundary="periodic")
    emb = tilted_embedding(spec, 0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fr = flat_mode_frame(spec, emb)
    g = 0.75
    want = np.sqrt(1 + 4 / 0.04 * np.sin(fr.wavenumbers * 0.1) ** 2 / g)
    assert np.allclose(fr.frequencies, want)
    assert max(check_orthonormal(fr)) < 1e-12


def test_flat_mode_frame_rejects_curved():
    spec = LatticeSpec(16, 0.2)
    with pytest.raises(CurvedEmbedding):
        flat_mode_frame(spec, bump_embedding(spec, 0.2))


def test_kg_dimension_mismatch():
    spec = LatticeSpec(8, 0.3)
    emb = flat_embedding(spec)
    with pytest.raises(DimensionMismatch):
        kg_inner_product((np.zeros(7), np.zeros(7)), (np.zeros(8), np.zeros(8)), emb)
