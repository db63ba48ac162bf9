"""Lattice, phase-space quadratic forms, stress-energy densities and mode frames.

Phase-space convention
----------------------
The field on site ``i`` is carried by the canonical pair

    q_i = sqrt(dx) * phi(x_i),    p_i = sqrt(dx) * pi(x_i),

so that ``[q_i, p_j] = i delta_ij`` and ``z = (q_1..q_N, p_1..p_N)``.  A
:class:`QuadraticForm` with matrix ``M`` and offset ``c`` stands for the Weyl
ordered operator ``0.5 * z^T M z + c``.  Densities returned by this module are
integrated over one lattice cell, so a smeared observable is a plain sum over
sites.
"""
from __future__ import annotations

import functools

import enum
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    CurvedEmbedding,
    DimensionMismatch,
    InvalidEmbedding,
    MasslessZeroMode,
)

SYMMETRY_RTOL = 1e-14


class Boundary(str, enum.Enum):
    PERIODIC = "periodic"
    FIXED_ZERO = "fixed-zero"


@dataclass(frozen=True)
class LatticeSpec:
    """Spatial lattice of ``n_sites`` points with spacing ``spacing``.

    Sites sit at labels ``x_i = (i - (N-1)/2) * dx``.  With fixed-zero
    boundaries the field vanishes on ghost sites one spacing beyond each end.
    """

    n_sites: int
    spacing: float
    mass: float = 0.0
    boundary: Boundary = Boundary.FIXED_ZERO

    def __post_init__(self):
        if isinstance(self.n_sites, bool) or int(self.n_sites) != self.n_sites:
            raise ValueError("n_sites must be an integer")
        object.__setattr__(self, "n_sites", int(self.n_sites))
        object.__setattr__(self, "spacing", float(self.spacing))
        object.__setattr__(self, "mass", float(self.mass))
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if self.n_sites < 4:
            raise ValueError("n_sites must be >= 4")
        if not np.isfinite(self.spacing) or self.spacing <= 0:
            raise ValueError("spacing must be positive")
        if not np.isfinite(self.mass) or self.mass < 0:
            raise ValueError("mass must be nonnegative")

    @property
    def length(self) -> float:
        return self.n_sites * self.spacing

    @property
    def periodic(self) -> bool:
        return self.boundary is Boundary.PERIODIC

    @property
    def labels(self) -> np.ndarray:
        n = self.n_sites
        return (np.arange(n) - 0.5 * (n - 1)) * self.spacing

    @property
    def phase_dim(self) -> int:
        return 2 * self.n_sites

    def with_mass(self, mass: float) -> "LatticeSpec":
        return LatticeSpec(self.n_sites, self.spacing, mass, self.boundary)


def symplectic_matrix(n: int) -> np.ndarray:
    """Standard symplectic matrix ``[[0, I], [-I, 0]]`` of size ``2n``."""
    omega = np.zeros((2 * n, 2 * n))
    omega[:n, n:] = np.eye(n)
    omega[n:, :n] = -np.eye(n)
    return omega


# ---------------------------------------------------------------------------
# difference operators


@functools.lru_cache(maxsize=64)
def link_difference(spec: LatticeSpec) -> sp.csr_matrix:
    """Forward difference on links, ``(f_{l+1} - f_l) / dx``.

    Periodic lattices have ``N`` links (the last one wraps).  Fixed-zero
    lattices have ``N + 1`` links, the first and last touching a ghost site.
    """
    n, dx = spec.n_sites, spec.spacing
    if spec.periodic:
        rows = np.repeat(np.arange(n), 2)
        cols = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1).ravel()
        vals = np.tile([-1.0, 1.0], n)
        return sp.csr_matrix((vals / dx, (rows, cols)), shape=(n, n))
    d = sp.lil_matrix((n + 1, n))
    for link in range(n + 1):
        if link - 1 >= 0:
            d[link, link - 1] = -1.0
        if link < n:
            d[link, link] = 1.0
    return (d.tocsr() / dx).tocsr()


@functools.lru_cache(maxsize=64)
def link_share(spec: LatticeSpec) -> sp.csr_matrix:
    """Weight with which each link's gradient energy is booked on each site.

    Interior links are split evenly between their two sites; a link touching
    a ghost site belongs entirely to its one real site.  Shape ``(N, links)``.
    """
    n = spec.n_sites
    if spec.periodic:
        rows = np.repeat(np.arange(n), 2)
        cols = np.stack([(np.arange(n) - 1) % n, np.arange(n)], axis=1).ravel()
        return sp.csr_matrix((np.full(2 * n, 0.5), (rows, cols)), shape=(n, n))
    w = sp.lil_matrix((n, n + 1))
    for i in range(n):
        w[i, i] = 0.5
        w[i, i + 1] = 0.5
    w[0, 0] = 1.0
    w[n - 1, n] = 1.0
    return w.tocsr()


@functools.lru_cache(maxsize=64)
def centered_difference(spec: LatticeSpec) -> sp.csr_matrix:
    """Centered first derivative ``(f_{i+1} - f_{i-1}) / (2 dx)`` on field data."""
    n, dx = spec.n_sites, spec.spacing
    d = sp.lil_matrix((n, n))
    for i in range(n):
        for off, sign in ((1, 1.0), (-1, -1.0)):
            j = i + off
            if spec.periodic:
                d[i, j % n] += sign
            elif 0 <= j < n:
                d[i, j] += sign
    return (d.tocsr() / (2.0 * dx)).tocsr()


def lattice_wavenumbers(spec: LatticeSpec) -> tuple[np.ndarray, np.ndarray]:
    """Integer mode labels and coordinate wavenumbers of the lattice modes."""
    n = spec.n_sites
    if spec.periodic:
        labels = np.arange(n) - (n - 1) // 2
        k = 2.0 * np.pi * labels / spec.length
    else:
        labels = np.arange(1, n + 1)
        k = np.pi * labels / ((n + 1) * spec.spacing)
    return labels, k


def lattice_dispersion(k, spacing: float, mass: float):
    """``omega_k = sqrt(m^2 + (4/dx^2) sin^2(k dx / 2))``."""
    k = np.asarray(k, dtype=float)
    return np.sqrt(mass**2 + (4.0 / spacing**2) * np.sin(0.5 * k * spacing) ** 2)


def mode_profiles(spec: LatticeSpec) -> np.ndarray:
    """Orthonormal site profiles ``f_k(x_i)`` as columns (complex for periodic)."""
    n = spec.n_sites
    labels, k = lattice_wavenumbers(spec)
    idx = np.arange(n)
    if spec.periodic:
        return np.exp(1j * np.outer(idx, 2.0 * np.pi * labels / n)) / np.sqrt(n)
    return np.sqrt(2.0 / (n + 1)) * np.sin(np.pi * np.outer(idx + 1, labels) / (n + 1))


def flat_stiffness(spec: LatticeSpec, mass: float | None = None) -> np.ndarray:
    """Potential matrix ``K`` of the flat lattice Hamiltonian ``p^2/2 + q^T K q / 2``."""
    m = spec.mass if mass is None else mass
    d = link_difference(spec)
    k = (d.T @ d).toarray() + m**2 * np.eye(spec.n_sites)
    return 0.5 * (k + k.T)


# ---------------------------------------------------------------------------
# quadratic forms


class QuadraticForm:
    """Weyl-ordered quadratic observable ``0.5 z^T M z + offset``.

    ``matrix`` may be given dense or as a scipy sparse matrix; both views are
    available through :attr:`matrix` and :attr:`sparse`.
    """

    __slots__ = ("_dense", "_sparse", "offset", "dim")

    def __init__(self, matrix, offset: float = 0.0, *, check: bool = True):
        if sp.issparse(matrix):
            m = sp.csr_matrix(matrix, dtype=float)
            dense = None
        else:
            dense = np.array(matrix, dtype=float)
            m = None
        shape = (m if m is not None else dense).shape
        if len(shape) != 2 or shape[0] != shape[1] or shape[0] % 2:
            raise DimensionMismatch(f"quadratic form must be 2N x 2N, got {shape}")
        if check:
            if m is not None:
                asym = abs(m - m.T).max() if m.nnz else 0.0
                scale = abs(m).max() if m.nnz else 0.0
            else:
                asym = np.max(np.abs(dense - dense.T))
                scale = np.max(np.abs(dense))
            if asym > SYMMETRY_RTOL * max(1.0, scale):
                raise ValueError(f"matrix not symmetric (defect {asym:.3e})")
            if m is not None:
                m = ((m + m.T) * 0.5).tocsr()
            else:
                dense = 0.5 * (dense + dense.T)
        self._dense = dense
        self._sparse = m
        self.offset = float(offset)
        self.dim = shape[0]

    @property
    def n_sites(self) -> int:
        return self.dim // 2

    @property
    def matrix(self) -> np.ndarray:
        if self._dense is None:
            self._dense = self._sparse.toarray()
        return self._dense

    @property
    def sparse(self) -> sp.csr_matrix:
        if self._sparse is None:
            self._sparse = sp.csr_matrix(self._dense)
        return self._sparse

    @classmethod
    def zero(cls, n_sites: int) -> "QuadraticForm":
        return cls(sp.csr_matrix((2 * n_sites, 2 * n_sites)), 0.0, check=False)

    def _check_dim(self, other: "QuadraticForm"):
        if self.dim != other.dim:
            raise DimensionMismatch(f"{self.dim} vs {other.dim}")

    def __add__(self, other: "QuadraticForm") -> "QuadraticForm":
        self._check_dim(other)
        if self._dense is None and other._dense is None:
            return QuadraticForm(self._sparse + other._sparse, self.offset + other.offset, check=False)
        return QuadraticForm(self.matrix + other.matrix, self.offset + other.offset, check=False)

    def __sub__(self, other: "QuadraticForm") -> "QuadraticForm":
        return self + other.scaled(-1.0)

    def scaled(self, factor: float) -> "QuadraticForm":
        if self._dense is None:
            return QuadraticForm(self._sparse * factor, self.offset * factor, check=False)
        return QuadraticForm(self._dense * factor, self.offset * factor, check=False)

    def expectation(self, mean: np.ndarray, covariance: np.ndarray) -> float:
        """Expectation in a Gaussian state: ``tr(M S)/2 + m^T M m / 2 + offset``."""
        if covariance.shape != (self.dim, self.dim):
            raise DimensionMismatch("state and form sizes differ")
        if self._dense is None:
            m = self._sparse
            coo = m.tocoo()
            tr = float(np.dot(coo.data, covariance[coo.row, coo.col]))
            quad = float(mean @ (m @ mean))
        else:
            tr = float(np.sum(self._dense * covariance))
            quad = float(mean @ self._dense @ mean)
        return 0.5 * tr + 0.5 * quad + self.offset

    def is_zero(self) -> bool:
        if self._dense is None:
            return self._sparse.count_nonzero() == 0 and self.offset == 0.0
        return not np.any(self._dense) and self.offset == 0.0

    def symmetry_defect(self) -> float:
        a = self.matrix
        return float(np.max(np.abs(a - a.T)))

    def __repr__(self):
        return f"QuadraticForm(dim={self.dim}, offset={self.offset:g})"


def commutator_form(a: QuadraticForm, b: QuadraticForm) -> QuadraticForm:
    """Form of ``(1/i)[A, B]``.

    For ``A = z^T A z / 2`` and ``B = z^T B z / 2`` the commutator is again
    quadratic with matrix ``A Omega B - B Omega A``, which is symmetric by
    construction.  Weyl ordering leaves no c-number, so the offset is zero.
    """
    a._check_dim(b)
    n = a.n_sites
    if a._dense is None and b._dense is None:
        omega = sp.csr_matrix(symplectic_matrix(n))
        c = a._sparse @ omega @ b._sparse
        return QuadraticForm((c + c.T).tocsr(), 0.0, check=False)
    omega = symplectic_matrix(n)
    c = a.matrix @ omega @ b.matrix
    return QuadraticForm(c + c.T, 0.0, check=False)


# ---------------------------------------------------------------------------
# canonical densities


def _geometry(emb):
    from .embedding_geometry import embedding_derivatives, induced_metric

    tp, xp = embedding_derivatives(emb)
    return tp, xp, induced_metric(emb)


@functools.lru_cache(maxsize=64)
def _canonical_pattern(spec: LatticeSpec) -> dict:
    """Sparsity pattern shared by every :func:`canonical_form` on ``spec``."""
    n = spec.n_sites
    d = link_difference(spec).tocoo()
    # (d^T W d)_{ij} = sum_l d_li w_l d_lj: pair up entries sharing a link
    g_rows, g_cols, g_link, g_val = [], [], [], []
    by_link: dict[int, list] = {}
    for l, j, v in zip(d.row, d.col, d.data):
        by_link.setdefault(int(l), []).append((int(j), float(v)))
    for l, ents in by_link.items():
        for i, vi in ents:
            for j, vj in ents:
                g_rows.append(i)
                g_cols.append(j)
                g_link.append(l)
                g_val.append(vi * vj)
    c = centered_difference(spec).tocoo()
    # qp block: (diag(shift) C)^T sits at [q=col, p=row]; its transpose mirrors it
    ar = np.arange(n)
    rows = np.concatenate([g_rows, ar, c.col, n + c.row, n + ar])
    cols = np.concatenate([g_cols, ar, n + c.row, c.col, n + ar])
    return {"share_t": link_share(spec).T.tocsr(), "g_link": np.array(g_link, dtype=int),
            "g_val": np.array(g_val), "c_row": c.row.astype(int), "c_val": c.data.copy(),
            "rows": rows.astype(int), "cols": cols.astype(int)}


def canonical_form(spec: LatticeSpec, gamma: np.ndarray, lapse: np.ndarray,
                   shift: np.ndarray, mass: float | None = None) -> QuadraticForm:
    """Cell-integrated ``sum_i N_i H_perp(i) + N^x_i H_x(i)`` as a sparse form.

    ``H_perp = (pi^2/sqrt(g) + sqrt(g) (phi'^2/g + m^2 phi^2)) / 2`` and
    ``H_x = pi phi'``.  The gradient energy lives on links and is shared
    between neighbouring sites; the momentum density uses the centered
    difference.
    """
    n = spec.n_sites
    m = spec.mass if mass is None else mass
    gamma = np.asarray(gamma, dtype=float)
    lapse = np.asarray(lapse, dtype=float)
    shift = np.asarray(shift, dtype=float)
    if not (gamma.shape == lapse.shape == shift.shape == (n,)):
        raise DimensionMismatch("per-site arrays must have n_sites entries")
    root = np.sqrt(gamma)
    pat = _canonical_pattern(spec)
    link_w = pat["share_t"] @ (lapse / root)
    vals = np.concatenate([
        link_w[pat["g_link"]] * pat["g_val"],
        lapse * root * m**2,
        shift[pat["c_row"]] * pat["c_val"],
        shift[pat["c_row"]] * pat["c_val"],
        lapse / root,
    ])
    mat = sp.csr_matrix((vals, (pat["rows"], pat["cols"])), shape=(2 * n, 2 * n))
    return QuadraticForm(mat, 0.0, check=False)


@dataclass(frozen=True)
class StressEnergy:
    """Per-site stress-energy forms ``T^nu_mu`` on one embedding.

    Indices use signature (-, +).  The flux that generates a deformation
    ``v`` is ``h_mu = -n_nu T^nu_mu`` with ``n_nu = eps_{nu rho} dX^rho/dx``
    the densitized conormal (``(1, 0)`` on the flat slice).
    """

    spec: LatticeSpec
    gamma: np.ndarray
    a_lower: np.ndarray  # coefficient of pi in d_mu phi, shape (N, 2)
    b_lower: np.ndarray  # coefficient of phi' in d_mu phi
    conormal: np.ndarray

    def _blocks(self, i: int):
        spec = self.spec
        n = spec.n_sites
        e_i = sp.csr_matrix(([1.0], ([0], [i])), shape=(1, n))
        d = link_difference(spec)
        share = link_share(spec)
        grad = d.T @ sp.diags(share[i].toarray().ravel()) @ d
        zero = sp.csr_matrix((n, n))
        pp = sp.bmat([[zero, None], [None, (e_i.T @ e_i) * 2.0]], format="csr")
        gg = sp.bmat([[grad * 2.0, None], [None, zero]], format="csr")
        mm = sp.bmat([[(e_i.T @ e_i) * 2.0, None], [None, zero]], format="csr")
        cq = (e_i.T @ (e_i @ centered_difference(spec))).T
        pg = sp.bmat([[zero, cq], [cq.T, zero]], format="csr")
        # each block is written so that 0.5 z^T B z equals the named product
        return pp, gg, mm, pg

    def component(self, i: int, nu: int, mu: int) -> QuadraticForm:
        """Cell-integrated ``T^nu_mu`` at site ``i``."""
        pp, gg, mm, pg = self._blocks(i)
        eta = np.array([-1.0, 1.0])
        a, b = self.a_lower[i], self.b_lower[i]
        g = self.gamma[i]
        m2 = self.spec.mass**2
        a_up, b_up = eta[nu] * a[nu], eta[nu] * b[nu]
        mat = a_up * a[mu] * pp + (a_up * b[mu] + b_up * a[mu]) * pg + b_up * b[mu] * gg
        if nu == mu:
            mat = mat - 0.5 * ((-1.0 / g) * pp + (1.0 / g) * gg + m2 * mm)
        return QuadraticForm(mat.tocsr(), 0.0, check=False)

    def flux(self, i: int, mu: int) -> QuadraticForm:
        """``h_mu(i) = -n_nu T^nu_mu`` at site ``i``."""
        out = self.component(i, 0, mu).scaled(-self.conormal[i, 0])
        return out + self.component(i, 1, mu).scaled(-self.conormal[i, 1])


def stress_energy_forms(spec: LatticeSpec, emb) -> StressEnergy:
    """Stress-energy forms of the lattice field on the hypersurface ``emb``.

    Raises :class:`InvalidEmbedding` if ``emb`` has the wrong size; spacelike
    validity is enforced by the embedding itself.
    """
    if emb.n_sites != spec.n_sites:
        raise InvalidEmbedding("embedding and lattice sizes differ")
    tp, xp, gamma = _geometry(emb)
    # lowered unit normal n_mu = (-X', T')/sqrt(g); d_mu phi = -n_mu pi/sqrt(g) + X'_mu phi'/g
    a_lower = np.stack([xp, -tp], axis=1) / gamma[:, None]
    b_lower = np.stack([-tp, xp], axis=1) / gamma[:, None]
    conormal = np.stack([xp, -tp], axis=1)
    return StressEnergy(spec, gamma, a_lower, b_lower, conormal)


# ---------------------------------------------------------------------------
# mode frames


@dataclass(frozen=True)
class ModeFrame:
    """Mode functions ``u_k`` and their normal derivatives on one embedding.

    Columns of ``u`` and ``udot`` are modes; ``labels`` are the integer lattice
    labels and ``wavenumbers`` the coordinate wavenumbers.
    """

    u: np.ndarray
    udot: np.ndarray
    labels: np.ndarray
    wavenumbers: np.ndarray
    embedding: object
    spec: LatticeSpec
    frequencies: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def n_modes(self) -> int:
        return self.u.shape[1]

    def phase_vectors(self) -> np.ndarray:
        """Complex phase-space data ``(q, p)`` of every mode, shape ``(2N, K)``."""
        from .embedding_geometry import induced_metric

        root = np.sqrt(induced_metric(self.embedding))
        s = np.sqrt(self.spec.spacing)
        return np.vstack([s * self.u, s * root[:, None] * self.udot])

    @classmethod
    def from_phase_vectors(cls, zeta: np.ndarray, template: "ModeFrame", emb,
                           spec: LatticeSpec | None = None) -> "ModeFrame":
        from .embedding_geometry import induced_metric

        spec = template.spec if spec is None else spec
        n = spec.n_sites
        root = np.sqrt(induced_metric(emb))
        s = np.sqrt(spec.spacing)
        return cls(zeta[:n] / s, zeta[n:] / (s * root[:, None]), template.labels,
                   template.wavenumbers, emb, spec, template.frequencies,
                   dict(template.diagnostics))

    def retained(self, cutoff: float = np.pi / 2) -> np.ndarray:
        """Boolean mask of modes with ``|k| dx <= cutoff``."""
        return np.abs(self.wavenumbers) * self.spec.spacing <= cutoff + 1e-12


def kg_inner_product(a, b, emb) -> complex:
    """Klein-Gordon product of two mode pairs ``(u, udot)`` on ``emb``.

    ``(a, b) = i sum_x sqrt(g) dx [conj(a) udot_b - b conj(udot_a)]``, the
    normalization that gives positive-frequency modes unit norm.  Arrays may
    carry extra trailing axes (columns of several modes).
    """
    from .embedding_geometry import induced_metric

    ua, va = (np.asarray(x) for x in a)
    ub, vb = (np.asarray(x) for x in b)
    n = emb.n_sites
    if ua.shape[0] != n or ub.shape[0] != n or ua.shape != va.shape or ub.shape != vb.shape:
        raise DimensionMismatch("mode data does not match the embedding lattice")
    w = np.sqrt(induced_metric(emb)) * emb.spec.spacing
    return 1j * np.sum(w * (np.conj(ua) * vb - ub * np.conj(va)))


def kg_matrix(zeta_a: np.ndarray, zeta_b: np.ndarray) -> np.ndarray:
    """All pairwise Klein-Gordon products from phase vectors: ``i A^H Omega B``."""
    if zeta_a.shape[0] != zeta_b.shape[0]:
        raise DimensionMismatch("phase vectors of different size")
    n = zeta_a.shape[0] // 2
    omega_b = np.concatenate([zeta_b[n:], -zeta_b[:n]])
    return 1j * (np.conj(zeta_a).T @ omega_b)


def flat_mode_frame(spec: LatticeSpec, emb) -> ModeFrame:
    """Positive-frequency plane (or standing) waves on an affine embedding.

    Frequencies follow the lattice dispersion in proper length, so a slice with
    constant metric ``g`` has ``omega^2 = m^2 + (4/dx^2) sin^2(k dx/2) / g``.
    On a massless periodic lattice the zero mode is dropped and flagged.
    """
    from .embedding_geometry import induced_metric, is_affine

    if emb.n_sites != spec.n_sites:
        raise DimensionMismatch("embedding and lattice sizes differ")
    if not is_affine(emb):
        raise CurvedEmbedding("flat_mode_frame needs an affine embedding")
    g = float(np.mean(induced_metric(emb)))
    labels, k = lattice_wavenumbers(spec)
    lam = (4.0 / spec.spacing**2) * np.sin(0.5 * k * spec.spacing) ** 2
    omega = np.sqrt(spec.mass**2 + lam / g)
    prof = mode_profiles(spec).astype(complex)
    diagnostics = {"zero_mode_excluded": False}
    keep = omega > 0
    if not np.all(keep):
        warnings.warn("massless periodic lattice: zero mode excluded", MasslessZeroMode, stacklevel=2)
        diagnostics["zero_mode_excluded"] = True
    prof, labels, k, omega = prof[:, keep], labels[keep], k[keep], omega[keep]
    u = prof / np.sqrt(2.0 * omega * np.sqrt(g) * spec.spacing)
    udot = -1j * omega * u
    return ModeFrame(u, udot, labels, k, emb, spec, omega, diagnostics)


def check_orthonormal(frame: ModeFrame) -> tuple[float, float]:
    """Largest deviations of ``(u_j, u_k) - delta`` and ``(u_j, u_k*)``."""
    z = frame.phase_vectors()
    g1 = kg_matrix(z, z)
    g2 = kg_matrix(z, np.conj(z))
    return (float(np.max(np.abs(g1 - np.eye(z.shape[1])))), float(np.max(np.abs(g2))))


def smearing_support(forms: Sequence[QuadraticForm]) -> list[np.ndarray]:
    """Sites touched by each form (rows with a nonzero entry)."""
    out = []
    for f in forms:
        s = f.sparse
        rows = np.unique(s.nonzero()[0])
        out.append(rows)
    return out
