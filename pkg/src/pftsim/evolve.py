"""Pure Gaussian states and their symplectic evolution between hypersurfaces.

A quadratic generator ``H = z^T M z / 2`` moves first moments and covariance
by ``S = exp(Omega M dt)``; the integrator uses the Cayley (implicit
midpoint) approximant ``(I - J dt/2)^{-1} (I + J dt/2)`` with ``J = Omega M``,
which is exactly symplectic.  The state's phase is the c-number part of the
generator plus its normal-ordered energy, where normal ordering subtracts the
flat-slice vacuum energy of the state's lattice.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .embedding_geometry import (
    DeformationVector,
    Embedding,
    flat_embedding,
    fmt,
    induced_metric,
    is_affine,
    translate,
    unit_normal,
)
from .errors import (
    DeformationNotSpacelike,
    InvalidEmbedding,
    LeafMismatch,
    NotSpacelike,
    StepTooLarge,
)
from .field_model import LatticeSpec, QuadraticForm, flat_stiffness, symplectic_matrix
from .foliation import Foliation
from .hamiltonian import SmearedHamiltonian, smear_flux

TINY = 1e-150
DRIFT_PROJECT = 1e-12
DEFAULT_MAX_STEP = 1.0
SUBSTEP_FRACTION = 0.1


# ---------------------------------------------------------------------------
# vacua


def vacuum_covariance(form: QuadraticForm | np.ndarray) -> np.ndarray:
    """Ground-state covariance of a positive-definite ``z^T M z / 2``.

    ``Sigma = M^{-1/2} |i G| M^{-1/2} / 2`` with ``G = M^{1/2} Omega M^{1/2}``.
    """
    m = form.matrix if isinstance(form, QuadraticForm) else np.asarray(form, dtype=float)
    w, v = np.linalg.eigh(m)
    if w.min() <= 0:
        raise ValueError("vacuum needs a positive-definite generator")
    root = (v * np.sqrt(w)) @ v.T
    inv_root = (v / np.sqrt(w)) @ v.T
    g = root @ symplectic_matrix(m.shape[0] // 2) @ root
    gw, gv = np.linalg.eigh(1j * g)
    abs_g = ((gv * np.abs(gw)) @ np.conj(gv).T).real
    sigma = 0.5 * inv_root @ abs_g @ inv_root
    return 0.5 * (sigma + sigma.T)


@lru_cache(maxsize=32)
def _flat_vacuum_cached(spec: LatticeSpec) -> tuple[np.ndarray, bool]:
    k = flat_stiffness(spec)
    w, v = np.linalg.eigh(k)
    w = np.clip(w, 0.0, None)
    omega = np.sqrt(w)
    regularized = False
    tiny = 1e-9 * max(1.0, omega.max())
    if np.any(omega <= tiny):
        # massless periodic zero mode: give it the lowest nonzero frequency
        floor = omega[omega > tiny].min()
        omega = np.where(omega <= tiny, floor, omega)
        regularized = True
    n = spec.n_sites
    cov = np.zeros((2 * n, 2 * n))
    cov[:n, :n] = 0.5 * (v / omega) @ v.T
    cov[n:, n:] = 0.5 * (v * omega) @ v.T
    cov = 0.5 * (cov + cov.T)
    cov.setflags(write=False)
    return cov, regularized


def flat_vacuum_covariance(spec: LatticeSpec) -> np.ndarray:
    """Vacuum covariance of the flat lattice Hamiltonian (read-only)."""
    return _flat_vacuum_cached(spec)[0]


@lru_cache(maxsize=32)
def flat_vacuum_energy(spec: LatticeSpec) -> float:
    from .hamiltonian import flat_hamiltonian

    return flat_hamiltonian(spec).expectation(np.zeros(2 * spec.n_sites), flat_vacuum_covariance(spec))


# ---------------------------------------------------------------------------
# states


@dataclass(frozen=True, eq=False)
class GaussianState:
    """First moments, covariance and phase of a pure Gaussian state on ``embedding``."""

    mean: np.ndarray
    covariance: np.ndarray
    phase: float
    embedding: Embedding
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = self.embedding.n_sites
        mean = np.array(self.mean, dtype=float)
        cov = np.array(self.covariance, dtype=float)
        if mean.shape != (2 * n,) or cov.shape != (2 * n, 2 * n):
            raise InvalidEmbedding("state size does not match its embedding")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "phase", float(self.phase))

    @property
    def spec(self) -> LatticeSpec:
        return self.embedding.spec

    @property
    def embedding_id(self) -> str:
        return self.embedding.key()

    def purity_defect(self) -> float:
        """``max |(2 Sigma Omega^{-1})^2 + I|``; zero for pure states."""
        n = self.spec.n_sites
        om_inv = -symplectic_matrix(n)
        a = 2.0 * self.covariance @ om_inv
        return float(np.max(np.abs(a @ a + np.eye(2 * n))))

    def is_positive(self) -> bool:
        return bool(np.linalg.eigvalsh(0.5 * (self.covariance + self.covariance.T)).min() > 0)

    def field_mean(self) -> tuple[np.ndarray, np.ndarray]:
        """``<phi(x_i)>`` and ``<pi(x_i)>`` in density units."""
        n = self.spec.n_sites
        s = np.sqrt(self.spec.spacing)
        return self.mean[:n] / s, self.mean[n:] / s

    def moved_to(self, emb: Embedding) -> "GaussianState":
        return replace(self, embedding=emb, diagnostics=dict(self.diagnostics))

    def to_csv(self) -> str:
        phi, pi = self.field_mean()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["site", "mean_phi", "mean_pi"])
        for i in range(len(phi)):
            w.writerow([i, fmt(phi[i]), fmt(pi[i])])
        return buf.getvalue()

    def covariance_csv(self) -> str:
        lines = [",".join(fmt(x) for x in row) for row in self.covariance]
        return "\n".join(lines) + "\n"

    def diagnostics_json(self) -> str:
        return json.dumps(_jsonable(self.diagnostics), sort_keys=True, indent=2) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(fmt(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def vacuum_state(spec: LatticeSpec, emb: Embedding | None = None) -> GaussianState:
    """Ground state of the normal-translation generator on an affine slice."""
    if emb is None:
        emb = flat_embedding(spec)
    if not is_affine(emb):
        raise InvalidEmbedding("vacuum_state needs an affine embedding")
    g = induced_metric(emb)
    if np.allclose(g, 1.0, rtol=0, atol=1e-13):
        cov = np.array(flat_vacuum_covariance(spec))
        regularized = _flat_vacuum_cached(spec)[1]
    else:
        n = unit_normal(emb)
        cov = vacuum_covariance(smear_flux(spec, emb, n).form)
        regularized = False
    return GaussianState(np.zeros(2 * spec.n_sites), cov, 0.0, emb,
                         {"zero_mode_regularized": regularized})


def coherent_state(spec: LatticeSpec, phi, pi=None, emb: Embedding | None = None) -> GaussianState:
    """Vacuum displaced to field mean ``phi(x_i)`` and momentum density ``pi(x_i)``."""
    base = vacuum_state(spec, emb)
    phi = np.asarray(phi, dtype=float)
    pi = np.zeros_like(phi) if pi is None else np.asarray(pi, dtype=float)
    s = np.sqrt(spec.spacing)
    return replace(base, mean=np.concatenate([s * phi, s * pi]))


# ---------------------------------------------------------------------------
# propagators


def symplectic_drift(s: np.ndarray) -> float:
    """``||S Omega S^T - Omega||_inf`` (max row sum)."""
    om = symplectic_matrix(s.shape[0] // 2)
    e = s @ om @ s.T - om
    return float(np.max(np.sum(np.abs(e), axis=1)))


def newton_project(s: np.ndarray) -> np.ndarray:
    """One Newton step toward the symplectic group: ``S <- (I + E Omega / 2) S``."""
    om = symplectic_matrix(s.shape[0] // 2)
    e = s @ om @ s.T - om
    e = 0.5 * (e - e.T)
    return s + 0.5 * (e @ om) @ s


@dataclass(frozen=True, eq=False)
class Propagator:
    """Symplectic matrix of a Gaussian unitary plus its c-number phase."""

    symplectic: np.ndarray
    phase_increment: float = 0.0
    source: Embedding | None = None
    target: Embedding | None = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    def drift(self) -> float:
        return symplectic_drift(self.symplectic)

    def apply(self, state: GaussianState, *, check_source: bool = True) -> GaussianState:
        if check_source and self.source is not None and not _same_leaf(state.embedding, self.source):
            raise LeafMismatch("state does not live on the propagator's source embedding")
        s = self.symplectic
        cov = s @ state.covariance @ s.T
        cov = 0.5 * (cov + cov.T)
        target = state.embedding if self.target is None else self.target
        return GaussianState(s @ state.mean, cov, state.phase + self.phase_increment, target,
                             dict(state.diagnostics))

    def then(self, other: "Propagator") -> "Propagator":
        """Apply ``self`` first, then ``other``."""
        return Propagator(other.symplectic @ self.symplectic,
                          self.phase_increment + other.phase_increment,
                          self.source, other.target)

    def inverse(self) -> "Propagator":
        n = self.symplectic.shape[0] // 2
        om = symplectic_matrix(n)
        inv = -om @ self.symplectic.T @ om
        return Propagator(inv, -self.phase_increment, self.target, self.source)


def _same_leaf(a: Embedding, b: Embedding) -> bool:
    if a.n_sites != b.n_sites:
        return False
    scale = max(1.0, float(np.max(np.abs(a.coords))))
    return a.same_geometry(b, atol=1e-12 * scale)


def _generator(form: QuadraticForm) -> sp.csr_matrix:
    n = form.n_sites
    m = form.sparse
    # Omega M: top rows take the p rows of M, bottom rows minus the q rows
    return sp.vstack([m[n:], -m[:n]], format="csr")


def frequency_bound(form: QuadraticForm) -> float:
    """Cheap upper estimate of the largest frequency of ``Omega M``."""
    n = form.n_sites
    m = form.sparse.tocoo()
    sums = np.zeros((3, n))
    top, left = m.row < n, m.col < n
    for slot, mask in enumerate((top & left, ~top & ~left, top & ~left)):
        np.add.at(sums[slot], m.row[mask] % n, np.abs(m.data[mask]))
    a, b, c = sums.max(axis=1)
    return float(np.sqrt(a * b) + c)


def _flush(a: np.ndarray) -> np.ndarray:
    # far off-diagonal entries decay into subnormals, which make BLAS crawl
    a[np.abs(a) < TINY] = 0.0
    return a


def cayley(form: QuadraticForm, dt: float, *, max_step: float = DEFAULT_MAX_STEP,
           project: bool = True) -> tuple[np.ndarray, float]:
    """Cayley propagator of ``form`` over ``dt`` and its symplectic drift.

    Raises :class:`StepTooLarge` if ``dt`` times the frequency bound exceeds
    ``max_step``.
    """
    if frequency_bound(form) * abs(dt) > max_step:
        raise StepTooLarge(f"step {dt:g} too large for generator (bound {frequency_bound(form):.3g})")
    dim = form.dim
    j = _generator(form) * (0.5 * dt)
    eye = sp.identity(dim, format="csc")
    lu = splu((eye - j).tocsc())
    s = _flush(lu.solve((eye + j).toarray()))
    drift = symplectic_drift(s)
    if project and drift > DRIFT_PROJECT:
        s = newton_project(s)
        drift = symplectic_drift(s)
    return s, drift


def _normal_ordered_energy(form: QuadraticForm, state_mean, state_cov, spec: LatticeSpec) -> float:
    ref = flat_vacuum_covariance(spec)
    return form.expectation(state_mean, state_cov) - form.expectation(np.zeros_like(state_mean), ref)


def step(state: GaussianState, h: SmearedHamiltonian | QuadraticForm, dt: float, *,
         target: Embedding | None = None, max_step: float = DEFAULT_MAX_STEP) -> GaussianState:
    """Advance ``state`` by ``dt`` under the generator ``h``.

    The phase changes by ``-dt (offset + anomaly_rate + <:H:>)`` with the
    normal-ordered energy evaluated as the average of start and end states.
    """
    return _advance(state, h, dt, target, max_step)[0]


def _advance(state, h, dt, target, max_step):
    form = h.form if isinstance(h, SmearedHamiltonian) else h
    rate = h.anomaly_rate if isinstance(h, SmearedHamiltonian) else 0.0
    s, drift = cayley(form, dt, max_step=max_step)
    mean = s @ state.mean
    cov = s @ state.covariance @ s.T
    cov = _flush(0.5 * (cov + cov.T))
    spec = state.spec
    e0 = _normal_ordered_energy(form, state.mean, state.covariance, spec)
    e1 = _normal_ordered_energy(form, mean, cov, spec)
    phase = state.phase - dt * (form.offset + rate + 0.5 * (e0 + e1))
    diag = dict(state.diagnostics)
    diag["last_step_drift"] = drift
    return GaussianState(mean, cov, phase, state.embedding if target is None else target, diag), s


def evolve_foliation(state: GaussianState, fol: Foliation, *, max_step: float = DEFAULT_MAX_STEP,
                     record_energy: bool = False,
                     return_propagator: bool = False):
    """Path-ordered evolution of ``state`` through the leaves of ``fol``.

    Each step uses the generator of the discrete deformation evaluated on the
    midpoint leaf.  Diagnostics record the largest per-step symplectic drift,
    the final purity defect and whether the family was a genuine foliation.
    """
    if not _same_leaf(state.embedding, fol.leaves[0]):
        raise LeafMismatch("state does not live on the first leaf")
    spec = fol.spec
    total = np.eye(2 * spec.n_sites) if return_propagator else None
    max_drift = 0.0
    energies = []
    cur = state
    for k in range(fol.n_steps):
        dt = fol.dt(k)
        h = smear_flux(spec, fol.midpoint_leaf(k), fol.deformation(k))
        cur, s = _advance(cur, h, dt, fol.leaves[k + 1], max_step)
        max_drift = max(max_drift, cur.diagnostics["last_step_drift"])
        if record_energy:
            energies.append(h.form.expectation(cur.mean, cur.covariance))
        if total is not None:
            total = _flush(s @ total)
    diag = dict(cur.diagnostics)
    diag.update({"max_step_drift": max_drift, "n_steps": fol.n_steps,
                 "purity_defect": cur.purity_defect(),
                 "foliating": fol.diagnostics.get("foliating", True)})
    if record_energy:
        diag["energy_trace"] = energies
    out = replace(cur, diagnostics=diag)
    if return_propagator:
        return out, Propagator(total, out.phase - state.phase, fol.leaves[0], fol.leaves[-1],
                               {"drift": symplectic_drift(total)})
    return out


def straight_path_substeps(e_from: Embedding, e_to: Embedding,
                           fraction: float = SUBSTEP_FRACTION) -> int:
    """Sub-steps so that no site moves more than ``fraction * dx`` per sub-step."""
    delta = np.max(np.abs(e_to.coords - e_from.coords))
    return max(1, int(np.ceil(delta / (fraction * e_from.spec.spacing))))


def frame_change_unitary(spec: LatticeSpec, e_from: Embedding, e_to: Embedding, *,
                         n_sub: int | None = None, max_step: float = DEFAULT_MAX_STEP) -> Propagator:
    """Propagator generated by ``int dSigma (X_to - X_from)^mu h_mu``.

    The generator is integrated along the straight path
    ``X(s) = X_from + s (X_to - X_from)`` and re-evaluated on the midpoint of
    every sub-step, so the result is the ordered exponential of the flux
    along that path.  Raises :class:`InvalidEmbedding` (or
    :class:`NotSpacelike`) if an intermediate slice is not spacelike.
    """
    if e_from.spec.n_sites != spec.n_sites or e_to.spec.n_sites != spec.n_sites:
        raise InvalidEmbedding("embeddings and lattice sizes differ")
    delta = e_to.coords - e_from.coords
    if not np.all(np.isfinite(delta)):
        raise InvalidEmbedding("non-finite deformation")
    dim = 2 * spec.n_sites
    if not np.any(delta):
        return Propagator(np.eye(dim), 0.0, e_from, e_to, {"n_sub": 0, "drift": 0.0})
    n = straight_path_substeps(e_from, e_to) if n_sub is None else int(n_sub)
    ds = 1.0 / n
    v = DeformationVector(delta)
    total = np.eye(dim)
    phase = 0.0
    max_drift = 0.0
    for k in range(n):
        mid = translate(e_from, v, (k + 0.5) * ds)
        h = smear_flux(spec, mid, v)
        s, drift = cayley(h.form, ds, max_step=max_step)
        max_drift = max(max_drift, drift)
        total = _flush(s @ total)
        phase -= ds * (h.form.offset + h.anomaly_rate)
    drift = symplectic_drift(total)
    if drift > DRIFT_PROJECT:
        total = newton_project(total)
        drift = symplectic_drift(total)
    return Propagator(total, phase, e_from, e_to, {"n_sub": n, "drift": drift,
                                                  "max_substep_drift": max_drift})


# ---------------------------------------------------------------------------
# Tomonaga-Schwinger residual


@dataclass(frozen=True)
class Residual:
    """Residual norm with a flag for boundary-adjacent deformations."""

    value: float
    boundary: bool = False
    mean_part: float = 0.0
    covariance_part: float = 0.0

    def __float__(self):
        return float(self.value)


def local_normal_deformation(emb: Embedding, site: int) -> np.ndarray:
    """``sqrt(g) n^mu`` at one site, zero elsewhere."""
    if not 0 <= site < emb.n_sites:
        raise IndexError(f"site {site} out of range")
    v = np.zeros((emb.n_sites, 2))
    v[site] = np.sqrt(induced_metric(emb)[site]) * unit_normal(emb)[site]
    return v


def deformed_pair(emb: Embedding, v: np.ndarray, eps: float) -> tuple[Embedding, Embedding]:
    if eps == 0:
        raise DeformationNotSpacelike("eps = 0 gives a degenerate difference quotient")
    try:
        dv = DeformationVector(v)
        return translate(emb, dv, eps), translate(emb, dv, -eps)
    except NotSpacelike as exc:
        raise DeformationNotSpacelike(str(exc)) from exc


def is_boundary_site(spec: LatticeSpec, site: int) -> bool:
    return (not spec.periodic) and site in (0, spec.n_sites - 1)


def ts_residual(spec: LatticeSpec, physical_family, emb: Embedding, site: int, eps: float) -> Residual:
    """Centered Tomonaga-Schwinger residual for a one-site normal deformation.

    Compares ``(psi[X + eps v] - psi[X - eps v]) / (2 eps)`` with the action of
    the local generator ``h[v]`` on the Gaussian data of ``psi[X]``; ``v`` is
    ``sqrt(g) n`` at ``site``.  Deformed states are obtained from the family
    re-anchored on ``emb``.
    """
    v = local_normal_deformation(emb, site)
    e_plus, e_minus = deformed_pair(emb, v, eps)
    fam = physical_family.rebase(emb)
    psi = fam.anchor_state
    plus = fam.reduce(e_plus)
    minus = fam.reduce(e_minus)
    h = smear_flux(spec, emb, v)
    j = _generator(h.form)
    dm = (plus.mean - minus.mean) / (2.0 * eps) - j @ psi.mean
    jc = j @ psi.covariance
    dc = (plus.covariance - minus.covariance) / (2.0 * eps) - (jc + jc.T)
    mp, cp = float(np.max(np.abs(dm))), float(np.max(np.abs(dc)))
    return Residual(max(mp, cp), is_boundary_site(spec, site), mp, cp)
