"""Conditional-state families, reduction maps and relational observables.

A physical state is represented by a :class:`PhysicalFamily`: an anchor
embedding, the field state on it, and the rule that the state on any other
embedding is obtained with the frame-change propagator from the anchor.
Conditioning on an embedding (``reduce``) evaluates that rule; the inverse
map anchors a new family on a given state.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embedding_geometry import Embedding
from .errors import DimensionMismatch, InvalidEmbedding, UnreachableEmbedding
from .evolve import (
    GaussianState,
    Propagator,
    _same_leaf,
    deformed_pair,
    frame_change_unitary,
    is_boundary_site,
    local_normal_deformation,
    Residual,
)
from .field_model import LatticeSpec, QuadraticForm, commutator_form
from .hamiltonian import smear_flux


@dataclass(eq=False)
class PhysicalFamily:
    """Anchor state plus propagation rule ``psi[X] = U[X - X_anchor] psi[X_anchor]``."""

    anchor: Embedding
    anchor_state: GaussianState
    spec: LatticeSpec
    n_sub: int | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def propagator_to(self, emb: Embedding) -> Propagator:
        if emb.n_sites != self.spec.n_sites:
            raise UnreachableEmbedding("embedding lives on another lattice")
        key = emb.key()
        if key not in self._cache:
            try:
                self._cache[key] = frame_change_unitary(self.spec, self.anchor, emb, n_sub=self.n_sub)
            except InvalidEmbedding as exc:
                raise UnreachableEmbedding(str(exc)) from exc
        return self._cache[key]

    def reduce(self, emb: Embedding) -> GaussianState:
        return reduce(self, emb)

    def rebase(self, emb: Embedding) -> "PhysicalFamily":
        """Same physical state, anchored on ``emb``."""
        if _same_leaf(emb, self.anchor):
            return self
        return PhysicalFamily(emb, self.reduce(emb), self.spec, self.n_sub)

    def consistency_defect(self, e1: Embedding, e2: Embedding) -> float:
        """``max`` deviation between ``psi[e2]`` and ``U[e2 - e1] psi[e1]`` (means and covariances)."""
        direct = self.reduce(e2)
        via = frame_change_unitary(self.spec, e1, e2, n_sub=self.n_sub).apply(self.reduce(e1))
        return max(float(np.max(np.abs(direct.mean - via.mean))),
                   float(np.max(np.abs(direct.covariance - via.covariance))))


def reduce(family: PhysicalFamily, emb: Embedding) -> GaussianState:
    """Conditional field state on ``emb``.

    Raises :class:`UnreachableEmbedding` if no valid straight path joins the
    anchor and ``emb``.
    """
    if _same_leaf(emb, family.anchor):
        return family.anchor_state
    return family.propagator_to(emb).apply(family.anchor_state)


def reduce_inverse(state: GaussianState, *, n_sub: int | None = None) -> PhysicalFamily:
    """Family anchored at ``(state.embedding, state)``."""
    return PhysicalFamily(state.embedding, state, state.spec, n_sub)


def dirac_expectation(family: PhysicalFamily, a0: QuadraticForm, emb: Embedding) -> float:
    """``<psi[emb]| A0 |psi[emb]>`` from Gaussian moments."""
    if a0.n_sites != family.spec.n_sites:
        raise DimensionMismatch("observable and lattice sizes differ")
    st = reduce(family, emb)
    return a0.expectation(st.mean, st.covariance)


def heisenberg_observable(a0: QuadraticForm, emb_q: Embedding, emb_0: Embedding, *,
                          spec: LatticeSpec | None = None, n_sub: int | None = None) -> QuadraticForm:
    """Observable ``A0`` carried to ``emb_q`` in the picture frozen at ``emb_0``.

    With ``S`` the state propagator from ``emb_0`` to ``emb_q`` the matrix
    becomes ``S^T A0 S``, so that its expectation in a state on ``emb_0``
    equals the expectation of ``A0`` in the evolved state on ``emb_q``.
    """
    spec = emb_0.spec if spec is None else spec
    if a0.n_sites != spec.n_sites:
        raise DimensionMismatch("observable and lattice sizes differ")
    if _same_leaf(emb_q, emb_0):
        return a0
    s = frame_change_unitary(spec, emb_0, emb_q, n_sub=n_sub).symplectic
    return QuadraticForm(s.T @ a0.matrix @ s, a0.offset, check=False)


def heisenberg_equation_residual(a0: QuadraticForm, emb: Embedding, site: int, eps: float, *,
                                 spec: LatticeSpec | None = None) -> Residual:
    """Centered derivative of the Heisenberg observable minus ``i[h, A0]``.

    The derivative is taken along the one-site deformation ``sqrt(g) n`` at
    ``site``; ``i[h, A]`` has form ``commutator_form(A, h)``.
    """
    spec = emb.spec if spec is None else spec
    v = local_normal_deformation(emb, site)
    e_plus, e_minus = deformed_pair(emb, v, eps)
    a_plus = heisenberg_observable(a0, e_plus, emb, spec=spec)
    a_minus = heisenberg_observable(a0, e_minus, emb, spec=spec)
    h = smear_flux(spec, emb, v).form
    target = commutator_form(a0, h).matrix
    diff = (a_plus.matrix - a_minus.matrix) / (2.0 * eps) - target
    val = float(np.max(np.abs(diff)))
    return Residual(val, is_boundary_site(spec, site), 0.0, val)


def trinity_values(family: PhysicalFamily, observables, emb_q: Embedding) -> np.ndarray:
    """Schrodinger, Heisenberg and Dirac evaluations, one row per observable.

    The Heisenberg column evaluates the carried observable in the state on the
    family's anchor.
    """
    psi_q = family.reduce(emb_q)
    psi_0 = family.anchor_state
    s = family.propagator_to(emb_q).symplectic if not _same_leaf(emb_q, family.anchor) else None
    rows = []
    for a0 in observables:
        schr = a0.expectation(psi_q.mean, psi_q.covariance)
        a_q = a0 if s is None else QuadraticForm(s.T @ a0.matrix @ s, a0.offset, check=False)
        heis = a_q.expectation(psi_0.mean, psi_0.covariance)
        dirac = dirac_expectation(family, a0, emb_q)
        rows.append((schr, heis, dirac))
    return np.array(rows)


def random_observable(spec: LatticeSpec, rng: np.random.Generator, *, density: float = 0.2) -> QuadraticForm:
    """Random symmetric form with unit Frobenius norm (test batteries)."""
    dim = 2 * spec.n_sites
    a = rng.standard_normal((dim, dim)) * (rng.random((dim, dim)) < density)
    a = a + a.T
    a /= np.linalg.norm(a)
    return QuadraticForm(a, float(rng.standard_normal()), check=False)
