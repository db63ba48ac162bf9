"""Smeared Hamiltonian flux, its normal/tangential split, and the anomaly potential."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embedding_geometry import (
    DeformationVector,
    Embedding,
    _as_components,
    embedding_derivatives,
    extrinsic_curvature_trace,
    flat_embedding,
    induced_metric,
    unit_normal,
)
from .errors import InvalidEmbedding, MassiveField
from .field_model import LatticeSpec, QuadraticForm, canonical_form
from .foliation import lapse_shift

DEFAULT_CENTRAL_CHARGE = 1.0


@dataclass(frozen=True, eq=False)
class SmearedHamiltonian:
    """Quadratic generator ``h[v, X]`` plus its c-number anomaly rate.

    ``perp`` and ``para`` are the lapse and shift parts; ``form`` is their sum.
    """

    form: QuadraticForm
    anomaly_rate: float
    perp: QuadraticForm
    para: QuadraticForm
    embedding: Embedding
    deformation: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def scaled(self, factor: float) -> "SmearedHamiltonian":
        return SmearedHamiltonian(self.form.scaled(factor), self.anomaly_rate * factor,
                                  self.perp.scaled(factor), self.para.scaled(factor),
                                  self.embedding, self.deformation * factor, dict(self.meta))


def smear_flux(spec: LatticeSpec, emb: Embedding, v, *,
               central_charge: float = DEFAULT_CENTRAL_CHARGE) -> SmearedHamiltonian:
    """``sum_i v^mu h_mu(i)`` on ``emb``, split into lapse and shift parts.

    For a massless field the anomaly enters as the c-number
    ``central_charge * integrated_anomaly(spec, emb, v)``.
    """
    if emb.n_sites != spec.n_sites:
        raise InvalidEmbedding("embedding and lattice sizes differ")
    comps = _as_components(v, spec.n_sites)
    gamma = induced_metric(emb)
    lapse, shift = lapse_shift(emb, comps)
    zero = np.zeros(spec.n_sites)
    perp = canonical_form(spec, gamma, lapse, zero)
    para = canonical_form(spec, gamma, zero, shift)
    total = perp + para
    rate = 0.0
    if spec.mass == 0.0:
        rate = integrated_anomaly(spec, emb, comps, central_charge=central_charge)
    return SmearedHamiltonian(total, rate, perp, para, emb, comps,
                              {"embedding": emb.key(), "central_charge": central_charge})


def flat_hamiltonian(spec: LatticeSpec) -> QuadraticForm:
    """Lattice Klein-Gordon Hamiltonian on the ``T = 0`` slice."""
    emb = flat_embedding(spec)
    return smear_flux(spec, emb, DeformationVector.constant(spec.n_sites, 1.0, 0.0)).form


def anomaly_potential(spec: LatticeSpec, emb: Embedding, *,
                      central_charge: float = DEFAULT_CENTRAL_CHARGE) -> np.ndarray:
    """Embedding-dependent anomaly potential ``A_mu`` (lower index), shape ``(N, 2)``.

    Pointwise ``A_mu = e_mu dK/ds - K^2 n_mu`` with ``e`` the unit tangent,
    ``n`` the unit normal and ``s`` proper length.  Because ``de/ds = -K n``
    this equals ``(1/sqrt(g)) d(K e_mu)/dx``; the lattice evaluates that
    derivative with a centered difference so the slice integral telescopes.
    The position-like factor in front of ``dK/dx`` is read as the unit
    tangent, which is what makes the integral a boundary term.
    """
    if spec.mass > 0:
        raise MassiveField("anomaly potential is defined for m = 0 only")
    k = extrinsic_curvature_trace(emb)
    if not np.any(k):
        return np.zeros((spec.n_sites, 2))
    tp, xp = embedding_derivatives(emb)
    g = induced_metric(emb)
    e_lower = np.stack([-tp, xp], axis=1) / np.sqrt(g)[:, None]
    q = k[:, None] * e_lower
    if emb.period is not None:
        up, down = np.roll(q, -1, axis=0), np.roll(q, 1, axis=0)
    else:
        # continue K e linearly past the ends so the sum telescopes to its boundary values
        up = np.vstack([q[1:], 2.0 * q[-1:] - q[-2:-1]])
        down = np.vstack([2.0 * q[:1] - q[1:2], q[:-1]])
    return central_charge * (up - down) / (2.0 * spec.spacing) / np.sqrt(g)[:, None]


def anomaly_potential_pointwise(k: np.ndarray, dk_ds: np.ndarray, e_lower: np.ndarray,
                                n_lower: np.ndarray) -> np.ndarray:
    """Continuum expression ``e_mu dK/ds - K^2 n_mu`` from supplied geometry."""
    return e_lower * dk_ds[:, None] - (k * k)[:, None] * n_lower


def integrated_anomaly(spec: LatticeSpec, emb: Embedding, v, *,
                       central_charge: float = DEFAULT_CENTRAL_CHARGE) -> float:
    """``sum_i dx sqrt(g_i) v^mu A_mu(i)``."""
    comps = _as_components(v, spec.n_sites)
    a = anomaly_potential(spec, emb, central_charge=central_charge)
    if not np.any(a):
        return 0.0
    w = spec.spacing * np.sqrt(induced_metric(emb))
    return float(np.sum(w * np.einsum("ij,ij->i", comps, a)))


def normal_lower(emb: Embedding) -> np.ndarray:
    n = unit_normal(emb)
    return np.stack([-n[:, 0], n[:, 1]], axis=1)
