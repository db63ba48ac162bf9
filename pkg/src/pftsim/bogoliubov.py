"""Bogoliubov maps between mode frames and the particle numbers they imply.

For frames ``v_j`` (the state's vacuum) and ``w_k`` (the modes being counted)
on one hypersurface,

    alpha_jk = (w_k, v_j),    beta_jk = -(w_k*, v_j),

with the Klein-Gordon product antilinear in its first slot.  Then
``c_k = sum_j alpha_jk b_j + conj(beta_jk) b_j^dagger`` and the number of
``w``-quanta in the ``v`` vacuum is ``sum_j |beta_jk|^2``.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .embedding_geometry import Embedding, fmt
from .errors import CanonicalViolation, FrameMismatch, ModeOutOfRange
from .field_model import ModeFrame, kg_matrix

CANONICAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class BogoliubovMap:
    """Matrices ``alpha`` and ``beta`` indexed ``[j, k]`` (source mode, target mode)."""

    alpha: np.ndarray
    beta: np.ndarray
    frame_to: ModeFrame
    frame_from: ModeFrame
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def retained_from(self) -> np.ndarray:
        return self.frame_from.retained()

    @property
    def retained_to(self) -> np.ndarray:
        return self.frame_to.retained()

    def canonical_defects(self) -> tuple[float, float]:
        """``max |alpha alpha^H - beta beta^H - I|`` and ``max |alpha beta^T - beta alpha^T|``.

        Rows and columns are restricted to retained source modes; the inner sum
        runs over every target mode.
        """
        keep = self.retained_from
        a, b = self.alpha[keep], self.beta[keep]
        d1 = a @ np.conj(a).T - b @ np.conj(b).T - np.eye(a.shape[0])
        d2 = a @ b.T - b @ a.T
        return float(np.max(np.abs(d1))), float(np.max(np.abs(d2)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "k", "re_alpha", "im_alpha", "re_beta", "im_beta"])
        for j in range(self.alpha.shape[0]):
            for k in range(self.alpha.shape[1]):
                a, b = self.alpha[j, k], self.beta[j, k]
                w.writerow([j, k, fmt(a.real), fmt(a.imag), fmt(b.real), fmt(b.imag)])
        return buf.getvalue()


def _same_slice(a: Embedding, b: Embedding) -> bool:
    scale = max(1.0, float(np.max(np.abs(a.coords))))
    return a.n_sites == b.n_sites and a.same_geometry(b, atol=1e-12 * scale)


def bogoliubov_between(frame_to: ModeFrame, frame_from: ModeFrame, emb: Embedding, *,
                       tol: float = CANONICAL_TOL) -> BogoliubovMap:
    """Bogoliubov map from ``frame_from`` to ``frame_to`` on ``emb``.

    Both frames must already live on ``emb`` (evolve them first otherwise).
    A :class:`CanonicalViolation` warning is issued when a canonical relation
    fails by more than ``10 * tol``.
    """
    for fr in (frame_to, frame_from):
        if fr.spec.n_sites != emb.n_sites or not _same_slice(fr.embedding, emb):
            raise FrameMismatch("frame does not live on the requested hypersurface")
    zw = frame_to.phase_vectors()
    zv = frame_from.phase_vectors()
    alpha = kg_matrix(zw, zv).T
    beta = -kg_matrix(np.conj(zw), zv).T
    out = BogoliubovMap(alpha, beta, frame_to, frame_from)
    d1, d2 = out.canonical_defects()
    out.diagnostics.update({"norm_defect": d1, "symmetry_defect": d2,
                            "retained_from": int(out.retained_from.sum()),
                            "retained_to": int(out.retained_to.sum())})
    if max(d1, d2) > 10 * tol:
        warnings.warn(f"canonical relations violated: {d1:.3e}, {d2:.3e}", CanonicalViolation,
                      stacklevel=2)
    return out


def expected_number(bmap: BogoliubovMap, k: int) -> float:
    """``sum_j |beta_jk|^2`` for a retained target mode ``k`` (column index)."""
    if not 0 <= k < bmap.beta.shape[1] or not bmap.retained_to[k]:
        raise ModeOutOfRange(f"mode {k} is not a retained target mode")
    col = bmap.beta[:, k]
    return float(np.sum(col.real**2 + col.imag**2))


def number_spectrum(bmap: BogoliubovMap) -> np.ndarray:
    """``sum_j |beta_jk|^2`` for every target mode (retained or not)."""
    return np.sum(np.abs(bmap.beta) ** 2, axis=0)


def quench_number(omega_1, omega_2):
    """Particle number of a sudden frequency change, ``(w1 - w2)^2 / (4 w1 w2)``."""
    omega_1 = np.asarray(omega_1, dtype=float)
    omega_2 = np.asarray(omega_2, dtype=float)
    return (omega_1 - omega_2) ** 2 / (4.0 * omega_1 * omega_2)


def mode_transform(bmap: BogoliubovMap) -> np.ndarray:
    """Block matrix ``[[alpha, beta], [conj(beta), conj(alpha)]]`` acting on ``(w, w*)`` coefficients."""
    a, b = bmap.alpha, bmap.beta
    return np.block([[a, b], [np.conj(b), np.conj(a)]])


def evolve_frame(frame: ModeFrame, propagator, emb: Embedding | None = None) -> ModeFrame:
    """Carry every mode along a propagator as a classical solution."""
    target = propagator.target if emb is None else emb
    zeta = propagator.symplectic @ frame.phase_vectors()
    return ModeFrame.from_phase_vectors(zeta, frame, target)
