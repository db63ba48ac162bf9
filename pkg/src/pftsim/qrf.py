"""Quantum-reference-frame changes over finite embedding ensembles.

An :class:`EmbeddingEnsemble` is a finite superposition of embeddings with
complex amplitudes.  Each member embedding carries its own lattice
specification, so members may also differ in mass (a quench family).
Distinct members are treated as orthogonal, so number expectations never mix
branches.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bogoliubov import bogoliubov_between, evolve_frame, expected_number
from .embedding_geometry import Embedding, flat_embedding, fmt
from .errors import DimensionMismatch, ModeOutOfRange
from .evolve import GaussianState, frame_change_unitary, vacuum_state
from .field_model import LatticeSpec, ModeFrame, flat_mode_frame, symplectic_matrix

NORM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EmbeddingEnsemble:
    """Members ``(embedding, amplitude)`` with ``sum |amplitude|^2 = 1``."""

    members: tuple

    def __post_init__(self):
        members = tuple((emb, complex(a)) for emb, a in self.members)
        if not members:
            raise ValueError("ensemble needs at least one member")
        n = members[0][0].n_sites
        if any(emb.n_sites != n for emb, _ in members):
            raise DimensionMismatch("members live on different lattice sizes")
        norm = sum(abs(a) ** 2 for _, a in members)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"amplitudes not normalized (sum |psi|^2 = {norm!r})")
        for i in range(len(members)):
            for j in range(i):
                ei, ej = members[i][0], members[j][0]
                if ei.spec == ej.spec and ei.same_geometry(ej):
                    raise ValueError(f"members {j} and {i} coincide")
        object.__setattr__(self, "members", members)

    @property
    def weights(self) -> np.ndarray:
        return np.array([abs(a) ** 2 for _, a in self.members])

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([a for _, a in self.members])

    @classmethod
    def normalized(cls, embeddings, amplitudes) -> "EmbeddingEnsemble":
        amps = np.asarray(amplitudes, dtype=complex)
        amps = amps / np.sqrt(np.sum(np.abs(amps) ** 2))
        return cls(tuple(zip(embeddings, amps)))


@dataclass(frozen=True, eq=False)
class RelationalBranchState:
    """Branches ``(embedding, conditional state, amplitude)``."""

    branches: tuple

    def distinguishability(self) -> float:
        """Largest covariance distance between two branches (zero if all agree)."""
        best = 0.0
        covs = [st.covariance for _, st, _ in self.branches]
        for i in range(len(covs)):
            for j in range(i):
                best = max(best, float(np.max(np.abs(covs[i] - covs[j]))))
        return best


def change_frame(conditional: GaussianState, ensemble: EmbeddingEnsemble) -> RelationalBranchState:
    """Attach ``U[X_q - X_A] psi`` with amplitude ``psi_q`` to each member."""
    spec = conditional.spec
    branches = []
    for emb, amp in ensemble.members:
        prop = frame_change_unitary(spec, conditional.embedding, emb)
        branches.append((emb, prop.apply(conditional), amp))
    return RelationalBranchState(tuple(branches))


def _member_frames(emb: Embedding, frame_b: ModeFrame):
    """Member frame on ``emb`` and frame B carried onto ``emb`` with B's dynamics."""
    w = flat_mode_frame(emb.spec, emb)
    prop = frame_change_unitary(frame_b.spec, frame_b.embedding, emb)
    v = evolve_frame(frame_b, prop, emb)
    return w, v, prop


def branch_numbers(ensemble: EmbeddingEnsemble, frame_b: ModeFrame, k: int) -> np.ndarray:
    """``sum_j |beta_jk(q)|^2`` for every member ``q``."""
    out = []
    for emb, _ in ensemble.members:
        w, v, _ = _member_frames(emb, frame_b)
        out.append(expected_number(bogoliubov_between(w, v, emb), k))
    return np.array(out)


def smeared_particle_number(ensemble: EmbeddingEnsemble, frame_b: ModeFrame, k: int) -> float:
    """``sum_q |psi_q|^2 sum_j |beta_jk(q)|^2``: member-frame quanta in the vacuum of B."""
    nums = branch_numbers(ensemble, frame_b, k)
    total = 0.0
    for wgt, n in zip(ensemble.weights, nums):
        total += wgt * n
    return float(total)


def number_operator_expectation(w: ModeFrame, k: int, state: GaussianState) -> float:
    """``<c_k^dagger c_k>`` with ``c_k = (w_k, phi)``, from the state's moments."""
    if not 0 <= k < w.n_modes or not w.retained()[k]:
        raise ModeOutOfRange(f"mode {k} is not a retained mode")
    zeta = w.phase_vectors()[:, k]
    n = w.spec.n_sites
    om = symplectic_matrix(n)
    g = -1j * om @ np.conj(zeta)
    second = state.covariance + 0.5j * om
    val = np.conj(g) @ second @ g + abs(g @ state.mean) ** 2
    return float(val.real)


def transformed_number_expectation(ensemble: EmbeddingEnsemble, frame_b: ModeFrame, k: int) -> float:
    """Expectation of the block operator ``sum_q |X_q><X_q| (x) N_{k,q}``.

    The B vacuum is built from its own Hamiltonian, carried to each member, and
    the number operator of the member frame is evaluated on it; the
    branch values are then assembled into a diagonal block operator on the
    ensemble amplitudes.
    """
    vac_b = vacuum_state(frame_b.spec, frame_b.embedding)
    diag = []
    for emb, _ in ensemble.members:
        w = flat_mode_frame(emb.spec, emb)
        prop = frame_change_unitary(frame_b.spec, frame_b.embedding, emb)
        diag.append(number_operator_expectation(w, k, prop.apply(vac_b)))
    block = np.diag(np.array(diag, dtype=complex))
    psi = ensemble.amplitudes
    return float((np.conj(psi) @ block @ psi).real)


def quench_family(spec: LatticeSpec, masses, weights, *, time_step: float = 0.5) -> EmbeddingEnsemble:
    """Flat slices at times ``q * time_step`` whose lattices carry masses ``masses[q]``."""
    embs = [flat_embedding(spec.with_mass(m), time=q * time_step) for q, m in enumerate(masses)]
    amps = np.sqrt(np.asarray(weights, dtype=float))
    return EmbeddingEnsemble.normalized(embs, amps)


def results_csv(ks, smeared, per_branch, weights) -> str:
    """Rows ``k, smeared_N, branch_<q>..., weight_<q>...``."""
    nq = len(weights)
    head = ["k", "smeared_N"] + [f"branch_{q}" for q in range(nq)] + [f"weight_{q}" for q in range(nq)]
    lines = [",".join(head)]
    for k, s, row in zip(ks, smeared, per_branch):
        lines.append(",".join([str(int(k)), fmt(s)] + [fmt(x) for x in row] + [fmt(w) for w in weights]))
    return "\n".join(lines) + "\n"
