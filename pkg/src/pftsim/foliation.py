"""Discrete one-parameter families of spacelike embeddings and their lapse/shift."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .embedding_geometry import (
    DeformationVector,
    Embedding,
    boost,
    conormal,
    embedding_derivatives,
    flat_embedding,
    fmt,
    induced_metric,
    minkowski_dot,
    translate,
)
from .errors import InvalidEmbedding, NonTimelikeDeformation
from .field_model import LatticeSpec

SCHEDULES = ("linear", "smoothstep", "bump")


def lapse_shift(emb: Embedding, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split ``v^mu`` on ``emb`` into lapse ``N`` and shift ``N^x``.

    ``v = N n + N^x dX/dx`` with ``N = n_nu v^nu / sqrt(g)`` (densitized
    conormal) and ``N^x = (dX/dx . v) / g``.
    """
    v = np.asarray(v, dtype=float)
    g = induced_metric(emb)
    tp, xp = embedding_derivatives(emb)
    lapse = np.einsum("ij,ij->i", conormal(emb), v) / np.sqrt(g)
    shift = minkowski_dot(np.stack([tp, xp], axis=1), v) / g
    return lapse, shift


@dataclass(frozen=True, eq=False)
class Foliation:
    """Ordered leaves with strictly increasing parameter values.

    With ``validate=True`` every step must have positive lapse at every
    site.  Families that fail this check can still be built with
    ``validate=False``; they are marked ``foliating=False``.
    """

    leaves: tuple
    times: np.ndarray
    validate: bool = True
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        leaves = tuple(self.leaves)
        times = np.array(self.times, dtype=float)
        object.__setattr__(self, "leaves", leaves)
        object.__setattr__(self, "times", times)
        if len(leaves) < 2 or times.shape != (len(leaves),):
            raise InvalidEmbedding("a foliation needs >= 2 leaves and one time per leaf")
        spec = leaves[0].spec
        if any(l.spec != spec for l in leaves):
            raise InvalidEmbedding("all leaves must share one lattice")
        dts = np.diff(times)
        monotone = bool(np.all(dts > 0))
        min_lapse = np.inf
        for k in range(len(leaves) - 1):
            if dts[k] == 0:
                min_lapse = -np.inf
                break
            lapse, _ = lapse_shift(leaves[k], self.deformation(k))
            min_lapse = min(min_lapse, float(lapse.min()) * np.sign(dts[k]))
        foliating = monotone and min_lapse > 0
        self.diagnostics.update({"foliating": foliating, "monotone_times": monotone,
                                 "min_lapse": min_lapse})
        if self.validate:
            if not monotone:
                raise InvalidEmbedding("times must increase strictly")
            if not min_lapse > 0:
                raise NonTimelikeDeformation(f"non-positive lapse (min {min_lapse:.3e})")

    @property
    def spec(self) -> LatticeSpec:
        return self.leaves[0].spec

    @property
    def n_steps(self) -> int:
        return len(self.leaves) - 1

    def dt(self, k: int) -> float:
        return float(self.times[k + 1] - self.times[k])

    def deformation(self, k: int) -> np.ndarray:
        """Discrete deformation ``(X_{k+1} - X_k) / dt``, shape ``(N, 2)``."""
        a, b = self.leaves[k], self.leaves[k + 1]
        return (b.coords - a.coords) / (self.times[k + 1] - self.times[k])

    def midpoint_leaf(self, k: int) -> Embedding:
        a, b = self.leaves[k], self.leaves[k + 1]
        return a.with_coords(0.5 * (a.t_coord + b.t_coord), 0.5 * (a.x_coord + b.x_coord))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "site", "T", "X", "N", "N^x"])
        for k, leaf in enumerate(self.leaves):
            if k < self.n_steps:
                lapse, shift = lapse_shift(leaf, self.deformation(k))
            else:
                lapse = shift = np.full(leaf.n_sites, np.nan)
            for i in range(leaf.n_sites):
                w.writerow([k, i, fmt(leaf.t_coord[i]), fmt(leaf.x_coord[i]),
                            fmt(lapse[i]), fmt(shift[i])])
        return buf.getvalue()


def build_inertial(spec: LatticeSpec, rapidity: float, t_range: Sequence[float],
                   n_steps: int) -> Foliation:
    """Leaves ``X(0, x) + t v`` with ``X(0, x)`` the boosted flat slice and ``v = (cosh w, -sinh w)``."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    seed = boost(flat_embedding(spec), rapidity)
    v = DeformationVector.constant(spec.n_sites, np.cosh(rapidity), -np.sinh(rapidity))
    times = np.linspace(float(t_range[0]), float(t_range[1]), n_steps + 1)
    leaves = [translate(seed, v, t) for t in times]
    return Foliation(tuple(leaves), times)


def schedule_weights(schedule: str, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interpolation fraction ``f(s)`` and detour weight ``g(s)`` of a schedule."""
    s = np.asarray(s, dtype=float)
    if schedule == "linear":
        return s, np.zeros_like(s)
    if schedule == "smoothstep":
        return s * s * (3.0 - 2.0 * s), np.zeros_like(s)
    if schedule == "bump":
        return s, np.sin(np.pi * s)
    raise ValueError(f"unknown schedule {schedule!r}; expected one of {SCHEDULES}")


def detour_profile(spec: LatticeSpec, amplitude: float, width: float, center: float) -> np.ndarray:
    """Time-direction detour used by the ``bump`` schedule."""
    return amplitude * np.exp(-(((spec.labels - center) / width) ** 2))


def build_interpolating(e_start: Embedding, e_end: Embedding, schedule: str, n_steps: int, *,
                        bump_amplitude: float = 0.1, bump_width: float = 1.0,
                        bump_center: float = 0.0, validate: bool = True) -> Foliation:
    """Leaves ``(1 - f) X_start + f X_end + g(s) * (detour, 0)`` for ``s = k / n_steps``.

    The ``bump`` schedule pushes intermediate leaves off the straight path by
    a Gaussian detour in ``T`` that vanishes at both ends, so it realizes a
    genuinely different foliation between the same endpoints.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if e_start.spec != e_end.spec:
        raise InvalidEmbedding("endpoints live on different lattices")
    spec = e_start.spec
    s = np.linspace(0.0, 1.0, n_steps + 1)
    f, g = schedule_weights(schedule, s)
    detour = detour_profile(spec, bump_amplitude, bump_width, bump_center)
    dt_coords = e_end.t_coord - e_start.t_coord
    dx_coords = e_end.x_coord - e_start.x_coord
    leaves = []
    for k in range(n_steps + 1):
        if k == 0:
            leaves.append(e_start)
        elif k == n_steps:
            leaves.append(e_end)
        else:
            t = e_start.t_coord + f[k] * dt_coords + g[k] * detour
            x = e_start.x_coord + f[k] * dx_coords
            leaves.append(e_start.with_coords(t, x))
    return Foliation(tuple(leaves), s, validate=validate)


def decompose_deformation(fol: Foliation, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Lapse and shift of step ``k`` relative to leaf ``k``.

    Raises :class:`NonTimelikeDeformation` if the lapse is not positive.
    """
    if not 0 <= k < fol.n_steps:
        raise IndexError(f"step {k} out of range")
    v = fol.deformation(k)
    lapse, shift = lapse_shift(fol.leaves[k], v)
    if np.any(lapse <= 0):
        raise NonTimelikeDeformation(f"step {k}: lapse min {lapse.min():.3e}")
    return lapse, shift


def reconstruction_residual(fol: Foliation, k: int) -> float:
    """``max |N n + N^x X' - v| / max |v|`` for step ``k``."""
    from .embedding_geometry import unit_normal

    leaf = fol.leaves[k]
    v = fol.deformation(k)
    lapse, shift = lapse_shift(leaf, v)
    tp, xp = embedding_derivatives(leaf)
    rec = lapse[:, None] * unit_normal(leaf) + shift[:, None] * np.stack([tp, xp], axis=1)
    return float(np.max(np.abs(rec - v)) / max(np.max(np.abs(v)), 1e-300))
