"""Spacelike embeddings ``(T(x), X(x))`` of a lattice slice into 1+1 Minkowski space.

Signature is (-, +).  Derivatives with respect to the lattice label use
centered differences.  Periodic embeddings carry a period vector ``P`` so that
the image is invariant under ``(T, X) -> (T, X) + P``; fixed-zero embeddings
are extended by linear ghost points, which makes them straight beyond the
last site.
"""
from __future__ import annotations

import csv
import hashlib
import io
from typing import Iterable

import numpy as np

from .errors import DimensionMismatch, InvalidEmbedding, NotSpacelike, SingularConformalMap
from .field_model import LatticeSpec

DEFAULT_MARGIN = 1e-8


class DeformationVector:
    """Per-site vector field ``v^mu(x_i)`` stored as an ``(N, 2)`` array."""

    __slots__ = ("components",)

    def __init__(self, components):
        c = np.array(components, dtype=float)
        if c.ndim != 2 or c.shape[1] != 2:
            raise DimensionMismatch("deformation components must have shape (N, 2)")
        if not np.all(np.isfinite(c)):
            raise ValueError("deformation vector has non-finite entries")
        c.setflags(write=False)
        self.components = c

    @classmethod
    def constant(cls, n_sites: int, v0: float, v1: float) -> "DeformationVector":
        return cls(np.tile([float(v0), float(v1)], (n_sites, 1)))

    @property
    def n_sites(self) -> int:
        return self.components.shape[0]

    def __eq__(self, other):
        return isinstance(other, DeformationVector) and np.array_equal(self.components, other.components)

    def __hash__(self):
        return hash(self.components.tobytes())


def _as_components(v, n: int) -> np.ndarray:
    c = v.components if isinstance(v, DeformationVector) else DeformationVector(v).components
    if c.shape[0] != n:
        raise DimensionMismatch("deformation and embedding sizes differ")
    return c


class Embedding:
    """Immutable sampled embedding of the lattice slice.

    Parameters
    ----------
    spec : LatticeSpec
    t_coord, x_coord : array_like
        ``T(x_i)`` and ``X(x_i)``.
    period : pair of float, optional
        Period vector for periodic lattices, default ``(0, N dx)``.
    margin : float, optional
        Links must satisfy ``dX - |dT| > margin * dx``.
    """

    __slots__ = ("spec", "t_coord", "x_coord", "period", "margin", "_origin")

    def __init__(self, spec: LatticeSpec, t_coord, x_coord, *, period=None,
                 margin: float = DEFAULT_MARGIN, _origin=None):
        t = np.array(t_coord, dtype=float).reshape(-1)
        x = np.array(x_coord, dtype=float).reshape(-1)
        if t.shape != (spec.n_sites,) or x.shape != (spec.n_sites,):
            raise InvalidEmbedding("coordinate arrays must have n_sites entries")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x))):
            raise InvalidEmbedding("non-finite coordinates")
        if spec.periodic:
            p = np.array((0.0, spec.length) if period is None else period, dtype=float)
        else:
            p = None
        t.setflags(write=False)
        x.setflags(write=False)
        self.spec = spec
        self.t_coord = t
        self.x_coord = x
        self.period = p
        self.margin = float(margin)
        self._origin = _origin
        self._validate()

    # -- validation -----------------------------------------------------
    def link_deltas(self) -> tuple[np.ndarray, np.ndarray]:
        dt = np.diff(self.t_coord)
        dx = np.diff(self.x_coord)
        if self.period is not None:
            dt = np.append(dt, self.t_coord[0] + self.period[0] - self.t_coord[-1])
            dx = np.append(dx, self.x_coord[0] + self.period[1] - self.x_coord[-1])
        return dt, dx

    def _validate(self):
        dt, dx = self.link_deltas()
        tol = self.margin * self.spec.spacing
        spacelike = np.abs(dx) - np.abs(dt) > tol
        if not np.all(spacelike):
            bad = int(np.flatnonzero(~spacelike)[0])
            raise NotSpacelike(f"link {bad} is not spacelike (dT={dt[bad]:.3e}, dX={dx[bad]:.3e})")
        if np.any(dx <= 0):
            raise InvalidEmbedding("X must increase along the slice (orientation)")

    # -- basics -----------------------------------------------------------
    @property
    def n_sites(self) -> int:
        return self.spec.n_sites

    @property
    def coords(self) -> np.ndarray:
        return np.stack([self.t_coord, self.x_coord], axis=1)

    def key(self) -> str:
        h = hashlib.sha1()
        h.update(self.t_coord.tobytes())
        h.update(self.x_coord.tobytes())
        if self.period is not None:
            h.update(self.period.tobytes())
        return h.hexdigest()[:16]

    def same_geometry(self, other: "Embedding", atol: float = 0.0) -> bool:
        if self.n_sites != other.n_sites:
            return False
        if atol == 0.0:
            return bool(np.array_equal(self.t_coord, other.t_coord)
                        and np.array_equal(self.x_coord, other.x_coord))
        return bool(np.allclose(self.t_coord, other.t_coord, rtol=0, atol=atol)
                    and np.allclose(self.x_coord, other.x_coord, rtol=0, atol=atol))

    def __eq__(self, other):
        return isinstance(other, Embedding) and self.spec == other.spec and self.same_geometry(other)

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"Embedding(n_sites={self.n_sites}, key={self.key()})"

    def with_coords(self, t_coord, x_coord) -> "Embedding":
        return Embedding(self.spec, t_coord, x_coord, period=self.period, margin=self.margin)

    # -- csv --------------------------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "x_label", "T", "X"])
        for i, (lab, t, x) in enumerate(zip(self.spec.labels, self.t_coord, self.x_coord)):
            w.writerow([i, fmt(lab), fmt(t), fmt(x)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, spec: LatticeSpec, **kwargs) -> "Embedding":
        rows = list(csv.DictReader(io.StringIO(text)))
        if len(rows) != spec.n_sites:
            raise InvalidEmbedding("row count does not match the lattice")
        rows.sort(key=lambda r: int(r["index"]))
        t = [float(r["T"]) for r in rows]
        x = [float(r["X"]) for r in rows]
        return cls(spec, t, x, **kwargs)


def fmt(value: float) -> str:
    """17 significant digits, enough for a bit-exact round trip."""
    return format(float(value), ".17g")


# ---------------------------------------------------------------------------
# constructors


def flat_embedding(spec: LatticeSpec, time: float = 0.0, offset: float = 0.0) -> Embedding:
    """The slice ``T = time``, ``X = x + offset``."""
    return Embedding(spec, np.full(spec.n_sites, float(time)), spec.labels + offset)


def tilted_embedding(spec: LatticeSpec, slope: float, time: float = 0.0) -> Embedding:
    """Affine slice ``T = time + slope * x``, ``X = x`` (needs ``|slope| < 1``)."""
    lab = spec.labels
    period = None
    if spec.periodic:
        period = (slope * spec.length, spec.length)
    return Embedding(spec, time + slope * lab, lab.copy(), period=period)


def bump_embedding(spec: LatticeSpec, amplitude: float, width: float = 1.0,
                   time: float = 0.0, center: float = 0.0) -> Embedding:
    """``T = time + amplitude * exp(-((x - center)/width)^2)``, ``X = x``."""
    lab = spec.labels
    return Embedding(spec, time + amplitude * np.exp(-(((lab - center) / width) ** 2)), lab.copy())


def hyperbola_embedding(spec: LatticeSpec, radius: float, eta_step: float | None = None) -> Embedding:
    """Spacelike hyperbola ``(R cosh eta, R sinh eta)`` sampled at ``eta = x_i * eta_step / dx``."""
    step = spec.spacing / radius if eta_step is None else eta_step
    eta = spec.labels / spec.spacing * step
    return Embedding(spec, radius * np.cosh(eta), radius * np.sinh(eta))


# ---------------------------------------------------------------------------
# geometry


def _ghosts(emb: Embedding, coord: np.ndarray, comp: int) -> tuple[float, float]:
    if emb.period is not None:
        return coord[-1] - emb.period[comp], coord[0] + emb.period[comp]
    # quadratic extrapolation: exact for affine slices, keeps the end curvature
    lo = 3.0 * coord[0] - 3.0 * coord[1] + coord[2]
    hi = 3.0 * coord[-1] - 3.0 * coord[-2] + coord[-3]
    return lo, hi


def _padded(emb: Embedding, coord: np.ndarray, comp: int) -> np.ndarray:
    lo, hi = _ghosts(emb, coord, comp)
    return np.concatenate([[lo], coord, [hi]])


def embedding_derivatives(emb: Embedding) -> tuple[np.ndarray, np.ndarray]:
    """Centered first derivatives ``(T', X')`` with respect to the label."""
    h = emb.spec.spacing
    out = []
    for comp, c in enumerate((emb.t_coord, emb.x_coord)):
        p = _padded(emb, c, comp)
        out.append((p[2:] - p[:-2]) / (2.0 * h))
    return out[0], out[1]


def embedding_second_derivatives(emb: Embedding) -> tuple[np.ndarray, np.ndarray]:
    h = emb.spec.spacing
    out = []
    for comp, c in enumerate((emb.t_coord, emb.x_coord)):
        p = _padded(emb, c, comp)
        out.append((p[2:] - 2.0 * p[1:-1] + p[:-2]) / h**2)
    return out[0], out[1]


def induced_metric(emb: Embedding) -> np.ndarray:
    """``g = X'^2 - T'^2`` per site.  Raises :class:`NotSpacelike` if any ``g <= 0``."""
    tp, xp = embedding_derivatives(emb)
    g = xp * xp - tp * tp
    if np.any(g <= 0):
        raise NotSpacelike("induced metric is not positive")
    return g


def unit_normal(emb: Embedding) -> np.ndarray:
    """Future-pointing unit normal ``n^mu = (X', T') / sqrt(g)``, shape ``(N, 2)``."""
    tp, xp = embedding_derivatives(emb)
    g = induced_metric(emb)
    return np.stack([xp, tp], axis=1) / np.sqrt(g)[:, None]


def conormal(emb: Embedding) -> np.ndarray:
    """Densitized conormal ``n_nu = eps_{nu rho} dX^rho/dx = (X', -T')``."""
    tp, xp = embedding_derivatives(emb)
    return np.stack([xp, -tp], axis=1)


def tangent(emb: Embedding) -> np.ndarray:
    tp, xp = embedding_derivatives(emb)
    return np.stack([tp, xp], axis=1)


def minkowski_dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return -a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]


def extrinsic_curvature_trace(emb: Embedding) -> np.ndarray:
    """Trace ``K`` of the extrinsic curvature, ``K = (T' X'' - X' T'') / g^{3/2}``.

    ``K`` is positive where the slice bulges toward the future (a hump in
    ``T``).  With this sign the unit tangent obeys ``de/ds = -K n``.
    """
    if emb.n_sites < 5:
        raise InvalidEmbedding("curvature needs at least 5 sites")
    tp, xp = embedding_derivatives(emb)
    tpp, xpp = embedding_second_derivatives(emb)
    g = induced_metric(emb)
    return (tp * xpp - xp * tpp) / g**1.5


def is_affine(emb: Embedding, rtol: float = 1e-10) -> bool:
    dt, dx = emb.link_deltas()
    scale = max(1.0, float(np.max(np.abs(dx))))
    return bool(np.ptp(dt) <= rtol * scale and np.ptp(dx) <= rtol * scale)


# ---------------------------------------------------------------------------
# group actions


def translate(emb: Embedding, v, s: float) -> Embedding:
    """Shift every site by ``s * v^mu(x)``.

    Repeated translations along one vector field are stored against the same
    base embedding with accumulated parameter, so
    ``translate(translate(e, v, s1), v, s2)`` and ``translate(e, v, s1 + s2)``
    are bitwise identical.
    """
    comps = _as_components(v, emb.n_sites)
    s = float(s)
    base, total = emb, s
    if emb._origin is not None:
        b0, v0, s0 = emb._origin
        if np.array_equal(v0, comps):
            base, total = b0, s0 + s
    t = base.t_coord + total * comps[:, 0]
    x = base.x_coord + total * comps[:, 1]
    return Embedding(emb.spec, t, x, period=base.period, margin=emb.margin,
                     _origin=(base, comps, total))


def boost_matrix(w: float) -> np.ndarray:
    ch, sh = np.cosh(w), np.sinh(w)
    return np.array([[ch, -sh], [-sh, ch]])


def boost(emb: Embedding, w: float) -> Embedding:
    """Apply the Lorentz boost of rapidity ``w``; the flat slice maps to ``(-x sinh w, x cosh w)``."""
    lam = boost_matrix(w)
    c = emb.coords @ lam.T
    period = None if emb.period is None else lam @ emb.period
    return Embedding(emb.spec, c[:, 0], c[:, 1], period=period, margin=emb.margin)


def conformal_denominator(t, x, alpha: float, convention: str = "standard") -> np.ndarray:
    """Denominator of the special conformal map with ``b = (0, 1/alpha)``.

    ``literal``: ``beta = 2 X.b - X.X / alpha^2``.
    ``standard``: ``1 - beta``, the usual special conformal denominator.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    beta = 2.0 * x / alpha - (x * x - t * t) / alpha**2
    if convention == "literal":
        return beta
    if convention == "standard":
        return 1.0 - beta
    raise ValueError(f"unknown convention {convention!r}")


def special_conformal_coordinates(t, x, alpha: float, convention: str = "standard",
                                  eps: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise image ``(X - b X.X) / den`` without building an embedding."""
    if not alpha > 0:
        raise ValueError("acceleration must be positive")
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    den = conformal_denominator(t, x, alpha, convention)
    if np.any(np.abs(den) < eps):
        bad = int(np.flatnonzero(np.abs(den) < eps)[0])
        raise SingularConformalMap(f"denominator vanishes at site {bad}")
    sq = x * x - t * t
    return t / den, (x - sq / alpha) / den


def special_conformal(emb: Embedding, accel: float, convention: str = "standard",
                      eps: float = 1e-9) -> Embedding:
    """Special conformal image of ``emb`` for acceleration ``accel``.

    The result is re-validated: :class:`NotSpacelike` or
    :class:`InvalidEmbedding` if the image is not an oriented spacelike slice.
    """
    if emb.period is not None:
        raise InvalidEmbedding("special conformal map needs a fixed-zero lattice")
    t, x = special_conformal_coordinates(emb.t_coord, emb.x_coord, accel, convention, eps)
    return Embedding(emb.spec, t, x, margin=emb.margin)


def embeddings_from_rows(spec: LatticeSpec, rows: Iterable[tuple[float, float]]) -> Embedding:
    arr = np.array(list(rows), dtype=float)
    return Embedding(spec, arr[:, 0], arr[:, 1])
