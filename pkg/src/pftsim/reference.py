"""Independent classical reference solutions used by experiments and tests."""
from __future__ import annotations

import numpy as np
from scipy.fft import dst, idst

REFINE = 10


def refined_dirichlet_solution(n_sites: int, spacing: float, mass: float, phi0, pi0, t: float,
                               refine: int = REFINE) -> np.ndarray:
    """Field at the coarse sites after time ``t``, from a ``refine``-times finer lattice.

    The fine lattice shares the coarse walls (``N_f + 1 = refine (N + 1)``)
    and is propagated exactly in time by a sine transform, so its only error
    is the fine-grid dispersion.  ``phi0`` and ``pi0`` are callables of ``x``.
    """
    nf = refine * (n_sites + 1) - 1
    dxf = spacing / refine
    xf = (np.arange(nf) - (nf - 1) / 2.0) * dxf
    a = dst(np.asarray(phi0(xf), dtype=float), type=1)
    b = dst(np.asarray(pi0(xf), dtype=float), type=1)
    k = np.arange(1, nf + 1) * np.pi / ((nf + 1) * dxf)
    w = np.sqrt(mass * mass + 4.0 / dxf**2 * np.sin(k * dxf / 2.0) ** 2)
    fine = idst(a * np.cos(w * t) + b * np.sin(w * t) / w, type=1)
    return fine[refine - 1::refine][:n_sites]


def fit_order(h, err) -> float:
    """Least-squares slope of ``log err`` against ``log h``."""
    h = np.log(np.asarray(h, dtype=float))
    e = np.log(np.asarray(err, dtype=float))
    return float(np.polyfit(h, e, 1)[0])
