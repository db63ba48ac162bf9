"""Anomaly potential of the massless field on a Gaussian bump slice.

Pointwise the potential is of order the squared curvature, but its integral
over an asymptotically flat slice vanishes to rounding.
"""
import numpy as np

from pftsim import DeformationVector, LatticeSpec, anomaly_potential, bump_embedding, integrated_anomaly

for n_sites in (64, 128, 256):
    spec = LatticeSpec(n_sites, 12.8 / (n_sites + 1))
    emb = bump_embedding(spec, 0.3, 1.0)
    a = anomaly_potential(spec, emb)
    total = integrated_anomaly(spec, emb, DeformationVector.constant(n_sites, 1.0, 0.0))
    print(f"N={n_sites:4d}  max|A|={np.max(np.abs(a)):.4f}  integral={total:+.2e}")
