"""Relational picture: one physical state, read off on different hypersurfaces.

A coherent state anchored on the flat slice defines a family of conditional
states.  The expectation of a site observable on a bump slice is the same in
the Schrodinger, Heisenberg and Dirac evaluations.
"""
import numpy as np

from pftsim import LatticeSpec, bump_embedding, coherent_state, reduce, reduce_inverse
from pftsim.relational import random_observable, trinity_values

spec = LatticeSpec(32, 0.2, mass=1.0)
family = reduce_inverse(coherent_state(spec, np.exp(-spec.labels**2)))
target = bump_embedding(spec, 0.2, 1.0, time=0.3)

state = reduce(family, target)
phi, pi = state.field_mean()
print(f"field mean on the bump slice: max|phi|={np.max(np.abs(phi)):.4f}, max|pi|={np.max(np.abs(pi)):.4f}")

rng = np.random.default_rng(0)
values = trinity_values(family, [random_observable(spec, rng) for _ in range(5)], target)
for row in values:
    print("schrodinger {:+.10f}  heisenberg {:+.10f}  dirac {:+.10f}".format(*row))
