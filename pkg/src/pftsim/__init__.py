"""Relational simulator for a free scalar field on spacelike hypersurfaces in 1+1D."""
from .errors import *  # noqa: F401,F403
from .field_model import (
    Boundary,
    LatticeSpec,
    ModeFrame,
    QuadraticForm,
    StressEnergy,
    canonical_form,
    commutator_form,
    flat_mode_frame,
    kg_inner_product,
    lattice_dispersion,
    stress_energy_forms,
    symplectic_matrix,
)
from .embedding_geometry import (
    DeformationVector,
    Embedding,
    boost,
    bump_embedding,
    extrinsic_curvature_trace,
    flat_embedding,
    hyperbola_embedding,
    induced_metric,
    special_conformal,
    tilted_embedding,
    translate,
    unit_normal,
)
from .foliation import Foliation, build_inertial, build_interpolating, decompose_deformation
from .hamiltonian import SmearedHamiltonian, anomaly_potential, integrated_anomaly, smear_flux
from .evolve import (
    GaussianState,
    Propagator,
    coherent_state,
    evolve_foliation,
    frame_change_unitary,
    step,
    ts_residual,
    vacuum_state,
)
from .bogoliubov import BogoliubovMap, bogoliubov_between, expected_number, quench_number
from .qrf import (
    EmbeddingEnsemble,
    RelationalBranchState,
    change_frame,
    smeared_particle_number,
    transformed_number_expectation,
)
from .relational import (
    PhysicalFamily,
    dirac_expectation,
    heisenberg_equation_residual,
    heisenberg_observable,
    reduce,
    reduce_inverse,
)

__version__ = "0.1.0"
