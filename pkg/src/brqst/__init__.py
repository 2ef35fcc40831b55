"""Bounded-rank quantum state tomography toolkit.

Measurement construction (diagonal-probing POVMs, paired bases, Haar-random
bases), noiseless and multinomial data simulation, algebraic density-matrix
completion through Schur complements, and PSD-constrained convex estimation.
"""

from .completion import (
    PartialMatrix,
    PlanMember,
    StrictnessReport,
    SubmatrixPlan,
    check_proposition1,
    complete_rankr,
    default_plan,
    extract_flammia,
    extract_goyeneche,
    falsify_strictness,
)
from .errors import BrqstError, DegenerateEstimateError, FailureSetError, InfeasibleError
from .estimators import (
    EstimateReport,
    SolverConfig,
    default_epsilon,
    estimate_ls,
    estimate_mle,
    estimate_trace_min,
)
from .experiments import (
    NoiseModel,
    RobustnessResult,
    SweepResult,
    run_robustness_sweep,
    run_strictness_sweep,
    simulate_counts,
)
from .linalg import (
    HermitianMatrix,
    Inertia,
    eig_hermitian,
    fidelity,
    fidelity_pure,
    inertia,
    infidelity,
    numerical_rank,
    project_density,
    project_psd,
    random_haar_unitary,
    random_mixed_hs,
    random_pure_state,
    random_rank_r_state,
    schur_complement,
)
from .povm import (
    BasisSet,
    MeasurementVector,
    Povm,
    PovmValidation,
    apply_measurement_map,
    bases_to_povm,
    build_flammia_rankr,
    build_flammia_sequential,
    build_goyeneche_bases,
    build_local_random_bases,
    build_random_bases,
    kernel_basis,
    split_by_basis,
    validate_povm,
)
from .rng import RandomStream

__version__ = "0.1.0"

__all__ = [
    "BasisSet",
    "BrqstError",
    "DegenerateEstimateError",
    "EstimateReport",
    "FailureSetError",
    "HermitianMatrix",
    "Inertia",
    "InfeasibleError",
    "MeasurementVector",
    "NoiseModel",
    "PartialMatrix",
    "PlanMember",
    "Povm",
    "PovmValidation",
    "RandomStream",
    "RobustnessResult",
    "SolverConfig",
    "StrictnessReport",
    "SubmatrixPlan",
    "SweepResult",
    "apply_measurement_map",
    "bases_to_povm",
    "build_flammia_rankr",
    "build_flammia_sequential",
    "build_goyeneche_bases",
    "build_local_random_bases",
    "build_random_bases",
    "check_proposition1",
    "complete_rankr",
    "default_epsilon",
    "default_plan",
    "eig_hermitian",
    "estimate_ls",
    "estimate_mle",
    "estimate_trace_min",
    "extract_flammia",
    "extract_goyeneche",
    "falsify_strictness",
    "fidelity",
    "fidelity_pure",
    "inertia",
    "infidelity",
    "kernel_basis",
    "numerical_rank",
    "project_density",
    "project_psd",
    "random_haar_unitary",
    "random_mixed_hs",
    "random_pure_state",
    "random_rank_r_state",
    "run_robustness_sweep",
    "run_strictness_sweep",
    "schur_complement",
    "simulate_counts",
    "split_by_basis",
    "validate_povm",
]
