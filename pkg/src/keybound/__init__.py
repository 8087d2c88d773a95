"""keybound: certified lower bounds on QKD secret-key rates.

The library turns a protocol description — a key-map POVM plus expectation
constraints on the shared state — into a reliable lower bound on the
asymptotic one-way key rate.  The bound comes from a Lagrange-dual
expression whose every evaluation is a valid certificate, so solver
shortfalls can only make the reported rate pessimistic, never wrong.
A small interior-point oracle solves the primal problem directly at desk
scale to cross-check tightness.
"""

from .dual import (
    DualResult,
    DualSolverError,
    SolverOptions,
    key_rate_from_theta,
    maximize_theta,
    theta_objective,
)
from .entropy import (
    JointDistribution,
    binary_entropy,
    coherence,
    cond_entropy,
    fano_bound,
    generalized_coherence,
    pinch,
    relative_entropy,
    von_neumann_entropy,
)
from .operators import (
    HermitianOperator,
    OperatorBasis,
    gram_schmidt_operators,
    herm_exp,
    herm_log,
    identity,
    is_psd,
    kron,
    partial_trace,
    sup_norm,
)
from .postselect import (
    TransformedConstraints,
    effective_constraints,
    transform_general,
    transform_invertible,
    unnormalized_rescale,
)
from .primal import (
    OracleOptions,
    PrimalConvergenceError,
    PrimalInfeasibleError,
    PrimalResult,
    perturb_constraints,
    perturbation_convergence_check,
    solve_primal,
)
from .protocols import (
    ConstraintSet,
    KeyMapPOVM,
    KeyRateProblem,
    bell_basis,
    build_b92,
    build_bb84,
    build_mdi_bb84,
    build_n_mub,
    build_rotated,
    build_six_state,
    build_two_mub,
    depolarize,
    error_operator,
    eur_baseline,
    fourier_matrix,
    generalized_paulis,
    mub_family,
    source_replacement,
    tomography_basis,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # operators
    "HermitianOperator",
    "OperatorBasis",
    "identity",
    "kron",
    "herm_exp",
    "herm_log",
    "sup_norm",
    "partial_trace",
    "gram_schmidt_operators",
    "is_psd",
    # entropy
    "JointDistribution",
    "von_neumann_entropy",
    "binary_entropy",
    "pinch",
    "relative_entropy",
    "coherence",
    "generalized_coherence",
    "cond_entropy",
    "fano_bound",
    # protocols
    "KeyMapPOVM",
    "ConstraintSet",
    "KeyRateProblem",
    "fourier_matrix",
    "generalized_paulis",
    "bell_basis",
    "mub_family",
    "error_operator",
    "depolarize",
    "tomography_basis",
    "source_replacement",
    "build_bb84",
    "build_six_state",
    "build_two_mub",
    "build_n_mub",
    "build_rotated",
    "eur_baseline",
    "build_b92",
    "build_mdi_bb84",
    # post-selection
    "TransformedConstraints",
    "transform_invertible",
    "transform_general",
    "effective_constraints",
    "unnormalized_rescale",
    # dual solver
    "SolverOptions",
    "DualResult",
    "DualSolverError",
    "theta_objective",
    "maximize_theta",
    "key_rate_from_theta",
    # primal oracle
    "OracleOptions",
    "PrimalResult",
    "PrimalInfeasibleError",
    "PrimalConvergenceError",
    "solve_primal",
    "perturb_constraints",
    "perturbation_convergence_check",
]
