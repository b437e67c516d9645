"""Multifidelity physics-informed Gaussian-process regression.

Five regressors over one posterior interface: stationary Kriging,
two-level CoKriging, ensemble-prior Kriging (PhIK) and CoKriging (CoPhIK),
and their bifidelity-accelerated variants built on lifted low-fidelity
ensembles (BiPhIK, CoBiPhIK).  Includes a numerical verifier for the
posterior-difference and constraint-preservation error bounds, a greedy
active-learning loop, and two built-in reproducible experiments.
"""

from .active import ExhaustedCandidates, OracleFailure, run_active_loop, relative_field_error
from .bifidelity import (
    BifidelitySelection,
    InnerProduct,
    build_bifidelity_ensemble,
    cost_ratio_report,
    gramian,
    lift,
    select_subset,
)
from .bounds import (
    BoundReport,
    LinearConstraint,
    compute_constants,
    verify_constraint_preservation,
    verify_lemmas,
    verify_theorem_1_2,
    verify_theorem_3,
    verify_theorem_4,
)
from .cokriging import (
    CoKrigingModel,
    CoKrigingPosterior,
    DimensionMismatch,
    MissingCommonPoints,
    assemble_joint_cov,
    cokriging_posterior,
    fit_cokriging,
    joint_log_likelihood,
)
from .cophik import CoPhikFit, cophik_posterior, fit_cophik
from .gp import (
    GaussianKernel,
    GpModel,
    HyperSearchConfig,
    Observations,
    Posterior,
    fit_ordinary_kriging,
    log_marginal_likelihood,
    posterior,
    stationary_model,
)
from .linalg import (
    NegativeDiagonal,
    NotPositiveDefinite,
    PivotedCholesky,
    Singular,
    cholesky_solve,
    inverse_perturbation_bound,
    inverse_spectral_norm,
    operator_norm,
    pivoted_cholesky,
    spectral_norm,
)
from .phik import (
    Ensemble,
    Grid,
    GridMismatch,
    SingleMember,
    ensemble_statistics,
    phik_posterior,
    uniform_grid,
)

__version__ = "0.1.0"
