"""Parallel successive convex approximation for block-separable composite problems.

``psca`` minimizes ``f(x) + sum_i g_i(x_i)`` over a product of convex sets by
updating a subset of blocks per iteration, each against a strongly convex
surrogate of ``f``, and ships audits of the descent and rate guarantees.
"""

__version__ = "0.1.0"

from . import kernels
from .diagnostics import (
    AuditReport,
    ComplexityConstants,
    ensemble_t_epsilon,
    estimate_constants,
    lipschitz_bestresponse_probe,
    prox_gradient_map,
    rate_fit,
    sufficient_decrease_audit,
)
from .errors import (
    ConvergenceError,
    InconsistentOptimumError,
    InvalidArgumentError,
    NumericalFailureError,
    PSCAError,
    UnsupportedOperationError,
)
from .lasso import (
    LassoInstance,
    as_problem,
    certify_kkt,
    generate_nesterov,
    load_instance,
    save_instance,
    soft_threshold,
)
from .nonconvex import generate_nonconvex_qp
from .problem import (
    BlockFunctions,
    BlockLayout,
    Iterate,
    L1Box,
    LeastSquares,
    Problem,
    QuadraticForm,
    SmoothFunction,
    block_prox,
    evaluate_objective,
    evaluate_smooth_gradient,
)
from .scheduler import CyclicSchedule, RandomizedSchedule, make_partition, select_blocks
from .solver import (
    SerialRule,
    SolverConfig,
    SolverTrace,
    Termination,
    psca_run,
    psca_step,
    serial_bcd_run,
)
from .spectral import power_iteration
from .stepsize import StepKind, StepSchedule, check_step_gate, gamma_bar, step_at
from .surrogates import (
    SurrogateFamily,
    SurrogateSpec,
    best_response,
    certify_constants,
    make_surrogate,
    surrogate_gradient,
    surrogate_value,
    verify_gradient_consistency,
)
