"""Low-rank Newton method for nonlinear systems with one affine scalar parameter."""

from .driver import BlockApproximation, RunReport, compare, evaluate, run_algorithm1
from .linalg import (
    Factorization,
    LowRankFactors,
    SingularMatrix,
    SparseMatrix,
    factorize,
    lr_add,
    truncate,
)
from .matrixeq import (
    ChebyshevConfig,
    SylvesterOperator,
    build_rhs,
    chebyshev_solve,
    estimate_spectrum,
    mean_preconditioner,
    subset_newton_step,
)
from .newton import NewtonConfig, NewtonResult, baseline_sweep, newton_solve
from .partition import ParameterPartition, ParameterSet, split, upper_median_index
from .problem import BurgersFSI1D, ModelConfig, ParametricProblem, build_problem, poisson_ratio

__version__ = "0.1.0"
