"""Self-contained optimisation kernels used across the package.

Everything here is deterministic: identical problem data produces an
identical result object, which the cascade golden traces rely on.
"""

from .linsys import SingularSystemError, factor_pinned, solve_linear_system
from .simplex import LpProblem, LpResult, solve_lp
from .branch_bound import IlpProblem, IlpResult, solve_ilp
from .lasso import LassoProblem, LassoResult, default_lambda, solve_constrained_lasso

__all__ = [
    "IlpProblem",
    "IlpResult",
    "LassoProblem",
    "LassoResult",
    "LpProblem",
    "LpResult",
    "SingularSystemError",
    "default_lambda",
    "factor_pinned",
    "solve_constrained_lasso",
    "solve_ilp",
    "solve_linear_system",
    "solve_lp",
]
