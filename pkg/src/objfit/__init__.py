"""objfit: impute convex objective coefficients of parametric optimization
problems from observed decisions, and benchmark against ML regressors."""

from .solvers import (
    QPProblem,
    LPProblem,
    SolveResult,
    KKTReport,
    NumericalError,
    solve_qp,
    solve_lp,
    check_kkt,
    OPTIMAL,
    INFEASIBLE,
    UNBOUNDED,
)

__all__ = [
    "QPProblem",
    "LPProblem",
    "SolveResult",
    "KKTReport",
    "NumericalError",
    "solve_qp",
    "solve_lp",
    "check_kkt",
    "OPTIMAL",
    "INFEASIBLE",
    "UNBOUNDED",
]

__version__ = "0.1.0"
