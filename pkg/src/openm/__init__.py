"""Online Newton methods (OEN-M, OPEN-M) for sequential optimization under
time-varying linear equality constraints, with regret and violation metrics,
primal-dual comparators and a network-flow benchmark."""

from .core import (
    AffineEqualityConstraint,
    Algorithm,
    Constants,
    ProblemSequence,
    RoundProblem,
    Trajectory,
    oen_update,
    open_m_step,
    run,
    solve_round_optimum,
)
from .errors import *  # noqa: F401,F403
from .linalg import KKTSystem, null_space_basis, project_affine, reduced_newton_step, solve_kkt
from .metrics import (
    check_bounds,
    constraint_violation,
    dynamic_regret,
    path_length,
    regret_bound,
    violation_bound,
)
