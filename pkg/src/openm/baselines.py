"""First-order comparators on the relaxed inequality form.

These are simplified stand-ins in the spirit of MOSP (online saddle point)
and MALM (online augmented Lagrangian). They are not reproductions of
either method and are labelled "MOSP-style" / "MALM-style" everywhere.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .core import AffineEqualityConstraint, ProblemSequence, RoundProblem, Trajectory, simulate
from .errors import NonFiniteIterate


class Baseline(str, enum.Enum):
    MOSP_STYLE = "MOSP-style"
    MALM_STYLE = "MALM-style"


@dataclass(frozen=True)
class LinearInequality:
    """``g(x) = G x - h <= 0`` built from an equality ``A x = b``.

    ``sense="le"`` keeps ``A x - b <= 0``. ``sense="ge"`` encodes
    ``A x - b >= 0`` as ``-A x + b <= 0``; both share the same ``(A, b)``.
    """

    A: np.ndarray
    b: np.ndarray
    sense: str = "le"

    def __post_init__(self):
        if self.sense not in ("le", "ge"):
            raise ValueError(f"sense must be 'le' or 'ge', got {self.sense!r}")

    @property
    def sign(self) -> float:
        return 1.0 if self.sense == "le" else -1.0

    def g(self, x) -> np.ndarray:
        return self.sign * (self.A @ x - self.b)

    def jac_t(self, lam) -> np.ndarray:
        """``G' lam``."""
        return self.sign * (self.A.T @ lam)

    def satisfied(self, x, tol: float = 0.0) -> bool:
        return bool(np.all(self.g(np.asarray(x, dtype=float)) <= tol))


def relax_constraint(c: AffineEqualityConstraint, sense: str = "le") -> LinearInequality:
    return LinearInequality(c.A, c.b, sense)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteIterate("iterate left the finite range; step size too large?")


@dataclass(frozen=True)
class SaddlePointState:
    x: np.ndarray
    lam: np.ndarray
    eta_x: float
    eta_l: float

    def __post_init__(self):
        if not (self.eta_x > 0 and self.eta_l > 0):
            raise ValueError("step sizes must be positive")
        if np.any(np.asarray(self.lam) < 0):
            raise ValueError("multipliers must be non-negative")


@dataclass(frozen=True)
class AugLagState:
    x: np.ndarray
    lam: np.ndarray
    rho: float
    eta_x: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.eta_x > 0:
            raise ValueError("eta_x must be positive")
        if np.any(np.asarray(self.lam) < 0):
            raise ValueError("multipliers must be non-negative")


def saddle_point_step(state: SaddlePointState, round: RoundProblem, sense: str = "le") -> SaddlePointState:
    """Primal descent / dual ascent on ``f(x) + lam' g(x)``."""
    ineq = relax_constraint(round.constraint, sense)
    x, lam = state.x, state.lam
    with np.errstate(over="ignore", invalid="ignore"):
        x_new = x - state.eta_x * (round.objective.gradient(x) + ineq.jac_t(lam))
        _check_finite(x_new)
        lam_new = np.maximum(0.0, lam + state.eta_l * ineq.g(x_new))
    _check_finite(lam_new)
    return replace(state, x=x_new, lam=lam_new)


def aug_lagrangian_step(state: AugLagState, round: RoundProblem, sense: str = "le") -> AugLagState:
    """One gradient step on ``f + lam' g + rho/2 ||max(0, g)||^2``, then
    ``lam <- max(0, lam + rho g(x+))``."""
    ineq = relax_constraint(round.constraint, sense)
    x, lam, rho = state.x, state.lam, state.rho
    with np.errstate(over="ignore", invalid="ignore"):
        penalty = rho * np.maximum(0.0, ineq.g(x))
        x_new = x - state.eta_x * (round.objective.gradient(x) + ineq.jac_t(lam + penalty))
        _check_finite(x_new)
        lam_new = np.maximum(0.0, lam + rho * ineq.g(x_new))
    _check_finite(lam_new)
    return replace(state, x=x_new, lam=lam_new)


def default_step(c: float, horizon: int) -> float:
    """``c / sqrt(T)``."""
    return c / math.sqrt(horizon)


def run_baseline(
    baseline,
    problems: ProblemSequence,
    x0,
    *,
    eta_x: float,
    eta_l: float | None = None,
    rho: float | None = None,
    sense: str = "le",
    optima=None,
) -> Trajectory:
    """Run one of the baselines from ``x0`` with zero initial multipliers.

    MOSP-style needs ``eta_x`` and ``eta_l``; MALM-style needs ``eta_x`` and ``rho``.
    """
    baseline = Baseline(baseline)
    x0 = np.asarray(x0, dtype=float)
    lam0 = np.zeros(problems[0].constraint.p)
    if baseline is Baseline.MOSP_STYLE:
        state = SaddlePointState(x0, lam0, eta_x, eta_l)
        step = saddle_point_step
    else:
        state = AugLagState(x0, lam0, rho, eta_x)
        step = aug_lagrangian_step
    box = [state]

    def stepper(x, rnd):
        s = replace(box[0], x=x)
        if s.lam.shape[0] != rnd.constraint.p:
            s = replace(s, lam=np.zeros(rnd.constraint.p))
        s = step(s, rnd, sense)
        box[0] = s
        return s.x, s.lam.copy(), None

    return simulate(baseline.value, problems, x0, stepper, optima)
