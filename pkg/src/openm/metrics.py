"""Dynamic regret, constraint violation, path length and the closed-form bounds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Constants, Trajectory
from .errors import DegenerateConstants, MissingOptima


@dataclass(frozen=True)
class MetricSeries:
    cumulative_regret: np.ndarray
    cumulative_violation: np.ndarray
    path_length: float
    delta: float


def dynamic_regret(traj: Trajectory) -> np.ndarray:
    """Cumulative signed regret ``sum_{s<=t} f_s(x_s) - f_s(x_s*)``."""
    if any(r.opt_loss is None for r in traj.records):
        raise MissingOptima("every round needs its optimal loss recorded")
    gaps = np.array([r.loss - r.opt_loss for r in traj.records], dtype=float)
    return np.cumsum(gaps)


def constraint_violation(traj: Trajectory) -> np.ndarray:
    """Cumulative ``sum_{s<=t} ||A_s x_s - b_s||``."""
    return np.cumsum(np.array([r.residual for r in traj.records], dtype=float))


def path_length(optima) -> float:
    """Total variation ``sum ||x*_{t+1} - x*_t||`` of a sequence of optima."""
    X = np.atleast_2d(np.asarray(optima, dtype=float))
    if X.shape[0] < 1:
        raise ValueError("need at least one optimum")
    if X.shape[0] == 1:
        return 0.0
    return float(np.linalg.norm(np.diff(X, axis=0), axis=1).sum())


def delta_term(c: Constants, initial_distance: float, final_distance: float) -> float:
    """``(2L/h) gamma (||x_0 - x_0*|| - ||x_T - x_T*||)``; may be negative."""
    return 2.0 * c.L / c.h * c.gamma * (initial_distance - final_distance)


def trajectory_delta(c: Constants, traj: Trajectory) -> float:
    d = traj.distances()
    return delta_term(c, float(d[0]), float(d[-1]))


def _bound_factor(c: Constants) -> float:
    denom = c.h - 2.0 * c.L * c.gamma
    if not denom > 0:
        raise DegenerateConstants(f"h - 2 L gamma = {denom} must be positive")
    return c.h / denom


def regret_bound(c: Constants, V_T: float, delta: float) -> float:
    """``l h (V_T + delta) / (h - 2 L gamma)``."""
    return c.l * _bound_factor(c) * (V_T + delta)


def violation_bound(c: Constants, V_T: float, delta: float) -> float:
    """``a h (V_T + delta) / (h - 2 L gamma)``."""
    return c.a * _bound_factor(c) * (V_T + delta)


def summarize(traj: Trajectory, c: Constants | None = None) -> MetricSeries:
    delta = trajectory_delta(c, traj) if c is not None else 0.0
    return MetricSeries(
        cumulative_regret=dynamic_regret(traj),
        cumulative_violation=constraint_violation(traj),
        path_length=path_length(traj.optima),
        delta=delta,
    )


@dataclass(frozen=True)
class BoundCheck:
    """Measured totals next to the closed-form bounds.

    The first record is treated as the initialization round: its decision
    ``x_0`` is chosen before any update, so it enters the path length and
    ``delta`` but not the regret or violation totals.
    """

    regret: float
    violation: float
    path_length: float
    delta: float
    regret_bound: float
    violation_bound: float

    def regret_ok(self, slack: float = 1e-6) -> bool:
        return self.regret <= self.regret_bound + slack

    def violation_ok(self, slack: float = 1e-6) -> bool:
        return self.violation <= self.violation_bound + slack


def check_bounds(traj: Trajectory, c: Constants) -> BoundCheck:
    if len(traj) < 2:
        raise ValueError("need at least the initialization round and one update")
    regret = dynamic_regret(traj)
    violation = constraint_violation(traj)
    V = path_length(traj.optima)
    delta = trajectory_delta(c, traj)
    return BoundCheck(
        regret=float(regret[-1] - regret[0]),
        violation=float(violation[-1] - violation[0]),
        path_length=V,
        delta=delta,
        regret_bound=regret_bound(c, V, delta),
        violation_bound=violation_bound(c, V, delta),
    )


def half_ratio(series) -> float:
    """Average per-round increment over the second half of the horizon
    divided by that over the first half (``inf`` if the first half is flat)."""
    s = np.asarray(series, dtype=float)
    T = s.shape[0]
    half = T // 2
    if half < 1:
        raise ValueError("need at least two rounds")
    first = s[half - 1] / half
    second = (s[-1] - s[half - 1]) / (T - half)
    if first == 0:
        return 0.0 if second == 0 else float("inf")
    return float(second / first)
