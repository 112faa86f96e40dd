"""OEN-M / OPEN-M steppers, the round-optimum solver and the online runner.

Round ``t`` of a run plays the decision produced at round ``t - 1``; only
after playing does the runner hand the round's loss and constraint to the
stepper, which produces the next decision. The played decision, never the
projected one, is what regret and violation are charged on.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import linalg
from .errors import (
    ConstraintDriftError,
    DimensionMismatch,
    InfeasibleInput,
    NoConvergence,
)
from .objectives import ObjectiveOracle

FEASIBILITY_TOL = 1e-8
# relative level below which the KKT residual norm is dominated by roundoff
ROUNDOFF_FLOOR = 1e4 * np.finfo(float).eps


class Algorithm(str, enum.Enum):
    OEN_M = "OEN-M"
    OPEN_M = "OPEN-M"


@dataclass(frozen=True)
class AffineEqualityConstraint:
    """``A x = b`` with ``A`` of full row rank ``p < n``."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = linalg.as_matrix(self.A, "A")
        b = linalg.as_vector(self.b, "b")
        if b.shape[0] != A.shape[0]:
            raise DimensionMismatch(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        if A.shape[0] >= A.shape[1]:
            raise DimensionMismatch(f"need p < n, got A of shape {A.shape}")
        # raises RankDeficientConstraint
        linalg._qr_of_transpose(A, "reduced")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def p(self) -> int:
        return self.A.shape[0]

    def residual(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) - self.b

    def violation(self, x) -> float:
        return float(np.linalg.norm(self.residual(x)))

    def is_feasible(self, x, tol: float = FEASIBILITY_TOL) -> bool:
        return self.violation(x) <= tol * (1.0 + float(np.linalg.norm(self.b)))

    def same_as(self, other: "AffineEqualityConstraint") -> bool:
        return np.array_equal(self.A, other.A) and np.array_equal(self.b, other.b)


@dataclass(frozen=True)
class RoundProblem:
    t: int
    objective: ObjectiveOracle
    constraint: AffineEqualityConstraint

    def __post_init__(self):
        if self.objective.dim != self.constraint.n:
            raise DimensionMismatch(
                f"objective has dimension {self.objective.dim}, constraint acts on {self.constraint.n}"
            )


class ProblemSequence(Sequence[RoundProblem]):
    """An ordered, immutable list of rounds.

    Round optima are computed on demand, warm-started from the previous
    round's optimum, and cached so several algorithms can share them.
    """

    def __init__(self, rounds: Iterable[RoundProblem]):
        self._rounds = tuple(rounds)
        if not self._rounds:
            raise ValueError("a problem sequence needs at least one round")
        n = self._rounds[0].constraint.n
        if any(r.constraint.n != n for r in self._rounds):
            raise DimensionMismatch("all rounds must share the decision dimension")
        self._optima: list[tuple[np.ndarray, np.ndarray]] | None = None

    @classmethod
    def generate(cls, factory: Callable[[int], RoundProblem], horizon: int, start: int = 1):
        return cls(factory(t) for t in range(start, start + horizon))

    def __len__(self):
        return len(self._rounds)

    def __getitem__(self, i):
        return self._rounds[i]

    @property
    def n(self) -> int:
        return self._rounds[0].constraint.n

    def has_fixed_constraint(self) -> bool:
        c0 = self._rounds[0].constraint
        return all(r.constraint.same_as(c0) for r in self._rounds[1:])

    def optima(self, x_init=None, tol: float = 1e-10, max_iters: int = 200) -> list[tuple[np.ndarray, np.ndarray]]:
        """Round optima, computed on the first call (later arguments are ignored)."""
        if self._optima is None:
            x = np.zeros(self.n) if x_init is None else np.asarray(x_init, dtype=float)
            out = []
            for r in self._rounds:
                x_star, nu_star = solve_round_optimum(r, x, tol, max_iters=max_iters)
                out.append((x_star, nu_star))
                x = x_star
            self._optima = out
        return self._optima


@dataclass(frozen=True)
class Constants:
    """Problem-class constants behind the regret and violation bounds.

    ``h`` floors the inverse Hessian norm at the optimum, ``L`` is the Hessian
    Lipschitz constant on the ``beta``-ball around it, ``l`` the loss Lipschitz
    constant, ``v_bar`` caps the per-round optimum drift and ``a`` caps
    ``||A_t||``.
    """

    h: float
    beta: float
    L: float
    l: float
    v_bar: float = 0.0
    a: float = 0.0

    def __post_init__(self):
        for name in ("h", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        for name in ("L", "l", "v_bar", "a"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be non-negative and finite, got {v}")

    @property
    def gamma(self) -> float:
        if self.L == 0:
            return self.beta
        return min(self.beta, self.h / (2.0 * self.L))

    def max_drift(self) -> float:
        """Largest ``v_bar`` the regret bounds allow: ``gamma - (2L/h) gamma^2``."""
        g = self.gamma
        return g - 2.0 * self.L / self.h * g * g

    def drift_condition_holds(self) -> bool:
        return self.v_bar <= self.max_drift()


@dataclass(frozen=True)
class RoundRecord:
    t: int
    x: np.ndarray
    dual: np.ndarray | None
    loss: float
    x_star: np.ndarray | None
    nu_star: np.ndarray | None
    opt_loss: float | None
    residual: float
    x_projected: np.ndarray | None = None


@dataclass
class Trajectory:
    """Per-round history of one online run."""

    algorithm: str
    records: list[RoundRecord] = field(default_factory=list)
    final_x: np.ndarray | None = None

    def __len__(self):
        return len(self.records)

    @property
    def horizon(self) -> int:
        return len(self.records)

    @property
    def decisions(self) -> np.ndarray:
        return np.array([r.x for r in self.records])

    @property
    def optima(self) -> np.ndarray:
        return np.array([r.x_star for r in self.records])

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    @property
    def opt_losses(self) -> np.ndarray:
        return np.array([np.nan if r.opt_loss is None else r.opt_loss for r in self.records])

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r.residual for r in self.records])

    def distances(self) -> np.ndarray:
        """``||x_t - x_t*||`` per round."""
        return np.linalg.norm(self.decisions - self.optima, axis=1)


# --------------------------------------------------------------------------
# steppers


def oen_update(x, round: RoundProblem) -> tuple[np.ndarray, np.ndarray]:
    """One equality-constrained Newton step from a feasible ``x``."""
    x = linalg.as_vector(x, "x")
    c = round.constraint
    if x.shape[0] != c.n:
        raise DimensionMismatch(f"x has {x.shape[0]} entries, round acts on {c.n}")
    if not c.is_feasible(x):
        raise InfeasibleInput(f"x violates the round constraint by {c.violation(x):.3e}")
    f = round.objective
    sys = linalg.KKTSystem(f.hessian(x), c.A, f.gradient(x))
    step, dual = linalg.solve_kkt(sys)
    return x + step, dual


def open_m_step(x, round: RoundProblem) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project onto the round's affine set, then take an OEN step.

    Returns ``(x_next, dual, x_projected)``.
    """
    c = round.constraint
    x_proj = linalg.project_affine(x, c.A, c.b)
    x_next, dual = oen_update(x_proj, round)
    return x_next, dual, x_proj


# --------------------------------------------------------------------------
# offline optimum


def solve_round_optimum(
    round: RoundProblem,
    x_init,
    tol: float = 1e-10,
    max_iters: int = 200,
    shrink: float = 0.5,
    sufficient_decrease: float = 1e-4,
) -> tuple[np.ndarray, np.ndarray]:
    """Find a KKT point of the round by damped equality-constrained Newton.

    Starts from the projection of ``x_init`` and backtracks on the norm of the
    KKT residual ``(grad f + A' nu, A x - b)``, with the constraint expressed
    in the row basis of :class:`linalg.ConstraintBasis` (same affine set, no
    cancellation between huge multipliers). Stops once ``||A x - b|| <=
    tol (1 + ||b||)`` and the Newton step satisfies ``||dx|| <= tol (1 + ||x||)``.

    The step test stands in for a test on ``||grad f + A' nu||``: with
    gradients near 1e90 (early benchmark rounds) that residual has a roundoff
    floor far above any useful absolute tolerance, while the step stays
    well scaled.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    f, c = round.objective, round.constraint
    basis = linalg.ConstraintBasis(c.A)
    At, bt = basis.At, basis.to_basis(c.b)
    x = linalg.as_vector(x_init, "x_init")
    if not c.is_feasible(x, tol):
        x = linalg.project_affine(x, c.A, c.b)

    def residual(x, nu_t):
        g = f.gradient(x)
        return np.concatenate([g + At.T @ nu_t, At @ x - bt]), g

    nu_t = -np.linalg.lstsq(At.T, f.gradient(x), rcond=None)[0]
    b_scale = 1.0 + np.linalg.norm(c.b)
    r, g = residual(x, nu_t)
    damped = True
    for _ in range(max_iters):
        # right-hand side carries the primal residual so infeasibility is also corrected
        fac = linalg.KKTFactor(f.hessian(x), c.A, basis)
        dx, nu_plus = fac.solve_in_basis(-g, -r[c.n :])
        if not np.all(np.isfinite(dx)):
            raise NoConvergence("Newton step is not finite")
        if np.linalg.norm(dx) <= tol * (1.0 + np.linalg.norm(x)) and c.violation(x) <= tol * b_scale:
            return x, basis.dual_from_basis(nu_plus)
        dnu = nu_plus - nu_t
        s = 1.0
        norm_r = np.linalg.norm(r)
        if damped and norm_r <= ROUNDOFF_FLOOR * (np.linalg.norm(g) + np.linalg.norm(At.T @ nu_t)):
            # The residual is within roundoff of the gradient scale, so its
            # decrease is no longer measurable; finish with full Newton steps.
            damped = False
        if damped:
            while True:
                with np.errstate(over="ignore", invalid="ignore"):
                    r_try, _ = residual(x + s * dx, nu_t + s * dnu)
                if np.all(np.isfinite(r_try)) and np.linalg.norm(r_try) <= (1 - sufficient_decrease * s) * norm_r:
                    break
                s *= shrink
                if s < 1e-12:
                    # The residual norm is at the roundoff floor of the largest
                    # terms while small-cost components still move; from here on
                    # take full Newton steps, which converge locally.
                    damped, s = False, 1.0
                    break
        x, nu_t = x + s * dx, nu_t + s * dnu
        with np.errstate(over="ignore", invalid="ignore"):
            r, g = residual(x, nu_t)
        if not np.all(np.isfinite(r)):
            raise NoConvergence("iterate left the finite range")
    raise NoConvergence(f"no KKT point within {max_iters} iterations")


def initial_point(round: RoundProblem, x_star, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Feasible start at distance ``radius`` from ``x_star`` along a random null-space direction."""
    x_star = np.asarray(x_star, dtype=float)
    if radius == 0:
        return x_star.copy()
    F = linalg.null_space_basis(round.constraint.A)
    u = F @ rng.standard_normal(F.shape[1])
    return x_star + radius * u / np.linalg.norm(u)


# --------------------------------------------------------------------------
# online loop

# a stepper maps (decision, round) to (next decision, dual estimate or None, projected point or None)
Stepper = Callable[[np.ndarray, RoundProblem], tuple]


def simulate(
    label: str,
    problems: ProblemSequence,
    x0,
    stepper: Stepper,
    optima: Sequence[tuple[np.ndarray, np.ndarray]] | None = None,
) -> Trajectory:
    """Play ``x0`` then every stepper output, one round at a time.

    ``stepper(x_t, round_t)`` is called only after ``x_t`` has been recorded
    as played, so decisions never see their own round's loss.
    """
    x = linalg.as_vector(x0, "x0").copy()
    if x.shape[0] != problems.n:
        raise DimensionMismatch(f"x0 has {x.shape[0]} entries, problems act on {problems.n}")
    if optima is None:
        optima = problems.optima(x)
    traj = Trajectory(label)
    for i, rnd in enumerate(problems):
        x_star, nu_star = optima[i]
        loss = float(rnd.objective.value(x))
        x_next, dual, x_proj = stepper(x, rnd)
        traj.records.append(
            RoundRecord(
                t=rnd.t,
                x=x,
                dual=None if dual is None else np.asarray(dual),
                loss=loss,
                x_star=x_star,
                nu_star=nu_star,
                opt_loss=float(rnd.objective.value(x_star)),
                residual=rnd.constraint.violation(x),
                x_projected=x_proj,
            )
        )
        x = np.asarray(x_next, dtype=float)
    traj.final_x = x
    return traj


def _oen_stepper(x, rnd):
    x_next, dual = oen_update(x, rnd)
    return x_next, dual, None


def run(algorithm, problems: ProblemSequence, x0, optima=None) -> Trajectory:
    """Run OEN-M or OPEN-M over ``problems`` starting from ``x0``."""
    algorithm = Algorithm(algorithm)
    if algorithm is Algorithm.OEN_M:
        if not problems.has_fixed_constraint():
            raise ConstraintDriftError("OEN-M needs the same (A, b) in every round; use OPEN-M")
        if not problems[0].constraint.is_feasible(x0):
            raise InfeasibleInput("OEN-M needs a feasible starting point")
        return simulate(algorithm.value, problems, x0, _oen_stepper, optima)
    return simulate(algorithm.value, problems, x0, open_m_step, optima)
