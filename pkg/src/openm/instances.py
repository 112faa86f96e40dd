"""Synthetic instance families with analytically known constants.

Each generator returns the problem sequence together with the
:class:`~openm.core.Constants` that certify it, so bound checks never rely on
constants estimated from the run they are checking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .core import AffineEqualityConstraint, Constants, ProblemSequence, RoundProblem
from .objectives import QuadraticObjective, RotatedQuarticObjective


@dataclass
class CertifiedFamily:
    problems: ProblemSequence
    constants: Constants
    x0: np.ndarray
    centers: np.ndarray

    @property
    def optima(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Known round optima: every center is feasible and stationary, so the
        optimal multiplier is zero."""
        return [(c, np.zeros(r.constraint.p)) for c, r in zip(self.centers, self.problems)]


def random_orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def random_spd(rng: np.random.Generator, n: int, lo: float, hi: float) -> np.ndarray:
    """Symmetric matrix with eigenvalues in ``[lo, hi]`` and smallest exactly ``lo``."""
    eig = rng.uniform(lo, hi, size=n)
    eig[0] = lo
    R = random_orthogonal(rng, n)
    M = (R * eig) @ R.T
    return 0.5 * (M + M.T)


def random_constraint_matrix(rng: np.random.Generator, p: int, n: int, norm: float | None = None) -> np.ndarray:
    """Gaussian ``p x n`` matrix, optionally rescaled to spectral norm ``norm``."""
    A = rng.standard_normal((p, n))
    if norm is not None:
        A *= norm / np.linalg.norm(A, 2)
    return A


def _unit(rng, v):
    return v / np.linalg.norm(v)


def drifting_quadratic(
    seed: int,
    n: int = 10,
    p: int = 3,
    horizon: int = 200,
    varying_constraint: bool = False,
    h: float = 1.0,
    q_max: float = 4.0,
    v_bar: float = 0.5,
    a: float = 1.0,
    init_radius: float = 0.0,
) -> CertifiedFamily:
    """Quadratics ``0.5 (x - c_t)' Q_t (x - c_t)`` whose centers drift by at most
    ``v_bar`` per round and are always feasible, so ``x_t* = c_t``.

    With a fixed constraint the centers move inside the affine set; with
    ``varying_constraint`` each round draws a fresh ``A_t`` of spectral norm
    ``a`` and sets ``b_t = A_t c_t``.

    Constants: ``L = 0`` so ``gamma = beta = v_bar``; on the ``gamma``-ball the
    loss gap is at most ``0.5 q_max ||d||^2 <= 0.5 q_max gamma ||d||``.
    """
    rng = np.random.default_rng(seed)
    beta = v_bar
    A = random_constraint_matrix(rng, p, n, a)
    F = linalg.null_space_basis(A)
    c = rng.standard_normal(n)
    centers = [c]
    for _ in range(horizon - 1):
        step = rng.uniform(0.0, v_bar)
        if varying_constraint:
            d = _unit(rng, rng.standard_normal(n))
        else:
            d = _unit(rng, F @ rng.standard_normal(n - p))
        c = c + step * d
        centers.append(c)
    rounds = []
    fixed = None if varying_constraint else AffineEqualityConstraint(A, A @ centers[0])
    for t, c in enumerate(centers, start=1):
        if varying_constraint:
            A_t = A if t == 1 else random_constraint_matrix(rng, p, n, a)
            con = AffineEqualityConstraint(A_t, A_t @ c)
        else:
            con = fixed
        rounds.append(RoundProblem(t, QuadraticObjective(random_spd(rng, n, h, q_max), c), con))
    problems = ProblemSequence(rounds)
    consts = Constants(h=h, beta=beta, L=0.0, l=0.5 * q_max * beta, v_bar=v_bar, a=a)
    x0 = centers[0].copy()
    if init_radius:
        F0 = linalg.null_space_basis(rounds[0].constraint.A)
        x0 = x0 + init_radius * _unit(rng, F0 @ rng.standard_normal(F0.shape[1]))
    return CertifiedFamily(problems, consts, x0, np.array(centers))


@dataclass
class QuarticInstance:
    round: RoundProblem
    h: float
    L: float
    beta: float

    @property
    def gamma(self) -> float:
        return min(self.beta, self.h / (2.0 * self.L))

    @property
    def optimum(self) -> np.ndarray:
        return self.round.objective.center


def quartic_instance(rng: np.random.Generator, n: int, p: int, h: float = 1.0, q_max: float = 5.0,
                     k: float = 2.0, beta: float = 1.0, t: int = 1) -> QuarticInstance:
    """Rotated separable quartic with a feasible center: ``x* = c``,
    ``h = min(q)``, and ``L = k beta`` on the ``beta``-ball."""
    q = rng.uniform(h, q_max, size=n)
    q[rng.integers(n)] = h
    c = rng.standard_normal(n)
    f = RotatedQuarticObjective(q, k, c, random_orthogonal(rng, n))
    A = random_constraint_matrix(rng, p, n)
    rnd = RoundProblem(t, f, AffineEqualityConstraint(A, A @ c))
    return QuarticInstance(rnd, h, f.hessian_lipschitz(beta), beta)


def drifting_quartic(seed: int, n: int = 8, p: int = 3, horizon: int = 200, h: float = 1.0,
                     q_max: float = 4.0, k: float = 1.0, beta: float = 0.5) -> CertifiedFamily:
    """Fixed-constraint quartic family with ``L = k beta > 0``.

    Centers drift inside the affine set by at most ``gamma - (2L/h) gamma^2``.
    The loss gap on the ``gamma``-ball is bounded with
    ``l = 0.5 q_max gamma + k gamma^3 / 12``.
    """
    rng = np.random.default_rng(seed)
    L = k * beta
    gamma = min(beta, h / (2 * L))
    v_bar = gamma - 2 * L / h * gamma**2
    A = random_constraint_matrix(rng, p, n)
    F = linalg.null_space_basis(A)
    c = rng.standard_normal(n)
    con = AffineEqualityConstraint(A, A @ c)
    R = random_orthogonal(rng, n)
    centers, rounds = [], []
    for t in range(1, horizon + 1):
        if t > 1:
            c = c + rng.uniform(0.0, v_bar) * _unit(rng, F @ rng.standard_normal(n - p))
        centers.append(c)
        q = rng.uniform(h, q_max, size=n)
        q[0] = h
        rounds.append(RoundProblem(t, RotatedQuarticObjective(q, k, c, R), con))
    l = 0.5 * q_max * gamma + k * gamma**3 / 12.0
    consts = Constants(h=h, beta=beta, L=L, l=l, v_bar=v_bar, a=float(np.linalg.norm(A, 2)))
    x0 = centers[0] + gamma * _unit(rng, F @ rng.standard_normal(n - p))
    return CertifiedFamily(ProblemSequence(rounds), consts, x0, np.array(centers))
