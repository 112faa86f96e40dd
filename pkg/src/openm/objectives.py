"""Round loss oracles.

An oracle is anything with ``dim``, ``value(x)``, ``gradient(x)`` and
``hessian(x)``; :class:`ObjectiveOracle` spells that out as a protocol. The
concrete families here double as test instances with analytically known
curvature constants.
"""

from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np


@runtime_checkable
class ObjectiveOracle(Protocol):
    dim: int

    def value(self, x: np.ndarray) -> float: ...

    def gradient(self, x: np.ndarray) -> np.ndarray: ...

    def hessian(self, x: np.ndarray) -> np.ndarray: ...


class QuadraticObjective:
    """``f(x) = 0.5 (x - c)' Q (x - c) + offset`` with symmetric ``Q``."""

    def __init__(self, Q, center, offset: float = 0.0):
        Q = np.asarray(Q, dtype=float)
        self.Q = 0.5 * (Q + Q.T)
        self.center = np.asarray(center, dtype=float)
        self.offset = float(offset)
        self.dim = self.center.shape[0]
        if self.Q.shape != (self.dim, self.dim):
            raise ValueError(f"Q has shape {self.Q.shape}, expected {(self.dim, self.dim)}")

    @classmethod
    def identity(cls, n: int) -> "QuadraticObjective":
        """``0.5 * ||x||^2``."""
        return cls(np.eye(n), np.zeros(n))

    def value(self, x):
        d = np.asarray(x, dtype=float) - self.center
        return 0.5 * float(d @ self.Q @ d) + self.offset

    def gradient(self, x):
        return self.Q @ (np.asarray(x, dtype=float) - self.center)

    def hessian(self, x):
        return self.Q.copy()


class RotatedQuarticObjective:
    """Strongly convex, non-quadratic test loss.

    ``f(x) = sum_i q_i/2 y_i^2 + k/12 y_i^4`` with ``y = R'(x - c)`` and ``R``
    orthogonal. Its Hessian is ``R diag(q + k y^2) R'``, so

    * ``||H(c)^{-1}|| = 1 / min(q)``;
    * for ``||x - c|| <= radius``: ``||H(x) - H(c)|| <= k * radius * ||x - c||``.

    When ``c`` is feasible for the round constraint it is also the
    constrained optimum, which makes those constants exact for the theory.
    """

    def __init__(self, q, k: float, center, rotation=None):
        self.q = np.asarray(q, dtype=float)
        self.k = float(k)
        self.center = np.asarray(center, dtype=float)
        self.dim = self.center.shape[0]
        self.R = np.eye(self.dim) if rotation is None else np.asarray(rotation, dtype=float)

    def _y(self, x):
        return self.R.T @ (np.asarray(x, dtype=float) - self.center)

    def value(self, x):
        y = self._y(x)
        return float(np.sum(0.5 * self.q * y**2 + self.k / 12.0 * y**4))

    def gradient(self, x):
        y = self._y(x)
        return self.R @ (self.q * y + self.k / 3.0 * y**3)

    def hessian(self, x):
        y = self._y(x)
        H = (self.R * (self.q + self.k * y**2)) @ self.R.T
        return 0.5 * (H + H.T)

    def hessian_lipschitz(self, radius: float) -> float:
        return self.k * radius


class LinearObjective:
    """``f(x) = w'x + offset``; zero Hessian. Used for degenerate cases."""

    def __init__(self, w, offset: float = 0.0):
        self.w = np.asarray(w, dtype=float)
        self.offset = float(offset)
        self.dim = self.w.shape[0]

    def value(self, x):
        return float(self.w @ np.asarray(x, dtype=float)) + self.offset

    def gradient(self, x):
        return self.w.copy()

    def hessian(self, x):
        return np.zeros((self.dim, self.dim))
