"""Dense kernels: KKT solve, affine projection, null-space basis.

Everything here is a pure function of ndarray inputs. Tolerances are taken
relative to the scale of the data, ``tol * (1 + norm)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .errors import (
    DimensionMismatch,
    InfeasibleInput,
    RankDeficientConstraint,
    SingularKKT,
    SingularReducedHessian,
)

#: reciprocal condition estimate below which a factorization is rejected
RCOND_MIN = 1e-12
#: relative pivot size below which a constraint matrix is declared rank deficient
RANK_TOL = 1e-12
SYMMETRY_TOL = 1e-10
FEASIBILITY_TOL = 1e-8


def as_vector(x, name="vector") -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise DimensionMismatch(f"{name} must be one-dimensional, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def as_matrix(a, name="matrix") -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise DimensionMismatch(f"{name} must be two-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


@dataclass(frozen=True)
class KKTSystem:
    """Data of one equality-constrained Newton system.

    The block matrix is ``[[hessian, constraint.T], [constraint, 0]]`` and the
    right-hand side is ``[-gradient, 0]``.
    """

    hessian: np.ndarray
    constraint: np.ndarray
    gradient: np.ndarray

    def __post_init__(self):
        H = as_matrix(self.hessian, "hessian")
        A = as_matrix(self.constraint, "constraint")
        g = as_vector(self.gradient, "gradient")
        n = H.shape[0]
        if H.shape != (n, n):
            raise DimensionMismatch(f"hessian must be square, got {H.shape}")
        if A.shape[1] != n or g.shape[0] != n:
            raise DimensionMismatch(
                f"inconsistent shapes: hessian {H.shape}, constraint {A.shape}, gradient {g.shape}"
            )
        if A.shape[0] >= n:
            raise DimensionMismatch(f"need p < n, got p={A.shape[0]}, n={n}")
        scale = 1.0 + np.abs(H).max(initial=0.0)
        if np.abs(H - H.T).max(initial=0.0) > SYMMETRY_TOL * scale:
            raise ValueError("hessian is not symmetric")
        object.__setattr__(self, "hessian", H)
        object.__setattr__(self, "constraint", A)
        object.__setattr__(self, "gradient", g)

    @property
    def n(self) -> int:
        return self.hessian.shape[0]

    @property
    def p(self) -> int:
        return self.constraint.shape[0]

    def block_matrix(self) -> np.ndarray:
        n, p = self.n, self.p
        D = np.zeros((n + p, n + p))
        D[:n, :n] = self.hessian
        D[:n, n:] = self.constraint.T
        D[n:, :n] = self.constraint
        return D

    def rhs(self) -> np.ndarray:
        return np.concatenate([-self.gradient, np.zeros(self.p)])


def _equilibrate(M: np.ndarray, sweeps: int = 8) -> np.ndarray:
    """Symmetric Ruiz scaling: returns ``d`` so that ``diag(d) M diag(d)`` has
    rows of unit max-norm (up to a few sweeps).

    Hessians in the network benchmark span many orders of magnitude while the
    incidence entries are 1; the raw block matrix fails any condition test.
    """
    d = np.ones(M.shape[0])
    S = np.abs(M)
    for _ in range(sweeps):
        r = (S * d[None, :] * d[:, None]).max(axis=1)
        r[r == 0.0] = 1.0
        step = 1.0 / np.sqrt(r)
        if np.all(np.abs(step - 1.0) < 1e-3):
            break
        d *= step
    return d


class SymmetricFactor:
    """Bunch-Kaufman (LDLᵀ) factorization of a symmetric, possibly indefinite,
    matrix after symmetric equilibration.

    Raises ``error`` when LAPACK reports an exactly singular pivot or the
    reciprocal condition estimate of the scaled matrix is below ``RCOND_MIN``.
    """

    def __init__(self, M: np.ndarray, error: type[Exception] = SingularKKT):
        M = np.asarray(M, dtype=float)
        self.scale = _equilibrate(M)
        Ms = M * self.scale[:, None] * self.scale[None, :]
        ldu, ipiv, info = lapack.dsytrf(Ms, lower=1)
        if info > 0:
            raise error(f"exactly singular pivot at position {info}")
        if info < 0:
            raise ValueError(f"illegal argument to dsytrf ({info})")
        anorm = np.abs(Ms).sum(axis=0).max()
        rcond, info = lapack.dsycon(ldu, ipiv, anorm, lower=1)
        if info != 0 or not rcond >= RCOND_MIN:
            raise error(f"matrix is numerically singular (rcond={rcond:.3e})")
        self.rcond = float(rcond)
        self._ldu = ldu
        self._ipiv = ipiv

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        y, info = lapack.dsytrs(self._ldu, self._ipiv, (rhs.T * self.scale).T, lower=1)
        if info != 0:
            raise ValueError(f"dsytrs failed ({info})")
        return (y.T * self.scale).T


class ConstraintBasis:
    """Equivalent row basis ``A_B^{-1} A`` of a full-row-rank ``A``.

    ``A_B`` holds ``p`` columns of ``A`` picked by pivoted QR. The affine set
    ``{x : A x = b}`` equals ``{x : At x = bt}`` with ``At = A_B^{-1} A`` and
    ``bt = A_B^{-1} b``; a multiplier ``nu_t`` for ``At`` maps back to
    ``A_B^{-T} nu_t`` for ``A``. On incidence matrices of trees with parallel
    arcs, ``At`` has disjoint rows, which keeps KKT systems with Hessian
    diagonals spanning dozens of orders of magnitude tractable.
    """

    def __init__(self, A):
        A = as_matrix(A, "constraint")
        self.A = A
        p = A.shape[0]
        self._lu = None
        self.At = A
        if p:
            _, perm = scipy.linalg.qr(A, mode="r", pivoting=True)
            AB = A[:, perm[:p]]
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                    self._lu = scipy.linalg.lu_factor(AB, check_finite=False)
            except (scipy.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
                raise SingularKKT(f"constraint has no well-conditioned column basis: {exc}") from exc
            if np.abs(np.diag(self._lu[0])).min() <= RANK_TOL * np.abs(AB).max():
                raise SingularKKT("constraint is rank deficient")
            self.At = scipy.linalg.lu_solve(self._lu, A, check_finite=False)

    def to_basis(self, v) -> np.ndarray:
        """``A_B^{-1} v`` for a constraint-space vector (e.g. ``b``)."""
        v = np.asarray(v, dtype=float)
        return v if self._lu is None else scipy.linalg.lu_solve(self._lu, v, check_finite=False)

    def dual_from_basis(self, nu_t) -> np.ndarray:
        nu_t = np.asarray(nu_t, dtype=float)
        return nu_t if self._lu is None else scipy.linalg.lu_solve(self._lu, nu_t, trans=1, check_finite=False)


class KKTFactor:
    """Factorization of ``[[H, A'], [A, 0]]`` for repeated solves.

    The block matrix is assembled with the constraint in the row basis of
    :class:`ConstraintBasis`, then handed to :class:`SymmetricFactor`. The
    primal part of every solve is unaffected by the change of basis.
    """

    def __init__(self, hessian, constraint, basis: ConstraintBasis | None = None):
        H = as_matrix(hessian, "hessian")
        if basis is None:
            basis = ConstraintBasis(constraint)
        At = basis.At
        n, p = H.shape[0], At.shape[0]
        if H.shape != (n, n) or At.shape[1] != n:
            raise DimensionMismatch(f"hessian {H.shape} and constraint {At.shape} disagree")
        self.n, self.p = n, p
        self.basis = basis
        D = np.zeros((n + p, n + p))
        D[:n, :n] = H
        D[:n, n:] = At.T
        D[n:, :n] = At
        self._D = D
        self._fac = SymmetricFactor(D, SingularKKT)

    @property
    def rcond(self) -> float:
        return self._fac.rcond

    def solve_in_basis(self, top, bottom_t=None) -> tuple[np.ndarray, np.ndarray]:
        """Solve ``H u + At' nu_t = top``, ``At u = bottom_t``."""
        top = np.asarray(top, dtype=float)
        bottom_t = np.zeros(self.p) if bottom_t is None else np.asarray(bottom_t, dtype=float)
        rhs = np.concatenate([top, bottom_t])
        sol = self._fac.solve(rhs)
        # one step of iterative refinement keeps the block residual at roundoff level
        sol = sol + self._fac.solve(rhs - self._D @ sol)
        return sol[: self.n], sol[self.n :]

    def solve(self, top, bottom=None) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(u, nu)`` with ``H u + A' nu = top`` and ``A u = bottom``."""
        bottom_t = None if bottom is None else self.basis.to_basis(bottom)
        u, nu_t = self.solve_in_basis(top, bottom_t)
        return u, self.basis.dual_from_basis(nu_t)


def solve_kkt(sys: KKTSystem) -> tuple[np.ndarray, np.ndarray]:
    """Solve the equality-constrained Newton system.

    Returns
    -------
    step : ndarray, shape (n,)
        Primal Newton direction, lies in the null space of the constraint.
    dual : ndarray, shape (p,)
        Multiplier estimate ``nu``.
    """
    return KKTFactor(sys.hessian, sys.constraint).solve(-sys.gradient)


def _qr_of_transpose(A: np.ndarray, mode: str):
    A = as_matrix(A, "A")
    p, n = A.shape
    if p > n:
        raise RankDeficientConstraint(f"{p} rows cannot be independent in R^{n}")
    Q, R = np.linalg.qr(A.T, mode=mode)
    diag = np.abs(np.diag(R[:p, :p]))
    if p and (diag.max(initial=0.0) == 0.0 or diag.min() <= RANK_TOL * diag.max()):
        raise RankDeficientConstraint("constraint matrix is not full row rank")
    return A, Q, R[:p, :p]


def project_affine(x, A, b) -> np.ndarray:
    """Euclidean projection of ``x`` onto ``{y : A y = b}``.

    Evaluates ``x + A.T (A A.T)^{-1} (b - A x)`` through a thin QR of ``A.T``
    (``A A.T = R.T R``), which avoids squaring the condition number.
    """
    A, Q, R = _qr_of_transpose(A, "reduced")
    x = as_vector(x, "x")
    b = as_vector(b, "b")
    if x.shape[0] != A.shape[1] or b.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"A {A.shape}, x {x.shape}, b {b.shape}")
    out = x.copy()
    for _ in range(2):
        r = b - A @ out
        # A.T (A A.T)^{-1} r = Q R^{-T} r
        out = out + Q @ np.linalg.solve(R.T, r)
    return out


def null_space_basis(A) -> np.ndarray:
    """Orthonormal basis (n x (n-p)) of the null space of a full-row-rank ``A``."""
    A, Q, _ = _qr_of_transpose(A, "complete")
    return Q[:, A.shape[0] :].copy()


def reduced_newton_step(objective, A, b, x) -> np.ndarray:
    """Newton step of the objective restricted to ``{A y = b}``, lifted back.

    Computes ``F dz`` with ``dz = -(F' H F)^{-1} F' g`` for an orthonormal
    null-space basis ``F``. Mathematically equal to the primal part of
    :func:`solve_kkt`; kept as an independent cross-check.
    """
    A = as_matrix(A, "A")
    b = as_vector(b, "b")
    x = as_vector(x, "x")
    if np.linalg.norm(A @ x - b) > FEASIBILITY_TOL * (1.0 + np.linalg.norm(b)):
        raise InfeasibleInput("reduced Newton step needs a feasible point")
    F = null_space_basis(A)
    H = np.asarray(objective.hessian(x), dtype=float)
    g = np.asarray(objective.gradient(x), dtype=float)
    Hr = F.T @ H @ F
    Hr = 0.5 * (Hr + Hr.T)
    fac = SymmetricFactor(Hr, SingularReducedHessian)
    dz = fac.solve(-(F.T @ g))
    return F @ dz
