import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from openm import linalg
from openm.errors import (
    DimensionMismatch,
    InfeasibleInput,
    RankDeficientConstraint,
    SingularKKT,
    SingularReducedHessian,
)
from openm.instances import random_spd
from openm.objectives import LinearObjective, QuadraticObjective


def dense_kkt(H, A, g):
    """Oracle: solve the block system with a plain dense LU."""
    n, p = H.shape[0], A.shape[0]
    D = np.block([[H, A.T], [A, np.zeros((p, p))]])
    sol = np.linalg.solve(D, np.concatenate([-g, np.zeros(p)]))
    return sol[:n], sol[n:]


def random_instance(rng, n, p):
    H = random_spd(rng, n, 0.5, 5.0)
    A = rng.standard_normal((p, n))
    return H, A, rng.standard_normal(n)


# ---------------------------------------------------------------- solve_kkt


def test_solve_kkt_matches_hand_solution():
    dx, nu = linalg.solve_kkt(linalg.KKTSystem(np.eye(2), [[1.0, 1.0]], [2.0, 0.0]))
    ref_dx, ref_nu = dense_kkt(np.eye(2), np.array([[1.0, 1.0]]), np.array([2.0, 0.0]))
    np.testing.assert_allclose(dx, [-1.0, 1.0], atol=1e-14)
    np.testing.assert_allclose(nu, [-1.0], atol=1e-14)
    np.testing.assert_allclose(dx, ref_dx, atol=1e-14)
    np.testing.assert_allclose(nu, ref_nu, atol=1e-14)


def test_solve_kkt_zero_gradient_gives_zero_step():
    dx, nu = linalg.solve_kkt(linalg.KKTSystem(np.eye(2), [[1.0, 0.0]], [0.0, 0.0]))
    assert np.all(dx == 0) and np.all(nu == 0)


def test_solve_kkt_singular_when_hessian_vanishes_on_null_space():
    with pytest.raises(SingularKKT):
        linalg.solve_kkt(linalg.KKTSystem(np.zeros((2, 2)), [[1.0, 1.0]], [1.0, 0.0]))


@pytest.mark.parametrize(
    "H, A, g",
    [
        (np.eye(3), np.ones((1, 2)), np.zeros(3)),
        (np.eye(2), np.ones((1, 2)), np.zeros(3)),
        (np.eye(2), np.ones((2, 2)), np.zeros(2)),  # p == n
    ],
)
def test_kkt_system_rejects_bad_shapes(H, A, g):
    with pytest.raises(DimensionMismatch):
        linalg.KKTSystem(H, A, g)


def test_kkt_system_rejects_asymmetric_hessian():
    with pytest.raises(ValueError):
        linalg.KKTSystem([[1.0, 1.0], [0.0, 1.0]], [[1.0, 0.0]], [0.0, 0.0])


def test_kkt_system_rejects_non_finite():
    with pytest.raises(ValueError):
        linalg.KKTSystem([[np.nan, 0.0], [0.0, 1.0]], [[1.0, 0.0]], [0.0, 0.0])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 10), data=st.data())
def test_solve_kkt_against_dense_oracle(seed, n, data):
    p = data.draw(st.integers(1, n - 1))
    rng = np.random.default_rng(seed)
    H, A, g = random_instance(rng, n, p)
    dx, nu = linalg.solve_kkt(linalg.KKTSystem(H, A, g))
    ref_dx, ref_nu = dense_kkt(H, A, g)
    scale = 1 + np.linalg.norm(ref_dx) + np.linalg.norm(ref_nu)
    assert np.linalg.norm(dx - ref_dx) <= 1e-8 * scale
    assert np.linalg.norm(nu - ref_nu) <= 1e-8 * scale
    # stated post-conditions: block residual and null-space membership
    res = np.concatenate([H @ dx + A.T @ nu + g, A @ dx])
    assert np.linalg.norm(res) <= 1e-9 * (1 + np.linalg.norm(g))
    assert np.linalg.norm(A @ dx) <= 1e-9 * (1 + np.linalg.norm(dx))


def test_solve_kkt_step_on_badly_scaled_diagonal_hessian():
    # Hessian entries spanning 1e-3 .. 1e90 on a path incidence matrix with one
    # parallel arc, the regime of early network rounds. The multipliers are
    # fixed by h_i (dx_i + 0.01) with h_i up to 1e90 and are not recoverable
    # in double precision, so only the step is compared, against a
    # 200-digit solve.
    mpmath = pytest.importorskip("mpmath")
    n = 8
    A = np.zeros((n - 1, n))
    for i in range(n - 1):
        A[i, i], A[i, i + 1] = -1.0, 1.0
    A = np.hstack([A, A[:, :1]])
    h = np.logspace(-3, 90, n + 1)
    g = h * 1e-2
    dx, _ = linalg.solve_kkt(linalg.KKTSystem(np.diag(h), A, g))

    N, p = A.shape[1], A.shape[0]
    with mpmath.workdps(200):
        D = mpmath.zeros(N + p, N + p)
        for i in range(N):
            D[i, i] = mpmath.mpf(h[i])
        for i in range(p):
            for j in range(N):
                D[N + i, j] = D[j, N + i] = A[i, j]
        rhs = mpmath.matrix([-mpmath.mpf(v) for v in g] + [0] * p)
        exact = np.array([float(v) for v in mpmath.lu_solve(D, rhs)[:N]])
    assert np.linalg.norm(dx - exact) <= 1e-9 * (1 + np.linalg.norm(exact))
    assert np.linalg.norm(A @ dx) <= 1e-9 * (1 + np.linalg.norm(dx))


# ------------------------------------------------------------ project_affine


@pytest.mark.parametrize(
    "x, A, b, expected",
    [
        ([1.0, 1.0], [[1.0, 1.0]], [2.0], [1.0, 1.0]),
        ([0.0, 0.0], [[1.0, 0.0]], [1.0], [1.0, 0.0]),
        ([0.0, 0.0], [[1.0, 1.0]], [2.0], [1.0, 1.0]),
    ],
)
def test_project_affine_examples(x, A, b, expected):
    np.testing.assert_allclose(linalg.project_affine(x, A, b), expected, atol=1e-14)


def test_project_affine_matches_closed_form():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((3, 7))
    b, x = rng.standard_normal(3), rng.standard_normal(7)
    closed = x + A.T @ np.linalg.solve(A @ A.T, b - A @ x)
    np.testing.assert_allclose(linalg.project_affine(x, A, b), closed, atol=1e-12)


def test_project_affine_rank_deficient():
    with pytest.raises(RankDeficientConstraint):
        linalg.project_affine([0.0, 0.0, 0.0], [[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]], [1.0, 2.0])


def test_project_affine_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        linalg.project_affine([0.0, 0.0], [[1.0, 1.0, 0.0]], [1.0])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 12), data=st.data())
def test_projection_properties(seed, n, data):
    p = data.draw(st.integers(1, n - 1))
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((p, n))
    b = rng.standard_normal(p)
    x = 3 * rng.standard_normal(n)
    xt = linalg.project_affine(x, A, b)
    assert np.linalg.norm(A @ xt - b) <= 1e-10 * (1 + np.linalg.norm(b))
    # x~ - x lies in range(A'), i.e. orthogonal to N(A)
    F = linalg.null_space_basis(A)
    assert np.linalg.norm(F.T @ (xt - x)) <= 1e-10 * (1 + np.linalg.norm(x))
    np.testing.assert_allclose(linalg.project_affine(xt, A, b), xt, atol=1e-12, rtol=0)
    y = xt + F @ rng.standard_normal(n - p)
    assert np.linalg.norm(xt - y) <= np.linalg.norm(x - y) + 1e-12


# --------------------------------------------------------- null_space_basis


def test_null_space_basis_of_e1():
    F = linalg.null_space_basis([[1.0, 0.0]])
    assert F.shape == (2, 1)
    np.testing.assert_allclose(np.abs(F[:, 0]), [0.0, 1.0], atol=1e-15)


def test_null_space_basis_of_ones():
    F = linalg.null_space_basis([[1.0, 1.0]])
    v = F[:, 0] * np.sign(F[0, 0])
    np.testing.assert_allclose(v, np.array([1.0, -1.0]) / np.sqrt(2), atol=1e-15)


def test_null_space_basis_random_3x5():
    A = np.random.default_rng(0).standard_normal((3, 5))
    F = linalg.null_space_basis(A)
    assert F.shape == (5, 2)
    np.testing.assert_allclose(F.T @ F, np.eye(2), atol=1e-10)
    assert np.linalg.norm(A @ F) <= 1e-10


def test_null_space_basis_rank_deficient():
    with pytest.raises(RankDeficientConstraint):
        linalg.null_space_basis([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])


# ------------------------------------------------------ reduced_newton_step


def test_reduced_step_example():
    f = QuadraticObjective.identity(2)
    step = linalg.reduced_newton_step(f, [[1.0, 1.0]], [2.0], [2.0, 0.0])
    np.testing.assert_allclose(step, [-1.0, 1.0], atol=1e-14)


def test_reduced_step_zero_at_optimum():
    f = QuadraticObjective.identity(2)
    step = linalg.reduced_newton_step(f, [[1.0, 1.0]], [2.0], [1.0, 1.0])
    np.testing.assert_allclose(step, 0.0, atol=1e-15)


def test_reduced_step_infeasible():
    with pytest.raises(InfeasibleInput):
        linalg.reduced_newton_step(QuadraticObjective.identity(2), [[1.0, 1.0]], [2.0], [0.0, 0.0])


def test_reduced_step_singular():
    with pytest.raises(SingularReducedHessian):
        linalg.reduced_newton_step(LinearObjective([1.0, 0.0]), [[1.0, 1.0]], [2.0], [2.0, 0.0])


def test_kkt_step_equals_reduced_step_sweep():
    rng = np.random.default_rng(20)
    for _ in range(20):
        n = int(rng.integers(2, 11))
        p = int(rng.integers(1, min(4, n - 1) + 1))
        H = random_spd(rng, n, 0.2, 6.0)
        f = QuadraticObjective(H, rng.standard_normal(n))
        A = rng.standard_normal((p, n))
        x = rng.standard_normal(n)
        b = A @ x
        dx, _ = linalg.solve_kkt(linalg.KKTSystem(H, A, f.gradient(x)))
        red = linalg.reduced_newton_step(f, A, b, x)
        assert np.linalg.norm(dx - red) <= 1e-8 * (1 + np.linalg.norm(dx))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 10), data=st.data())
def test_inverse_reduced_hessian_bounded_by_curvature(seed, n, data):
    p = data.draw(st.integers(1, n - 1))
    rng = np.random.default_rng(seed)
    h = float(rng.uniform(0.1, 2.0))
    H = random_spd(rng, n, h, h + 5.0)
    F = linalg.null_space_basis(rng.standard_normal((p, n)))
    # eigenvalues of F'HF interlace those of H, so the smallest is >= h
    assert np.linalg.norm(np.linalg.inv(F.T @ H @ F), 2) <= 1.0 / h * (1 + 1e-10)


def test_symmetric_factor_flags_near_singular():
    M = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-15]])
    with pytest.raises(SingularKKT):
        linalg.SymmetricFactor(M)
