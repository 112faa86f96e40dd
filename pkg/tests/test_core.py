import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from openm import core, linalg
from openm.core import (
    AffineEqualityConstraint,
    Constants,
    ProblemSequence,
    RoundProblem,
    oen_update,
    open_m_step,
    run,
    solve_round_optimum,
)
from openm.errors import (
    ConstraintDriftError,
    DimensionMismatch,
    InfeasibleInput,
    NoConvergence,
    RankDeficientConstraint,
    SingularKKT,
)
from openm.instances import drifting_quadratic, quartic_instance, random_spd
from openm.metrics import constraint_violation, dynamic_regret
from openm.objectives import LinearObjective, QuadraticObjective, RotatedQuarticObjective


def half_norm_round(A, b, t=1):
    return RoundProblem(t, QuadraticObjective.identity(len(A[0])), AffineEqualityConstraint(A, b))


# ------------------------------------------------------------------ types


def test_constraint_rank_check():
    with pytest.raises(RankDeficientConstraint):
        AffineEqualityConstraint([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]], [1.0, 2.0])


def test_constraint_requires_p_less_than_n():
    with pytest.raises(DimensionMismatch):
        AffineEqualityConstraint(np.eye(2), [1.0, 1.0])


def test_constraint_is_immutable():
    c = AffineEqualityConstraint([[1.0, 1.0]], [2.0])
    with pytest.raises(ValueError):
        c.A[0, 0] = 5.0


def test_round_dimension_check():
    with pytest.raises(DimensionMismatch):
        RoundProblem(1, QuadraticObjective.identity(3), AffineEqualityConstraint([[1.0, 1.0]], [2.0]))


def test_constants_gamma():
    assert Constants(h=2.0, beta=1.0, L=1.0, l=1.0).gamma == 1.0
    assert Constants(h=2.0, beta=5.0, L=4.0, l=1.0).gamma == 0.25
    assert Constants(h=2.0, beta=0.7, L=0.0, l=1.0).gamma == 0.7


@pytest.mark.parametrize("kw", [dict(h=0.0), dict(beta=-1.0), dict(L=np.inf), dict(l=-1.0), dict(a=np.nan)])
def test_constants_validation(kw):
    base = dict(h=1.0, beta=1.0, L=1.0, l=1.0)
    with pytest.raises(ValueError):
        Constants(**{**base, **kw})


def test_drift_condition():
    # gamma = 0.25, cap = 0.25 - 2 * 0.25**2 = 0.125
    c = Constants(h=1.0, beta=0.25, L=1.0, l=1.0, v_bar=0.125)
    assert c.gamma == 0.25 and c.max_drift() == pytest.approx(0.125)
    assert c.drift_condition_holds()
    assert not Constants(h=1.0, beta=0.25, L=1.0, l=1.0, v_bar=0.13).drift_condition_holds()


# -------------------------------------------------------------- oen_update


def test_oen_update_example():
    x_next, nu = oen_update([2.0, 0.0], half_norm_round([[1.0, 1.0]], [2.0]))
    np.testing.assert_allclose(x_next, [1.0, 1.0], atol=1e-14)
    np.testing.assert_allclose(nu, [-1.0], atol=1e-14)


def test_oen_update_fixed_at_optimum():
    x_next, _ = oen_update([1.0, 1.0], half_norm_round([[1.0, 1.0]], [2.0]))
    np.testing.assert_allclose(x_next, [1.0, 1.0], atol=1e-10)


def test_oen_update_rejects_infeasible():
    with pytest.raises(InfeasibleInput):
        oen_update([0.0, 0.0], half_norm_round([[1.0, 1.0]], [2.0]))


def test_oen_update_keeps_feasibility_on_quartic():
    rng = np.random.default_rng(5)
    inst = quartic_instance(rng, 7, 3)
    c = inst.round.constraint
    x = inst.optimum + linalg.null_space_basis(c.A) @ rng.standard_normal(4)
    x_next, _ = oen_update(x, inst.round)
    assert c.violation(x_next) <= 1e-8 * (1 + np.linalg.norm(c.b))


# -------------------------------------------------------------- open_m_step


def test_open_m_step_on_feasible_point_equals_oen():
    rnd = half_norm_round([[1.0, 1.0]], [2.0])
    x_next, nu, x_proj = open_m_step([2.0, 0.0], rnd)
    np.testing.assert_array_equal(x_proj, [2.0, 0.0])
    ref, ref_nu = oen_update([2.0, 0.0], rnd)
    np.testing.assert_allclose(x_next, ref, atol=1e-15)
    np.testing.assert_allclose(nu, ref_nu, atol=1e-15)


@pytest.mark.parametrize(
    "A, b, proj, nxt",
    [
        ([[1.0, 0.0]], [1.0], [1.0, 0.0], [1.0, 0.0]),
        ([[1.0, 1.0]], [2.0], [1.0, 1.0], [1.0, 1.0]),
    ],
)
def test_open_m_step_examples(A, b, proj, nxt):
    x_next, _, x_proj = open_m_step([0.0, 0.0], half_norm_round(A, b))
    np.testing.assert_allclose(x_proj, proj, atol=1e-14)
    np.testing.assert_allclose(x_next, nxt, atol=1e-14)


# ----------------------------------------------------- solve_round_optimum


def test_round_optimum_closed_form():
    rnd = half_norm_round([[1.0, 1.0]], [2.0])
    for x_init in ([0.0, 0.0], [5.0, -3.0], [1e3, 1e3]):
        x, nu = solve_round_optimum(rnd, x_init)
        np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-10)
        np.testing.assert_allclose(nu, [-1.0], atol=1e-10)


def test_round_optimum_returns_kkt_point_unchanged():
    rnd = half_norm_round([[1.0, 1.0]], [2.0])
    x, _ = solve_round_optimum(rnd, [1.0, 1.0])
    np.testing.assert_array_equal(x, [1.0, 1.0])


def test_round_optimum_degenerate_instance_errors():
    rnd = RoundProblem(1, LinearObjective([1.0, 0.0]), AffineEqualityConstraint([[1.0, 1.0]], [2.0]))
    with pytest.raises((NoConvergence, SingularKKT)):
        solve_round_optimum(rnd, [0.0, 0.0])


def test_round_optimum_rejects_bad_tol():
    with pytest.raises(ValueError):
        solve_round_optimum(half_norm_round([[1.0, 1.0]], [2.0]), [0.0, 0.0], tol=0.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_round_optimum_on_quartic_satisfies_kkt(seed):
    rng = np.random.default_rng(seed)
    n, p = 6, 2
    f = RotatedQuarticObjective(rng.uniform(0.5, 3, n), 1.5, rng.standard_normal(n))
    A = rng.standard_normal((p, n))
    b = rng.standard_normal(p)  # center generally infeasible, so nu* != 0
    rnd = RoundProblem(1, f, AffineEqualityConstraint(A, b))
    x, nu = solve_round_optimum(rnd, 3 * rng.standard_normal(n))
    assert np.linalg.norm(f.gradient(x) + A.T @ nu) <= 1e-8 * (1 + np.linalg.norm(f.gradient(x)))
    assert np.linalg.norm(A @ x - b) <= 1e-10 * (1 + np.linalg.norm(b))


# ---------------------------------------------------------------------- run


def test_run_single_round_at_optimum():
    rnd = half_norm_round([[1.0, 1.0]], [2.0])
    tr = run("OEN-M", ProblemSequence([rnd]), [1.0, 1.0])
    assert len(tr) == 1
    assert dynamic_regret(tr)[-1] == pytest.approx(0.0, abs=1e-14)
    assert constraint_violation(tr)[-1] == 0.0


def test_run_oen_three_rounds_feasible():
    fam = drifting_quadratic(1, n=4, p=2, horizon=3)
    tr = run("OEN-M", fam.problems, fam.x0)
    b = fam.problems[0].constraint.b
    assert len(tr) == 3
    assert np.all(tr.residuals <= 1e-8 * (1 + np.linalg.norm(b)))


def test_run_oen_rejects_drifting_constraints():
    fam = drifting_quadratic(1, n=4, p=2, horizon=3, varying_constraint=True)
    with pytest.raises(ConstraintDriftError):
        run("OEN-M", fam.problems, fam.x0)


def test_run_oen_rejects_infeasible_start():
    fam = drifting_quadratic(1, n=4, p=2, horizon=3)
    with pytest.raises(InfeasibleInput):
        run("OEN-M", fam.problems, fam.x0 + 1.0)


def test_run_unknown_algorithm():
    fam = drifting_quadratic(1, n=4, p=2, horizon=2)
    with pytest.raises(ValueError):
        run("Newton", fam.problems, fam.x0)


def test_run_records_played_point_and_projection():
    fam = drifting_quadratic(2, n=5, p=2, horizon=6, varying_constraint=True)
    tr = run("OPEN-M", fam.problems, fam.x0, fam.optima)
    for rec, rnd in zip(tr.records, fam.problems):
        assert rnd.constraint.violation(rec.x_projected) <= 1e-9 * (1 + np.linalg.norm(rnd.constraint.b))
        assert rec.residual == pytest.approx(rnd.constraint.violation(rec.x))
    # x_{t+1} satisfies the round-t constraint
    for rec, nxt, rnd in zip(tr.records, tr.records[1:], fam.problems):
        assert rnd.constraint.violation(nxt.x) <= 1e-8 * (1 + np.linalg.norm(rnd.constraint.b))


def test_oen_m_feasibility_invariant():
    fam = drifting_quadratic(7, horizon=50)
    tr = run("OEN-M", fam.problems, fam.x0, fam.optima)
    b = fam.problems[0].constraint.b
    assert np.all(tr.residuals <= 1e-8 * (1 + np.linalg.norm(b)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 9), data=st.data())
def test_quadratic_exactness(seed, n, data):
    p = data.draw(st.integers(1, n - 1))
    rng = np.random.default_rng(seed)
    f = QuadraticObjective(random_spd(rng, n, 0.3, 4.0), rng.standard_normal(n))
    A = rng.standard_normal((p, n))
    b = rng.standard_normal(p)
    rnd = RoundProblem(1, f, AffineEqualityConstraint(A, b))
    x = linalg.project_affine(rng.standard_normal(n), A, b)
    x_next, _ = oen_update(x, rnd)
    # oracle: closed-form constrained minimizer from the dense KKT system
    D = np.block([[f.Q, A.T], [A, np.zeros((p, p))]])
    x_star = np.linalg.solve(D, np.concatenate([f.Q @ f.center, b]))[:n]
    assert np.linalg.norm(x_next - x_star) <= 1e-10 * (1 + np.linalg.norm(x_star))


def test_contraction_on_quartic_instances():
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(3, 9))
        p = int(rng.integers(1, n))
        inst = quartic_instance(rng, n, p, k=float(rng.uniform(0.5, 4.0)))
        F = linalg.null_space_basis(inst.round.constraint.A)
        u = F @ rng.standard_normal(n - p)
        d = float(rng.uniform(0.1, 1.0)) * inst.gamma
        x = inst.optimum + d * u / np.linalg.norm(u)
        x_next, _ = oen_update(x, inst.round)
        d_next = np.linalg.norm(x_next - inst.optimum)
        assert d_next < d
        assert d_next <= inst.L / (inst.h - inst.L * d) * d * d + 1e-9


def test_causality_future_rounds_do_not_affect_decisions():
    fam = drifting_quadratic(4, n=6, p=2, horizon=12, varying_constraint=True)
    base = run("OPEN-M", fam.problems, fam.x0, fam.optima)
    cut = 7
    rng = np.random.default_rng(0)
    mutated = list(fam.problems)
    for i in range(cut, len(mutated)):
        r = mutated[i]
        Q = random_spd(rng, 6, 0.5, 9.0)
        mutated[i] = RoundProblem(r.t, QuadraticObjective(Q, rng.standard_normal(6)), r.constraint)
    # round `cut` keeps its constraint but its objective changed; the decision
    # played there may only depend on rounds before it
    other = run("OPEN-M", ProblemSequence(mutated), fam.x0, fam.optima)
    for a, b in zip(base.records[: cut + 1], other.records[: cut + 1]):
        assert np.array_equal(a.x, b.x)
    assert not np.array_equal(base.records[cut + 1].x, other.records[cut + 1].x)


def test_problem_sequence_optima_cached_and_warm_started():
    fam = drifting_quadratic(3, n=5, p=2, horizon=4)
    first = fam.problems.optima()
    assert fam.problems.optima() is first
    for (x, _), c in zip(first, fam.centers):
        np.testing.assert_allclose(x, c, atol=1e-9)


def test_initial_point_distance_and_feasibility():
    rnd = half_norm_round([[1.0, 1.0, 0.0]], [2.0])
    x = core.initial_point(rnd, [1.0, 1.0, 0.0], 0.3, np.random.default_rng(0))
    assert np.linalg.norm(x - [1.0, 1.0, 0.0]) == pytest.approx(0.3)
    assert rnd.constraint.is_feasible(x)
