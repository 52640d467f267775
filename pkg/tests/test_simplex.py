import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from preventive_ems.simplex import (
    LpBuilder,
    complementary_slackness,
    solve_highs,
    solve_lp,
    solve_simplex,
)


def random_lp(seed, bounded=True):
    """Feasible by construction: constraints are built around a known interior point."""
    rng = np.random.default_rng(seed)
    n, m_ub, m_eq = int(rng.integers(2, 9)), int(rng.integers(0, 7)), int(rng.integers(0, 3))
    x0 = rng.uniform(0.0, 2.0, n)
    lp = LpBuilder()
    lo = np.where(rng.random(n) < 0.2, -np.inf, rng.uniform(-1.0, 0.0, n))
    hi = np.where(rng.random(n) < 0.3, np.inf, x0 + rng.uniform(0.1, 2.0, n)) if bounded else np.full(n, np.inf)
    if not bounded:
        lo = np.zeros(n)
    x = lp.add("x", n, lo, hi, rng.normal(0, 1, n) if bounded else -rng.uniform(0.1, 1, n))
    for _ in range(m_ub):
        a = rng.normal(0, 1, n)
        lp.rows("ub", 0, x, a, [a @ x0 + rng.uniform(0.0, 1.0)])
    for _ in range(m_eq):
        a = rng.normal(0, 1, n)
        lp.rows("eq", 0, x, a, [a @ x0])
    if bounded:  # a closing box so the minimum exists
        lp.rows("ub", np.arange(n), x, 1.0, x0 + 5.0)
        lp.rows("ub", np.arange(n), x, -1.0, -(x0 - 5.0))
    return lp.build()


def test_small_known_optimum():
    # max 3a + 2b  s.t. a + b <= 4, a + 3b <= 6, a <= 3
    lp = LpBuilder()
    a = lp.add("a", 1, 0.0, 3.0, -3.0)[0]
    b = lp.add("b", 1, 0.0, np.inf, -2.0)[0]
    lp.le({a: 1.0, b: 1.0}, 4.0)
    lp.le({a: 1.0, b: 3.0}, 6.0)
    prob = lp.build()
    res = solve_simplex(prob)
    assert res.status == "optimal"
    np.testing.assert_allclose(res.x, [3.0, 1.0], atol=1e-12)
    assert res.objective == pytest.approx(-11.0)
    assert complementary_slackness(prob, res) < 1e-12
    assert res.y_ub[0] == pytest.approx(-2.0)  # shadow price of the first row


def test_equality_and_free_variable():
    lp = LpBuilder()
    x = lp.add("x", 2, [-np.inf, 0.0], np.inf, [1.0, 1.0])
    lp.eq({int(x[0]): 1.0, int(x[1]): -1.0}, -2.0)
    res = solve_simplex(lp.build())
    np.testing.assert_allclose(res.x, [-2.0, 0.0], atol=1e-12)


def test_infeasible_and_unbounded():
    lp = LpBuilder()
    x = lp.add("x", 1, 0.0, 1.0)[0]
    lp.le({x: -1.0}, -2.0)
    assert solve_simplex(lp.build()).status == "infeasible"
    assert solve_highs(lp.build()).status == "infeasible"
    lp = LpBuilder()
    lp.add("x", 1, 0.0, np.inf, -1.0)
    assert solve_simplex(lp.build()).status == "unbounded"


def test_degenerate_problem_terminates():
    # a classic cycling example for textbook pivoting rules
    lp = LpBuilder()
    x = lp.add("x", 4, 0.0, np.inf, [-0.75, 150.0, -0.02, 6.0])
    lp.rows("ub", 0, x, [0.25, -60.0, -0.04, 9.0], [0.0])
    lp.rows("ub", 0, x, [0.5, -90.0, -0.02, 3.0], [0.0])
    lp.rows("ub", 0, x, [0.0, 0.0, 1.0, 0.0], [1.0])
    res = solve_simplex(lp.build())
    assert res.status == "optimal"
    assert res.objective == pytest.approx(-0.05)


def test_redundant_equalities():
    lp = LpBuilder()
    x = lp.add("x", 2, 0.0, 5.0, [1.0, 2.0])
    lp.eq({int(x[0]): 1.0, int(x[1]): 1.0}, 3.0)
    lp.eq({int(x[0]): 2.0, int(x[1]): 2.0}, 6.0)
    prob = lp.build()
    res = solve_simplex(prob)
    assert res.status == "optimal" and res.objective == pytest.approx(3.0)
    assert complementary_slackness(prob, res) < 1e-9


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=120, deadline=None)
def test_simplex_agrees_with_highs(seed):
    prob = random_lp(seed)
    a, b = solve_simplex(prob), solve_highs(prob)
    assert a.status == b.status
    if a.status == "optimal":
        assert a.objective == pytest.approx(b.objective, abs=1e-7 * max(1.0, abs(b.objective)))
        assert complementary_slackness(prob, a) < 1e-7
        assert complementary_slackness(prob, b) < 1e-7
        viol_ub = prob.A_ub @ a.x - prob.b_ub
        assert np.all(viol_ub <= 1e-8)
        np.testing.assert_allclose(prob.A_eq @ a.x, prob.b_eq, atol=1e-8)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_unbounded_detection_matches_highs(seed):
    prob = random_lp(seed, bounded=False)
    assert solve_simplex(prob).status == solve_highs(prob).status


def test_auto_dispatch_by_size():
    lp = LpBuilder()
    lp.add("x", 3, 0.0, 1.0, -1.0)
    assert solve_lp(lp.build()).method == "simplex"
    with pytest.raises(ValueError):
        solve_lp(lp.build(), "interior")


def test_certificate_requires_optimal():
    lp = LpBuilder()
    x = lp.add("x", 1, 0.0, 1.0)[0]
    lp.le({x: -1.0}, -2.0)
    prob = lp.build()
    with pytest.raises(ValueError):
        complementary_slackness(prob, solve_simplex(prob))


def test_certificate_flags_wrong_duals():
    prob = random_lp(5)
    res = solve_simplex(prob)
    res.z_lb = res.z_lb + 1.0
    assert complementary_slackness(prob, res) > 1e-3
