import numpy as np
import pytest

from mfdtoll.lp import INFEASIBLE, OPTIMAL, UNBOUNDED, LpProblem, solve_lp

from oracles import enumerate_vertices, random_lp


def test_random_lps_match_vertex_enumeration():
    r = np.random.default_rng(12)
    checked = 0
    for _ in range(100):
        p = random_lp(r)
        sol = solve_lp(p)
        best = enumerate_vertices(p)
        if best is None:
            assert sol.status == INFEASIBLE
        else:
            assert sol.status == OPTIMAL
            assert sol.objective == pytest.approx(best, abs=1e-9, rel=1e-9)
            assert np.all(p.A_ub @ sol.x <= p.b_ub + 1e-9)
            np.testing.assert_allclose(p.A_eq @ sol.x, p.b_eq, atol=1e-9)
            checked += 1
    assert checked > 50


def test_trivial_cases():
    sol = solve_lp(LpProblem([1.0], [[1.0]], [3.0], np.zeros((0, 1)), [], [0.0], [np.inf]))
    assert sol.optimal and sol.x[0] == pytest.approx(3.0) and sol.objective == pytest.approx(3.0)
    sol = solve_lp(LpProblem([1.0, 1.0], [[1.0, 1.0]], [1.0], np.zeros((0, 2)), [], [0, 0], [np.inf, np.inf]))
    assert sol.objective == pytest.approx(1.0)


def test_unbounded_and_infeasible():
    p = LpProblem([1.0], np.zeros((0, 1)), [], np.zeros((0, 1)), [], [0.0], [np.inf])
    assert solve_lp(p).status == UNBOUNDED
    p = LpProblem([1.0], [[1.0]], [-1.0], np.zeros((0, 1)), [], [0.0], [np.inf])
    assert solve_lp(p).status == INFEASIBLE


def test_fixed_variables_and_shifted_bounds():
    # x0 fixed at 2, 1 <= x1 <= 4, x0 + x1 <= 5
    p = LpProblem([0.0, 1.0], [[1.0, 1.0]], [5.0], np.zeros((0, 2)), [], [2.0, 1.0], [2.0, 4.0])
    sol = solve_lp(p)
    np.testing.assert_allclose(sol.x, [2.0, 3.0])


def test_highs_agrees_on_bounded_instances():
    pytest.importorskip("scipy")
    r = np.random.default_rng(3)
    for _ in range(50):
        p = random_lp(r)
        a, b = solve_lp(p), solve_lp(p, "highs")
        assert a.status == b.status
        if a.optimal:
            assert a.objective == pytest.approx(b.objective, abs=1e-7)


def test_text_dump_roundtrip_names():
    p = LpProblem([1.0, 2.0], [[1.0, 1.0]], [3.0], [[1.0, -1.0]], [0.0], [0, 0], [np.inf, 5], names=["x", "y"],
                  row_names=["cap", "bal"])
    text = p.to_text()
    assert "cap: +1 x +1 y <= 3" in text
    assert "bal: +1 x -1 y = 0" in text
    assert "0 <= y <= 5" in text


def test_unknown_method():
    p = LpProblem([1.0], [[1.0]], [1.0], np.zeros((0, 1)), [], [0.0], [1.0])
    with pytest.raises(ValueError):
        solve_lp(p, "magic")
