import numpy as np
import pytest

from mfdtoll.demand import DemandProfile
from mfdtoll.dso import (
    LrhoConfig,
    build_lp,
    compute_alphas,
    project_band_simplex,
    recover_split_rates,
    run_lrho,
)
from mfdtoll.lp import LpSolution, solve_lp
from mfdtoll.network import pwa_approximate
from mfdtoll.plant import NetworkState, SplitRates

from conftest import one_od, small_spec
from oracles import scan_max_flow


def pwas(spec, lines=20):
    return [pwa_approximate(r.mfd, lines) for r in spec.regions]


def test_alphas():
    st = NetworkState(np.array([[300.0, 100.0], [0.0, 0.0]]))
    a = compute_alphas(st)
    assert a.alpha_ii[0] == 0.75 and a.alpha_ij[0, 1] == 0.25
    assert a.alpha_ii[1] == 0.0 and not a.alpha_ij[1].any()
    assert a.matrix[0].sum() == pytest.approx(1.0)


def test_empty_network_objective_zero():
    spec = small_spec(3)
    st = NetworkState.empty(3)
    prob, lay = build_lp(spec, st, compute_alphas(st), pwas(spec), DemandProfile(), LrhoConfig())
    sol = solve_lp(prob)
    assert sol.optimal and sol.objective == 0.0
    flows = [c for key, c in lay.index.items() if key[0] != "N"]
    assert not sol.x[flows].any()


def test_one_region_one_step_matches_scan():
    spec = small_spec(2)
    st = NetworkState(np.array([[2500.0, 0.0], [0.0, 0.0]]))
    cfg = LrhoConfig(n_p=1)
    pwa = pwas(spec)
    prob, lay = build_lp(spec, st, compute_alphas(st), pwa, DemandProfile(), cfg)
    sol = solve_lp(prob)
    cap = np.min(pwa[0].slopes * 2500.0 + pwa[0].intercepts)
    f = scan_max_flow(cap)
    assert sol.objective == pytest.approx(cfg.t_c * f, abs=1e-6 * cfg.t_c)
    assert sol.x[lay.index["fII", 0, 1]] == pytest.approx(f, abs=1e-6)


def test_zero_flow_is_feasible():
    spec = small_spec(3)
    st = NetworkState(np.array([[400.0, 200.0, 100.0], [50.0, 800.0, 10.0], [0.0, 30.0, 60.0]]), 5)
    d = one_od(1, 3, 2.0, (0, 50, 300, 50))
    prob, lay = build_lp(spec, st, compute_alphas(st), pwas(spec), d, LrhoConfig())
    x = np.zeros(prob.n_vars)
    n = st.totals
    q = [d.mean_matrix(3, st.t + s * 20, st.t + (s + 1) * 20).sum(axis=1) for s in range(3)]
    for s in range(3):
        for i in range(3):
            x[lay.index["N", s, i + 1]] = n[i]
        n = n + 20 * q[s]
    assert np.all(prob.A_ub @ x <= prob.b_ub + 1e-9)
    np.testing.assert_allclose(prob.A_eq @ x, prob.b_eq, atol=1e-9)
    assert np.all(x >= prob.lb) and np.all(x <= prob.ub)


def test_relaxing_jam_never_hurts():
    spec = small_spec(3)
    st = NetworkState(np.array([[1500.0, 900.0, 900.0], [400.0, 2000.0, 300.0], [100.0, 200.0, 1000.0]]), 3)
    d = one_od(2, 1, 3.0, (0, 0, 500, 0))
    prob, lay = build_lp(spec, st, compute_alphas(st), pwas(spec), d, LrhoConfig())
    base = solve_lp(prob).objective
    for (kind, s, i), col in lay.index.items():
        if kind == "N" and s > 0:
            prob.ub[col] *= 1.5
    assert solve_lp(prob).objective >= base - 1e-9


def test_lp_agrees_with_highs_on_dso_instance():
    pytest.importorskip("scipy")
    spec = small_spec(4)
    r = np.random.default_rng(5)
    st = NetworkState(r.uniform(0, 900, (4, 4)), 10)
    d = one_od(1, 2, 2.0, (0, 100, 400, 100))
    prob, _ = build_lp(spec, st, compute_alphas(st), pwas(spec), d, LrhoConfig())
    assert solve_lp(prob).objective == pytest.approx(solve_lp(prob, "highs").objective, rel=1e-9)


def test_projection_example():
    out = project_band_simplex(np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0]), 0.2)
    np.testing.assert_allclose(out, [0.8, 0.2, 0.0], atol=1e-12)


def test_projection_properties():
    r = np.random.default_rng(0)
    for _ in range(200):
        prev = r.dirichlet(np.ones(3))
        raw = r.dirichlet(np.ones(3))
        sigma = r.uniform(0.01, 1.0)
        out = project_band_simplex(raw, prev, sigma)
        assert out.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(out >= -1e-12) and np.all(out <= 1 + 1e-12)
        assert np.all(np.abs(out - prev) <= sigma + 1e-9)


def _solution_with(lay, nvars, values):
    x = np.zeros(nvars)
    for key, v in values.items():
        x[lay.index[key]] = v
    return LpSolution("optimal", x, 0.0)


def test_recovery_single_path_and_hold():
    spec = small_spec(3)
    st = NetworkState(np.array([[0.0, 600.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))
    alphas = compute_alphas(st)
    pwa = pwas(spec)
    prob, lay = build_lp(spec, st, alphas, pwa, DemandProfile(), LrhoConfig())
    g = pwa[0](600.0)
    prev = SplitRates.uniform(spec)
    sol = _solution_with(lay, prob.n_vars, {("fIHJ", 0, (1, 3, 2)): alphas.alpha_ij[0, 1] * g})
    out = recover_split_rates(spec, sol, lay, alphas, pwa, st, prev, LrhoConfig(sigma=1.0))
    assert out.theta[0, 2, 1] == pytest.approx(1.0) and out.theta[0, 1, 1] == pytest.approx(0.0)
    # pair (1, 3) carries no vehicles: held
    assert out.theta[0, 1, 2] == prev.theta[0, 1, 2]
    assert out.theta[0, 0, 0] == 1.0
    out.validate(spec)


def test_zero_demand_keeps_uniform():
    spec = small_spec(4)
    res = run_lrho(spec, DemandProfile(), 12, LrhoConfig())
    uni = SplitRates.uniform(spec).theta
    for cycle, k, split, obj in res.schedule:
        assert obj == 0.0
        np.testing.assert_array_equal(split.theta, uni)
    assert [k for _, k, _, _ in res.schedule] == [0, 4, 8]


def test_determinism_and_valid_splits():
    spec = small_spec(3)
    d = one_od(2, 1, 3.0, (0, 100, 300, 100))
    d.add(1, 1, d.od_trapezoids[(2, 1)][0])
    a = run_lrho(spec, d, 40)
    b = run_lrho(spec, d, 40)
    for (_, _, sa, oa), (_, _, sb, ob) in zip(a.schedule, b.schedule):
        np.testing.assert_array_equal(sa.theta, sb.theta)
        assert oa == ob
        sa.validate(spec)


def test_lp_dump(tmp_path):
    spec = small_spec(2)
    run_lrho(spec, one_od(1, 2), 8, dump_dir=tmp_path)
    files = sorted(tmp_path.glob("*.txt"))
    assert [f.name for f in files] == ["lp_cycle0000.txt", "lp_cycle0001.txt"]
    assert files[0].read_text().startswith("maximize")
