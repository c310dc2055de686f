import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfdtoll.demand import DemandProfile
from mfdtoll.network import MfdPolynomial, NetworkSpec, RegionParams, Topology
from mfdtoll.plant import NetworkState, SplitRates
from mfdtoll.qdue import (
    ChoiceSpec,
    dijkstra,
    generalized_costs,
    mnl_split,
    qdue_splits,
    region_travel_time,
    run_qdue,
    shortest_path_costs,
    travel_time_matrix,
)

from conftest import BORDER
from oracles import floyd_warshall


def test_dijkstra_matches_all_pairs_oracle():
    r = np.random.default_rng(4)
    for _ in range(100):
        k = int(r.integers(2, 9))
        w = r.uniform(0, 10, (k, k))
        w[r.random((k, k)) < 0.4] = np.inf
        ref = floyd_warshall(w)
        got = np.array([dijkstra(w, s) for s in range(k)])
        np.testing.assert_allclose(got, ref, rtol=1e-12)


def test_shortest_path_costs():
    topo = Topology.complete(4)
    c = np.array([[np.inf, 1, 5, 2], [1, np.inf, 1, 9], [5, 1, np.inf, 1], [2, 9, 1, np.inf]], dtype=float)
    assert shortest_path_costs(c, topo, 1, 3, 3) == 5
    assert shortest_path_costs(c, topo, 1, 3, 2) == 2
    # via 4: 1->4 then cheapest 4->...->3 (direct 1)
    assert shortest_path_costs(c, topo, 1, 3, 4) == 3


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=6), st.floats(0.01, 5), st.floats(-100, 100))
def test_logit_properties(costs, mu, shift):
    p = mnl_split(costs, mu)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(p >= 0)
    q = mnl_split(np.array(costs) + shift, mu)
    np.testing.assert_allclose(p, q, atol=1e-9)


def test_logit_symmetry_and_monotone():
    np.testing.assert_array_equal(mnl_split([10, 10, 10], 1.0), np.full(3, 1 / 3))
    base = mnl_split([1.0, 2.0, 3.0], 1.0)
    up = mnl_split([1.5, 2.0, 3.0], 1.0)
    assert up[0] < base[0] and up[1] > base[1] and up[2] > base[2]
    p = mnl_split([1.0, np.inf, 2.0], 1.0)
    assert p[1] == 0.0 and p.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        mnl_split([np.inf], 1.0)


def test_travel_time_example(zurich):
    spec, _ = zurich
    st_ = NetworkState(np.array([[1000.0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]))
    tau = travel_time_matrix(spec, st_)
    assert tau[0, 1] == pytest.approx(1000 / 4.02 + 1 / 5.13e-3, rel=1e-12)
    assert tau[0, 1] == pytest.approx(248.8 + 195.0, abs=0.15)
    assert np.isinf(tau[0, 0])


def test_travel_time_cap():
    p = RegionParams(MfdPolynomial(0.0, -1e-6, 4e-3, 4000), 1000, 5.0)
    assert region_travel_time(p, 4000.0) == 10 * 4000 / 1e-9  # G(jam)=0 -> capped fallback
    assert np.isfinite(region_travel_time(p, 3999.9))


def test_generalized_costs_units():
    tt = np.array([[np.inf, 3600.0], [7200.0, np.inf]])
    c = generalized_costs(tt, ChoiceSpec(vot=27.0))
    assert c[0, 1] == pytest.approx(27.0) and c[1, 0] == pytest.approx(54.0)
    c2 = generalized_costs(tt, ChoiceSpec(vot=27.0), np.array([[0, 1.5], [0, 0]]))
    assert c2[0, 1] == pytest.approx(28.5)


def symmetric_spec(k=4):
    regions = [RegionParams(MfdPolynomial(**BORDER), 2000, 6.0) for _ in range(k)]
    return NetworkSpec(regions, Topology.complete(k))


def test_zero_demand_symmetric_network():
    spec = symmetric_spec()
    tr = run_qdue(spec, DemandProfile(), 10)
    np.testing.assert_array_equal(tr.theta[0], SplitRates.uniform(spec).theta)
    for s in range(2, 10):
        np.testing.assert_array_equal(tr.theta[s], tr.theta[1])
    # free flow: a detour crosses four regions, the direct hop two
    tau = 1 / BORDER["c"] * 27 / 3600
    direct = 1 / (1 + 2 * np.exp(-2 * tau))
    assert tr.theta[1, 0, 1, 1] == pytest.approx(direct, rel=1e-12)
    assert tr.theta[1, 0, 2, 1] == pytest.approx(tr.theta[1, 0, 3, 1], rel=1e-12)


def test_qdue_splits_valid_and_prefer_cheap(zurich):
    spec, _ = zurich
    st_ = NetworkState(np.diag([3000.0, 100, 100, 100]))
    costs = generalized_costs(travel_time_matrix(spec, st_), ChoiceSpec())
    split = qdue_splits(spec, costs, 1.0)
    split.validate(spec)
    # from R2 to R3 the detour over the congested centre is the least attractive option
    assert split.theta[1, 0, 2] < split.theta[1, 3, 2] < split.theta[1, 2, 2]


def test_run_qdue_logs(zurich):
    spec, demand = zurich
    tr = run_qdue(spec, demand, 5)
    assert tr.extras["costs"].shape == (5, 4, 4)
    assert not tr.extras["prices"].any()
