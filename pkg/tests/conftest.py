import logging

import numpy as np
import pytest

from mfdtoll.config import load_config
from mfdtoll.demand import DemandProfile, Trapezoid
from mfdtoll.network import MfdPolynomial, NetworkSpec, RegionParams, Topology

R1 = dict(a=2.10e-10, b=-2.25e-6, c=6.06e-3, n_jam=5000)
BORDER = dict(a=7.72e-11, b=-1.25e-6, c=5.13e-3, n_jam=8000)


@pytest.fixture(autouse=True)
def _quiet_jam_warnings(caplog):
    caplog.set_level(logging.ERROR, logger="mfdtoll.plant")


@pytest.fixture(scope="session")
def zurich_cfg():
    return load_config("zurich")


@pytest.fixture(scope="session")
def zurich(zurich_cfg):
    return zurich_cfg.network(), zurich_cfg.demand_profile()


@pytest.fixture(scope="session")
def r1_mfd():
    return MfdPolynomial(**R1)


@pytest.fixture(scope="session")
def border_mfd():
    return MfdPolynomial(**BORDER)


def small_spec(k=2, cap=5.0, topology=None):
    regions = [RegionParams(MfdPolynomial(**(R1 if i == 0 else BORDER)), 500 if i == 0 else 2000, cap)
               for i in range(k)]
    return NetworkSpec(regions, topology or Topology.complete(k))


def one_od(i, j, q=1.0, shape=(0, 100, 200, 100)):
    d = DemandProfile()
    d.add(i, j, Trapezoid(*shape, q))
    return d


@pytest.fixture(scope="session")
def runs(zurich_cfg, zurich):
    """Shared QDUE, DSO, trained models and priced run on the shipped scenario."""
    from mfdtoll.dso import run_lrho
    from mfdtoll.pricing import build_dataset, dso_cost_predictor, run_priced, train_models
    from mfdtoll.pipeline import _seeds
    from mfdtoll.qdue import run_qdue
    import time

    spec, demand = zurich
    cfg = zurich_cfg
    timing = {}
    t = time.perf_counter()
    qdue = run_qdue(spec, demand, cfg.horizon_steps, cfg.choice_spec())
    timing["qdue"] = time.perf_counter() - t
    t = time.perf_counter()
    dso = run_lrho(spec, demand, cfg.horizon_steps, cfg.lrho_config(), pwa_lines=cfg.pwa_lines)
    timing["dso"] = time.perf_counter() - t
    seeds = _seeds(cfg)
    data = build_dataset(spec, qdue, seeds["shuffle"], cfg.training.train_fraction)
    t = time.perf_counter()
    models = train_models(data, cfg.train_params(), seeds["models"])
    timing["train"] = time.perf_counter() - t
    t = time.perf_counter()
    priced = run_priced(spec, demand, dso_cost_predictor(spec, models, dso.trajectory),
                        cfg.horizon_steps, cfg.lrho.n_c, cfg.choice_spec())
    timing["priced"] = time.perf_counter() - t
    return dict(qdue=qdue, dso=dso.trajectory, schedule=dso.schedule, data=data, models=models,
                priced=priced, timing=timing)


def rng(seed=0):
    return np.random.default_rng(seed)


@pytest.fixture(scope="session")
def full_run(tmp_path_factory, zurich_cfg):
    """All stages plus plot data written once into a temporary run directory."""
    from mfdtoll.pipeline import emit_plot_data, run_pipeline

    out = tmp_path_factory.mktemp("run_a")
    run_pipeline(zurich_cfg, out)
    emit_plot_data(out, zurich_cfg)
    return out
