"""Stage orchestration: user equilibrium, system optimum, training, tolls, comparison.

Every stage writes into its own sub-directory of the run directory and later
stages read what earlier ones persisted, so a stage can be rerun on its own.
"""
from __future__ import annotations

import json
import logging
import platform
from pathlib import Path

import numpy as np
import sklearn

from . import __version__
from .artifacts import (
    MissingArtifactError,
    read_csv,
    read_trajectory,
    sha256_file,
    write_csv,
    write_schedule,
    write_trajectory,
)
from .config import ScenarioConfig
from .dso import run_lrho
from .metrics import (
    MetricsReport,
    compare,
    comparison_csv,
    comparison_text,
    price_table_text,
)
from .pricing import (
    ModelSet,
    average_active_prices,
    build_dataset,
    child_seeds,
    dso_cost_predictor,
    feature_coverage,
    feature_names,
    run_priced,
    test_mae,
    train_models,
    trajectory_features,
)
from .qdue import run_qdue

logger = logging.getLogger(__name__)

STAGES = ("qdue", "dso", "train", "priced", "compare")
MANIFEST = "manifest.json"


def _seeds(config: ScenarioConfig) -> dict:
    shuffle, models = child_seeds(config.seed, 2)
    return {"shuffle": shuffle, "models": models}


def _stage_qdue(cfg, spec, demand, out: Path) -> list[Path]:
    traj = run_qdue(spec, demand, cfg.horizon_steps, cfg.choice_spec(), step_seconds=cfg.step_seconds)
    return write_trajectory(out / "qdue", spec, traj)


def _stage_dso(cfg, spec, demand, out: Path, dump_lp=False) -> list[Path]:
    res = run_lrho(
        spec,
        demand,
        cfg.horizon_steps,
        cfg.lrho_config(),
        pwa_lines=cfg.pwa_lines,
        step_seconds=cfg.step_seconds,
        dump_dir=(out / "dso" / "lp") if dump_lp else None,
    )
    files = write_trajectory(out / "dso", spec, res.trajectory)
    files.append(write_schedule(out / "dso" / "theta_schedule.csv", spec, res.schedule))
    if dump_lp:
        files += sorted((out / "dso" / "lp").glob("*.txt"))
    return files


def _stage_train(cfg, spec, out: Path) -> list[Path]:
    qdue = read_trajectory(out / "qdue", spec)
    seeds = _seeds(cfg)
    data = build_dataset(spec, qdue, seeds["shuffle"], cfg.training.train_fraction)
    models = train_models(data, cfg.train_params(), seeds["models"])
    d = out / "train"
    d.mkdir(parents=True, exist_ok=True)
    files = [d / "models.json"]
    models.save(files[0])

    hist = models.histories()
    header = ["epoch"]
    for i, h in models.pairs:
        header += [f"loss_{i}{h}", f"val_loss_{i}{h}"]
    rows = []
    for e in range(cfg.training.epochs):
        row = [e + 1]
        for p in models.pairs:
            row += [hist[p]["loss"][e], hist[p]["val_loss"][e]]
        rows.append(row)
    files.append(d / "loss_history.csv")
    write_csv(files[-1], header, rows)

    mae = test_mae(models, data)
    files.append(d / "test_mae.csv")
    write_csv(files[-1], ["pair", "test_mae"], [[f"{i}{h}", v] for (i, h), v in mae.items()])

    files.append(d / "split.csv")
    write_csv(files[-1], ["sample", "step", "set"],
              [[n, int(s), "train" if n < len(data.X_train) else "test"] for n, s in enumerate(data.order)])

    # how far the system-optimal snapshots sit outside the training range
    dso_path = out / "dso"
    if (dso_path / "flows.csv").exists():
        dso = read_trajectory(dso_path, spec)
        scaler = next(iter(models.models.values())).named_steps["scale"]
        cov = feature_coverage(scaler, trajectory_features(spec, dso))
        files.append(d / "feature_coverage.csv")
        write_csv(files[-1], ["feature", "share_in_training_range"], [[n, c] for n, c in zip(feature_names(spec), cov)])
    return files


def _stage_priced(cfg, spec, demand, out: Path) -> list[Path]:
    try:
        models = ModelSet.load(out / "train" / "models.json")
    except FileNotFoundError as exc:
        raise MissingArtifactError(f"missing artifact {out / 'train' / 'models.json'}") from exc
    dso = read_trajectory(out / "dso", spec)
    traj = run_priced(
        spec,
        demand,
        dso_cost_predictor(spec, models, dso),
        cfg.horizon_steps,
        cfg.lrho.n_c,
        cfg.choice_spec(),
        cfg.step_seconds,
    )
    files = write_trajectory(out / "priced", spec, traj)
    header = ["step", "time", *[f"P_{i}{h}" for i, h in spec.border_pairs]]
    rows = [[s, s * cfg.step_seconds, *[traj.extras["prices"][s, i - 1, h - 1] for i, h in spec.border_pairs]]
            for s in range(traj.horizon)]
    files.append(out / "priced" / "prices.csv")
    write_csv(files[-1], header, rows)
    return files


def _stage_compare(cfg, spec, out: Path) -> list[Path]:
    d = out / "compare"
    d.mkdir(parents=True, exist_ok=True)
    reports = {}
    for name in ("qdue", "dso", "priced"):
        if (out / name / "flows.csv").exists():
            reports[name] = MetricsReport.from_trajectory(read_trajectory(out / name, spec), spec)
    if "qdue" not in reports or len(reports) < 2:
        raise MissingArtifactError("compare needs the qdue run and at least one of dso/priced")
    files = []
    for name in ("dso", "priced"):
        if name not in reports:
            continue
        rows = compare(reports["qdue"], reports[name])
        labels = ("QDUE", name.upper())
        (d / f"{name}_vs_qdue.txt").write_text(comparison_text(rows, labels))
        (d / f"{name}_vs_qdue.csv").write_text(comparison_csv(rows, labels))
        files += [d / f"{name}_vs_qdue.txt", d / f"{name}_vs_qdue.csv"]
    if "priced" in reports:
        avg = average_active_prices(read_trajectory(out / "priced", spec), spec)
        (d / "average_prices.txt").write_text(price_table_text(avg))
        files.append(d / "average_prices.txt")
        write_csv(d / "average_prices.csv", ["toll", "avg_active_chf"], [[f"P{i}{h}", v] for (i, h), v in avg.items()])
        files.append(d / "average_prices.csv")
    summary = {
        name: {"tts": r.tts, "ttd": r.ttd, "vehicles_served": r.vehicles_served, "remaining": r.remaining,
               "ts": r.ts_per_region.tolist()}
        for name, r in reports.items()
    }
    (d / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    files.append(d / "summary.json")
    return files


def _versions() -> dict:
    return {
        "mfdtoll": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scikit-learn": sklearn.__version__,
    }


def write_manifest(out: Path, cfg: ScenarioConfig, files: list[Path]) -> Path:
    """Merge ``files`` into the run manifest, hashing every listed artifact."""
    path = out / MANIFEST
    old = json.loads(path.read_text()) if path.exists() else {}
    if old and old.get("config_sha256") != cfg.digest():
        logger.warning("run directory was produced with a different configuration; manifest is reset")
        old = {}
    arts = old.get("artifacts", {})
    for f in files:
        rel = str(Path(f).relative_to(out))
        entry = {"sha256": sha256_file(f)}
        if f.suffix == ".csv":
            entry["columns"] = read_csv_header(f)
        arts[rel] = entry
    # drop entries whose files vanished
    arts = {k: v for k, v in sorted(arts.items()) if (out / k).exists()}
    manifest = {
        "config_sha256": cfg.digest(),
        "scenario": cfg.name,
        "seed": cfg.seed,
        "versions": _versions(),
        "artifacts": arts,
    }
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    (out / "config.json").write_text(json.dumps(cfg.model_dump(mode="json"), indent=1, sort_keys=True) + "\n")
    return path


def read_csv_header(path: Path):
    with open(path) as fh:
        return fh.readline().rstrip("\n").split(",")


def run_pipeline(config: ScenarioConfig, out_dir, stages=STAGES, dump_lp=False) -> Path:
    """Run ``stages`` in dependency order into ``out_dir``; returns the manifest path."""
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise ValueError(f"unknown stages: {sorted(unknown)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = config.network()
    demand = config.demand_profile()
    demand.validate(spec.k)
    files: list[Path] = []
    for stage in STAGES:
        if stage not in stages:
            continue
        logger.info("stage %s", stage)
        if stage == "qdue":
            files += _stage_qdue(config, spec, demand, out)
        elif stage == "dso":
            files += _stage_dso(config, spec, demand, out, dump_lp)
        elif stage == "train":
            files += _stage_train(config, spec, out)
        elif stage == "priced":
            files += _stage_priced(config, spec, demand, out)
        elif stage == "compare":
            files += _stage_compare(config, spec, out)
    return write_manifest(out, config, files)


# -- plot data ----------------------------------------------------------------


def emit_plot_data(out_dir, config: ScenarioConfig) -> list[Path]:
    """Per-figure CSVs under ``plots/`` from whatever stages are present."""
    out = Path(out_dir)
    spec = config.network()
    d = out / "plots"
    files = []
    runs = {n: read_trajectory(out / n, spec) for n in ("qdue", "dso", "priced") if (out / n / "flows.csv").exists()}
    if not runs:
        raise MissingArtifactError(f"no trajectories under {out}")
    for name, tr in runs.items():
        tot = tr.totals
        header = ["time", *[f"N_{i}" for i in spec.ids], *[f"N_crit_{i}" for i in spec.ids]]
        rows = [[t, *tot[s], *spec.n_crit] for s, t in enumerate(tr.times)]
        files.append(d / f"accumulation_{name}.csv")
        write_csv(files[-1], header, rows)

    names = list(runs)
    ends = {n: np.concatenate([[0.0], np.cumsum(runs[n].m_ii.sum(axis=1) * runs[n].step_seconds)]) for n in names}
    first = runs[names[0]]
    files.append(d / "cumulative_endings.csv")
    write_csv(files[-1], ["time", *names], [[t, *[ends[n][s] for n in names]] for s, t in enumerate(first.times)])

    if "qdue" in runs and "dso" in runs:
        q, s_ = runs["qdue"], runs["dso"]
        header = ["time"]
        for i, h, j in spec.triples:
            header += [f"theta_{i}{h}{j}_qdue", f"theta_{i}{h}{j}_dso"]
        rows = []
        for s in range(q.horizon):
            row = [s * q.step_seconds]
            for i, h, j in spec.triples:
                row += [q.theta[s, i - 1, h - 1, j - 1], s_.theta[s, i - 1, h - 1, j - 1]]
            rows.append(row)
        files.append(d / "splits.csv")
        write_csv(files[-1], header, rows)

    loss = out / "train" / "loss_history.csv"
    if loss.exists():
        header, data = read_csv(loss)
        files.append(d / "loss_curves.csv")
        write_csv(files[-1], header, [[int(r[0]), *r[1:]] for r in data])

    prices = out / "priced" / "prices.csv"
    if prices.exists():
        header, data = read_csv(prices)
        files.append(d / "prices.csv")
        write_csv(files[-1], header[1:], [r[1:] for r in data])
    write_manifest(out, config, files)
    return files
