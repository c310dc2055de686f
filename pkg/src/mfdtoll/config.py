"""Scenario configuration: YAML files validated into typed models."""
from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .demand import DemandProfile, Trapezoid
from .dso import LrhoConfig
from .network import MfdPolynomial, NetworkSpec, RegionParams, Topology
from .qdue import ChoiceSpec

PRESETS = ("zurich",)


class ConfigError(ValueError):
    """Invalid scenario file; the message carries field paths."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class MfdConfig(_Strict):
    a: float
    b: float
    c: float = Field(gt=0)
    n_jam: float = Field(gt=0)


class RegionConfig(_Strict):
    name: str
    mfd: MfdConfig
    avg_trip_length: float = Field(gt=0, description="m")
    capacity_max: float = Field(gt=0, description="veh/s")
    area: float = Field(0.0, ge=0, description="km^2")
    n_detectors: int = Field(0, ge=0)
    network_length: float = Field(0.0, ge=0, description="lane km")


class TopologyConfig(_Strict):
    complete: bool = False
    edges: list[tuple[int, int]] = []

    @model_validator(mode="after")
    def _one_form(self):
        if self.complete == bool(self.edges):
            raise ValueError("give either complete: true or a non-empty edge list")
        return self


class DemandConfig(_Strict):
    origin: int = Field(ge=1)
    destination: int = Field(ge=1)
    t_start: float = Field(ge=0)
    t_rise: float = Field(ge=0)
    t_const: float = Field(ge=0)
    t_fall: float = Field(ge=0)
    magnitude: float = Field(ge=0, description="veh/s")


class LrhoSection(_Strict):
    n_p: int = Field(3, ge=1)
    n_c: int = Field(4, ge=1)
    t_c: float = Field(20.0, gt=0)
    sigma: float = Field(0.2, gt=0, le=1)
    lp_method: Literal["simplex", "highs"] = "simplex"


class ChoiceSection(_Strict):
    vot: float = Field(27.0, gt=0, description="CHF/h")
    mu: float = Field(1.0, gt=0, description="1/CHF")


class TrainingSection(_Strict):
    epochs: int = Field(100, ge=0)
    batch_size: int = Field(64, ge=1)
    validation_split: float = Field(0.2, ge=0, lt=1)
    initial_lr: float = Field(0.01, gt=0)
    decay_steps: float = Field(10000, gt=0)
    decay_rate: float = Field(0.9, gt=0)
    train_fraction: float = Field(0.7, gt=0, lt=1)
    hidden: tuple[int, ...] = (50, 50)


class ScenarioConfig(_Strict):
    name: str = "scenario"
    seed: int = Field(0, ge=0)
    horizon_seconds: float = Field(3000.0, gt=0)
    step_seconds: float = Field(20.0, gt=0)
    pwa_lines: int = Field(20, ge=1)
    regions: list[RegionConfig] = Field(min_length=2)
    topology: TopologyConfig
    demand: list[DemandConfig] = []
    lrho: LrhoSection = LrhoSection()
    choice: ChoiceSection = ChoiceSection()
    training: TrainingSection = TrainingSection()

    @model_validator(mode="after")
    def _cross_refs(self):
        k = len(self.regions)
        for n, d in enumerate(self.demand):
            if d.origin > k or d.destination > k:
                raise ValueError(
                    f"demand[{n}]: pair ({d.origin}, {d.destination}) references an unknown region (K={k})"
                )
        for i, h in self.topology.edges:
            if not (1 <= i <= k and 1 <= h <= k) or i == h:
                raise ValueError(f"topology edge ({i}, {h}) is invalid for K={k}")
        steps = self.horizon_seconds / self.step_seconds
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("horizon_seconds must be a multiple of step_seconds")
        return self

    @property
    def k(self) -> int:
        return len(self.regions)

    @property
    def horizon_steps(self) -> int:
        return int(round(self.horizon_seconds / self.step_seconds))

    def network(self) -> NetworkSpec:
        regions = [
            RegionParams(
                MfdPolynomial(r.mfd.a, r.mfd.b, r.mfd.c, r.mfd.n_jam),
                r.avg_trip_length,
                r.capacity_max,
                r.area,
                r.n_detectors,
                r.network_length,
            )
            for r in self.regions
        ]
        topo = Topology.complete(self.k) if self.topology.complete else Topology(self.k, self.topology.edges)
        return NetworkSpec(regions, topo, [r.name for r in self.regions])

    def demand_profile(self) -> DemandProfile:
        prof = DemandProfile()
        for d in self.demand:
            prof.add(d.origin, d.destination, Trapezoid(d.t_start, d.t_rise, d.t_const, d.t_fall, d.magnitude))
        return prof

    def lrho_config(self) -> LrhoConfig:
        return LrhoConfig(**self.lrho.model_dump())

    def choice_spec(self) -> ChoiceSpec:
        return ChoiceSpec(mu=self.choice.mu, vot=self.choice.vot)

    def train_params(self) -> dict:
        """Keyword arguments for the cost regressor."""
        out = self.training.model_dump()
        out.pop("train_fraction")
        return out

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _format_errors(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        parts.append(f"{path}: {e['msg']}")
    return "; ".join(parts)


def _set_path(data: dict, dotted: str, value):
    keys = dotted.split(".")
    cur = data
    for key in keys[:-1]:
        cur = cur[int(key)] if isinstance(cur, list) else cur.setdefault(key, {})
    last = keys[-1]
    if isinstance(cur, list):
        cur[int(last)] = value
    else:
        cur[last] = value


def apply_overrides(data: dict, overrides) -> dict:
    """``key.path=value`` strings; values are parsed as YAML scalars."""
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            _set_path(data, key.strip(), yaml.safe_load(raw))
        except (KeyError, IndexError, ValueError, TypeError) as exc:
            raise ConfigError(f"override {item!r}: {exc}") from exc
    return data


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}")
    return resources.files("mfdtoll").joinpath(f"data/{name}.yaml").read_text()


def load_config(source: str | Path = "zurich", overrides=None, seed: int | None = None) -> ScenarioConfig:
    """Load a preset name or a YAML path, apply ``--set`` style overrides, validate."""
    text = preset_text(str(source)) if str(source) in PRESETS else Path(source).read_text()
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML parse error: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("<root>: expected a mapping")
    apply_overrides(data, overrides)
    if seed is not None:
        data["seed"] = seed
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None
