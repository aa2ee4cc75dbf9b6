"""Run configuration files: YAML parsed into validated pydantic models."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .estimator import RunConfig
from .kde import DEFAULT_SMOOTHING_WINDOW, DEFAULT_ZERO_THRESHOLD, KdeConfig
from .models import Mg1Model, NormalModel
from .rng import stream
from .spsa import ParameterSpace
from .tuning import TuningConfig


class ConfigError(ValueError):
    """Raised for unreadable or invalid configuration; the CLI maps it to exit code 2."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Strict):
    kind: Literal["normal", "mg1"]
    summary_set: Literal["plain", "transformed"] = "plain"
    sample_size: int = Field(1, ge=1)
    dim: int = Field(10, ge=1)
    M: int = Field(100, ge=4)
    lower: Optional[list[float]] = None
    upper: Optional[list[float]] = None


class SimulatedObservation(_Strict):
    theta: list[float]
    seed: int = 0


class ObservedSection(_Strict):
    data_file: Optional[str] = None
    summary: Optional[list[float]] = None
    simulate: Optional[SimulatedObservation] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        given = [k for k in ("data_file", "summary", "simulate") if getattr(self, k) is not None]
        if len(given) != 1:
            raise ValueError("exactly one of data_file, summary, simulate is required")
        return self


class RunSection(_Strict):
    n: int = Field(100, ge=2)
    n_start_candidates: int = Field(1000, ge=1)
    n_starts: int = Field(5, ge=1)
    mode: Literal["ML", "MAP"] = "ML"
    min_iterations: int = Field(0, ge=0)


class TuningSection(_Strict):
    K: int = Field(10000, ge=1)
    K0: int = Field(1000, ge=1)
    b: Union[float, list[float]] = 0.001
    c_fraction: float = Field(0.02, gt=0, lt=1)
    f: float = Field(1.5, gt=1)
    n1: int = Field(25, ge=1)
    n2: Optional[int] = Field(None, ge=2)
    alpha_trend: float = Field(0.05, gt=0, lt=1)
    alpha_conv: float = Field(0.05, gt=0, lt=1)
    range_span_threshold: float = Field(0.7, gt=0, lt=1)
    alpha: float = Field(1.0, gt=0)
    gamma: float = Field(1.0 / 6.0, gt=0)


class KdeSection(_Strict):
    smoothing_window: int = Field(DEFAULT_SMOOTHING_WINDOW, ge=1)
    zero_threshold: float = Field(DEFAULT_ZERO_THRESHOLD, gt=0)


class BootstrapSection(_Strict):
    B: int = Field(100, ge=2)
    level: float = Field(0.95, gt=0, lt=1)
    simultaneous: bool = False


class AmlConfig(_Strict):
    master_seed: int = 0
    model: ModelSection
    observed: ObservedSection
    run: RunSection = RunSection()
    tuning: TuningSection = TuningSection()
    kde: KdeSection = KdeSection()
    bootstrap: BootstrapSection = BootstrapSection()
    reference_theta: Optional[list[float]] = None
    base_dir: Optional[str] = Field(None, exclude=True)

    @field_validator("master_seed")
    @classmethod
    def _seed_nonnegative(cls, v):
        if v < 0:
            raise ValueError("master_seed must be >= 0")
        return v

    @model_validator(mode="after")
    def _cross_checks(self):
        if self.tuning.K0 > self.tuning.K:
            raise ValueError("tuning.K0 must not exceed tuning.K")
        if self.run.n_starts > self.run.n_start_candidates:
            raise ValueError("run.n_starts must not exceed run.n_start_candidates")
        if self.run.min_iterations > self.tuning.K:
            raise ValueError("run.min_iterations must not exceed tuning.K")
        return self


def _set_dotted(data: dict, dotted: str, value: Any):
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {dotted!r}: {key!r} is not a section")
    node[keys[-1]] = value


def apply_overrides(data: dict, overrides: list[str] | None) -> dict:
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        _set_dotted(data, key.strip(), yaml.safe_load(raw))
    return data


def format_validation_error(err) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict, base_dir: str | Path | None = None) -> AmlConfig:
    from pydantic import ValidationError

    try:
        cfg = AmlConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(format_validation_error(err)) from None
    cfg.base_dir = str(base_dir) if base_dir is not None else None
    try:
        build_model(cfg)
        build_run_config(cfg)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return cfg


def load_config(path: str | Path, overrides: list[str] | None = None) -> AmlConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    apply_overrides(data, overrides)
    return parse_config(data, path.parent)


def snapshot(cfg: AmlConfig) -> dict:
    """Fully-defaulted config as plain data; reloading it reproduces the run."""
    return cfg.model_dump(mode="json")


def build_model(cfg: AmlConfig):
    m = cfg.model
    space = None
    if m.lower is not None or m.upper is not None:
        if m.lower is None or m.upper is None:
            raise ValueError("model.lower and model.upper must be given together")
        space = ParameterSpace(m.lower, m.upper)
    if m.kind == "normal":
        model = NormalModel(m.sample_size, m.summary_set, m.dim, space)
    else:
        model = Mg1Model(m.M, space)
    if model.space.p != model.p:
        raise ValueError(f"model.lower/upper must have length {model.p}")
    return model


def build_run_config(cfg: AmlConfig) -> RunConfig:
    t = cfg.tuning
    b = tuple(t.b) if isinstance(t.b, list) else t.b
    tuning = TuningConfig(
        K=t.K, K0=t.K0, b=b, c_fraction=t.c_fraction, f=t.f, n1=t.n1, n2=t.n2,
        alpha_trend=t.alpha_trend, alpha_conv=t.alpha_conv,
        range_span_threshold=t.range_span_threshold, alpha=t.alpha, gamma=t.gamma,
    )
    kde = KdeConfig(cfg.kde.smoothing_window, cfg.kde.zero_threshold)
    r = cfg.run
    return RunConfig(
        n=r.n, tuning=tuning, kde=kde, n_start_candidates=r.n_start_candidates,
        n_starts=r.n_starts, mode=r.mode, master_seed=cfg.master_seed,
        min_iterations=r.min_iterations,
    )


def load_observed(cfg: AmlConfig, model):
    """Observed summaries plus the raw dataset when one is available."""
    obs = cfg.observed
    if obs.summary is not None:
        s = np.asarray(obs.summary, dtype=float)
        if s.shape != (model.d,):
            raise ConfigError(f"observed.summary: expected {model.d} values, got {s.shape[0]}")
        return s, None
    if obs.simulate is not None:
        theta = np.asarray(obs.simulate.theta, dtype=float)
        if theta.shape != (model.p,):
            raise ConfigError(f"observed.simulate.theta: expected {model.p} values")
        data = model.simulate(theta, stream(obs.simulate.seed))
        return model.summarize(data), data
    path = Path(obs.data_file)
    if not path.is_absolute() and cfg.base_dir:
        path = Path(cfg.base_dir) / path
    try:
        data = model.load_dataset(path)
    except (OSError, ValueError) as err:
        raise ConfigError(f"observed.data_file: {err}") from None
    return model.summarize(data), data
