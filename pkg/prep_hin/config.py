"""Validated configuration objects and the plain-text config file reader."""

import json
import typing as t
from functools import lru_cache
from pathlib import Path
from typing import Annotated, Final

from pydantic import (
    AfterValidator,
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    model_validator,
)

from .exceptions import InputError, ParseError
from .formats import read_lines, sha256_text

Convergence = t.Literal["objective", "parameters"]
Heuristic = t.Literal["mean", "sd"]
WeightScope = t.Literal["subtask", "global"]
Variant = t.Literal["full", "no-nv", "no-ps", "no-cs"]
Scheme = t.Literal["uni", "rel", "tot"]
Metric = t.Literal["roc_auc", "auprc", "mrr"]
Measure = t.Literal["prep", "pathcount", "pathsim", "joinsim", "simrank"]

PatternCount = Annotated[int, Field(ge=1)]
Concentration = Annotated[float, Field(gt=0.0, lt=1.0)]
LowerBound = Annotated[float, Field(gt=0.0, lt=1.0)]
Tolerance = Annotated[float, Field(ge=0.0)]
IterationCap = Annotated[int, Field(ge=1)]
Positive = Annotated[float, Field(gt=0.0)]
Decay = Annotated[float, Field(ge=0.0, lt=1.0)]

DEFAULT_K: Final = 15
DEFAULT_BETA: Final = 1e-2
DEFAULT_DELTA: Final = 1e-50
ALPHA_BOUNDS: Final = (0.1, 1e4)


def _check_alpha(value: float | str) -> float | str:
    if value != "auto" and not float(value) > 0.0:
        raise ValueError("alpha must be positive or 'auto'")
    return value


def _check_delta(k: int, delta: float) -> None:
    if delta >= 1.0 / k:
        raise ValueError(f"delta={delta!r} must be below 1/K = {1.0 / k!r}")


def _split_list(value: t.Any) -> t.Any:
    if isinstance(value, str):
        return tuple(v.strip() for v in value.split(",") if v.strip())
    return value


Alpha = Annotated[float | t.Literal["auto"], AfterValidator(_check_alpha)]
StrList = Annotated[tuple[str, ...], BeforeValidator(_split_list)]
FloatList = Annotated[tuple[float, ...], BeforeValidator(_split_list)]
MetricList = Annotated[tuple[Metric, ...], BeforeValidator(_split_list)]
SchemeList = Annotated[tuple[Scheme, ...], BeforeValidator(_split_list)]


class PrepHyperparams(BaseModel):
    """Hyperparameters, stopping rules and step-size controls of a fit."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    k: PatternCount = DEFAULT_K
    alpha: Alpha = "auto"
    beta: Concentration = DEFAULT_BETA
    delta: LowerBound = DEFAULT_DELTA
    seed: int = 0
    outer_tol: Tolerance = 1e-6
    max_outer: IterationCap = 500
    inner_tol: Tolerance = 1e-6
    max_inner: IterationCap = 100
    pgd_steps: IterationCap = 50
    initial_step: Positive = 1.0
    armijo: Annotated[float, Field(gt=0.0, lt=1.0)] = 1e-4
    max_halvings: IterationCap = 30
    convergence: Convergence = "objective"
    eta_clamp: Positive = 1e6
    rho_floor: Positive = 1e-12
    threads: IterationCap = 1

    @model_validator(mode="after")
    def _delta_below_uniform(self) -> "PrepHyperparams":
        _check_delta(self.k, self.delta)
        return self

    @property
    def alpha_value(self) -> float:
        """Numeric α; only valid once 'auto' has been resolved."""
        if self.alpha == "auto":
            raise InputError("alpha is 'auto' and has not been estimated")
        return float(self.alpha)

    def with_alpha(self, alpha: float) -> "PrepHyperparams":
        return self.model_copy(update={"alpha": float(alpha)})


class SimRankConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    c: Decay = 0.5
    tolerance: Tolerance = 1e-4
    max_iterations: IterationCap = 100


class RunConfig(BaseModel):
    """Flat run configuration; one config-file key per field."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    # inputs and artifacts
    node_file: Path | None = None
    edge_file: Path | None = None
    metapath_file: Path | None = None
    undirected: StrList = ()
    label_file: Path | None = None
    mention_file: Path | None = None
    count_file: Path | None = None
    checkpoint_file: Path | None = None
    score_file: Path | None = None
    output_dir: Path = Path(".")

    # model
    k: PatternCount = DEFAULT_K
    alpha: Alpha = "auto"
    beta: Concentration = DEFAULT_BETA
    delta: LowerBound = DEFAULT_DELTA
    seed: int = 0
    outer_tol: Tolerance = 1e-6
    max_outer: IterationCap = 500
    inner_tol: Tolerance = 1e-6
    max_inner: IterationCap = 100
    pgd_steps: IterationCap = 50
    initial_step: Positive = 1.0
    armijo: Annotated[float, Field(gt=0.0, lt=1.0)] = 1e-4
    max_halvings: IterationCap = 30
    convergence: Convergence = "objective"
    eta_clamp: Positive = 1e6
    rho_floor: Positive = 1e-12
    threads: IterationCap = 1
    variant: Variant = "full"

    # baselines and evaluation
    measure: Measure = "prep"
    heuristic: Heuristic = "mean"
    weight_scope: WeightScope = "subtask"
    simrank_c: Decay = 0.5
    simrank_tol: Tolerance = 1e-4
    simrank_max_iter: IterationCap = 100
    metrics: MetricList = ("roc_auc", "auprc")
    schemes: SchemeList = ("uni", "rel", "tot")

    # sweep
    sweep_param: t.Literal["beta", "k"] = "beta"
    sweep_values: FloatList = (1e-4, 1e-3, 1e-2, 1e-1)

    @model_validator(mode="after")
    def _delta_below_uniform(self) -> "RunConfig":
        _check_delta(self.k, self.delta)
        return self

    def hyperparams(self, **overrides: t.Any) -> PrepHyperparams:
        values = {
            name: getattr(self, name) for name in _hyperparam_fields()
        }
        values.update(overrides)
        return PrepHyperparams(**values)

    def simrank(self) -> SimRankConfig:
        return SimRankConfig(
            c=self.simrank_c,
            tolerance=self.simrank_tol,
            max_iterations=self.simrank_max_iter,
        )

    def fingerprint(self) -> str:
        """SHA-256 of the canonical JSON dump."""
        payload = json.dumps(
            self.model_dump(mode="json"), sort_keys=True, separators=(",", ":")
        )
        return sha256_text(payload)

    def require(self, *names: str) -> None:
        """Raise InputError unless every named path is set and exists."""
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise InputError(f"missing required setting: {name}")
            if not Path(value).exists():
                raise InputError(f"{name}: file not found: {value}")


@lru_cache(maxsize=1)
def _hyperparam_fields() -> tuple[str, ...]:
    return tuple(PrepHyperparams.model_fields)


def config_keys() -> frozenset[str]:
    return frozenset(RunConfig.model_fields)


def read_config_file(path: str | Path) -> dict[str, t.Any]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    path_str = str(path)
    known = config_keys()
    values: dict[str, t.Any] = {}
    if not Path(path).exists():
        raise InputError(f"config file not found: {path_str}")
    for number, raw in read_lines(path):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(path_str, number, "expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_").lower()
        if key not in known:
            raise ParseError(path_str, number, f"unknown key {key!r}")
        values[key] = value
    return values


def build_run_config(
    config_file: str | Path | None = None,
    overrides: t.Mapping[str, t.Any] | None = None,
) -> RunConfig:
    """Defaults, then the config file, then explicit overrides."""
    values: dict[str, t.Any] = {}
    if config_file is not None:
        values.update(read_config_file(config_file))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)
