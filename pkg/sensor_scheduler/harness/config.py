"""Experiment configuration: a strict TOML file parsed into frozen dataclasses.

Unknown keys, wrong types and out-of-range values raise ConfigError naming the
dotted path of the offending field (e.g. ``scheduler.epsilons[1]``).
"""
import logging
import math
import os
import sys
from dataclasses import MISSING, asdict, dataclass, field, fields, replace
from typing import Optional, Tuple

import numpy as np

from ..processing.errors import ConfigError
from ..processing.scheduler import SchedulingMethod
from ..processing.state_space import MEASUREMENT_KINDS

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

EXPERIMENT_KINDS = (
    "single_step_schedule", "multi_step_kalman", "curvature_study", "theorem2_study",
    "network_balance", "verify_theorem1", "speedup_report",
)
OUTPUT_FORMATS = ("csv", "json")
PRIOR_KINDS = ("identity", "random")
CURVATURE_MODES = ("exact", "sampled", "none")


@dataclass(frozen=True)
class ModelSpec:
    m: int = 4
    n: int = 8
    sigma: float = 1.0
    horizon: int = 1
    instances: int = 1
    measurements: str = "gaussian"      # gaussian | sphere | explicit
    sigma_h: float = 1.0
    transition_scale: float = 1.0
    prior: str = "identity"             # Sigma_x: identity | random
    prior_condition: float = 10.0
    sigma_x_file: Optional[str] = None
    measurement_file: Optional[str] = None
    transition_file: Optional[str] = None


@dataclass(frozen=True)
class SchedulerSpec:
    k: int = 1
    epsilons: Tuple[float, ...] = (0.5,)
    methods: Tuple[str, ...] = ("classic_greedy", "randomized_greedy", "random_uniform")
    brute_force_cap: int = 2_000_000
    min_wall_speedup: float = 0.0      # speedup_report: classic/randomized wall time floor, 0 disables


@dataclass(frozen=True)
class CurvatureSpec:
    mode: str = "exact"
    samples: int = 1000
    cap: int = 10
    sigmas: Tuple[float, ...] = ()


@dataclass(frozen=True)
class Theorem2Spec:
    q: float = 1.0
    C: Optional[float] = None           # defaults to m * sigma_h^2
    repetitions: int = 1
    min_success_fraction: float = 0.95


@dataclass(frozen=True)
class NetworkSpec:
    state_dim: int = 50
    ranks: Tuple[int, ...] = (21, 37, 5)
    transition_scale: float = 0.8
    process_noise: float = 0.2
    noise_var: float = 0.05
    budgets: Tuple[int, ...] = (40,)
    gammas: Tuple[float, ...] = (0.0, 200.0)
    horizon: int = 20
    local_only: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    trials: int = 1
    seed: int = 0
    output: str = "results"
    threads: int = 1
    format: str = "csv"
    model: ModelSpec = field(default_factory=ModelSpec)
    scheduler: SchedulerSpec = field(default_factory=SchedulerSpec)
    curvature: CurvatureSpec = field(default_factory=CurvatureSpec)
    theorem2: Theorem2Spec = field(default_factory=Theorem2Spec)
    network: NetworkSpec = field(default_factory=NetworkSpec)

    @staticmethod
    def load(file_path: str) -> "ExperimentConfig":
        with open(file_path, "rb") as fp:
            try:
                data = tomllib.load(fp)
            except (tomllib.TOMLDecodeError, UnicodeDecodeError) as e:
                raise ConfigError(f"{file_path}: {e}") from e
        config = ExperimentConfig.from_dict(data, base_dir=os.path.dirname(os.path.abspath(file_path)))
        logger.info("loaded %s experiment from %s", config.experiment, file_path)
        return config

    @staticmethod
    def from_dict(data: dict, base_dir: str = ".") -> "ExperimentConfig":
        if "experiment" not in data:
            raise ConfigError("experiment: required key is missing")
        sections = {"model": ModelSpec, "scheduler": SchedulerSpec, "curvature": CurvatureSpec,
                    "theorem2": Theorem2Spec, "network": NetworkSpec}
        values = {}
        for key, value in data.items():
            if key in sections:
                if not isinstance(value, dict):
                    raise ConfigError(f"{key}: expected a table")
                values[key] = _build(sections[key], value, key)
            else:
                values[key] = value
        config = _build(ExperimentConfig, values, "")
        config = replace(config, model=_resolve_files(config.model, base_dir))
        config.validate()
        return config

    def override(self, seed=None, output=None, threads=None, format=None) -> "ExperimentConfig":
        """Apply command-line overrides; None leaves the config value in place."""
        changes = {k: v for k, v in dict(seed=seed, output=output, threads=threads, format=format).items()
                   if v is not None}
        if not changes:
            return self
        config = replace(self, **changes)
        config.validate()
        return config

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self):
        _check(self.experiment in EXPERIMENT_KINDS, "experiment",
               f"unknown experiment '{self.experiment}', expected one of {', '.join(EXPERIMENT_KINDS)}")
        _check(self.trials >= 1, "trials", f"must be at least 1, got {self.trials}")
        _check(self.threads >= 1, "threads", f"must be at least 1, got {self.threads}")
        _check(self.format in OUTPUT_FORMATS, "format", f"must be one of {OUTPUT_FORMATS}, got '{self.format}'")
        _validate_model(self.model)
        _validate_scheduler(self.scheduler, self.model)
        _validate_curvature(self.curvature)
        _validate_theorem2(self.theorem2, self.model)
        _validate_network(self.network)


def _check(condition: bool, path: str, message: str):
    if not condition:
        raise ConfigError(f"{path}: {message}")


def _join(prefix: str, name: str) -> str:
    return f"{prefix}.{name}" if prefix else name


# element or value type for fields whose default does not show it
FIELD_SAMPLES = {
    "experiment": "",
    "epsilons": (0.0,), "sigmas": (0.0,), "gammas": (0.0,),
    "ranks": (0,), "budgets": (0,), "methods": ("",),
    "C": 0.0, "sigma_x_file": "", "measurement_file": "", "transition_file": "",
}


def _coerce(value, sample, path: str):
    if isinstance(sample, bool):
        _check(isinstance(value, bool), path, f"expected true/false, got {value!r}")
        return value
    if isinstance(sample, tuple):
        _check(isinstance(value, list), path, f"expected an array, got {value!r}")
        return tuple(_coerce(v, sample[0], f"{path}[{i}]") for i, v in enumerate(value))
    if isinstance(sample, int):
        _check(isinstance(value, int) and not isinstance(value, bool), path, f"expected an integer, got {value!r}")
        return value
    if isinstance(sample, float):
        _check(isinstance(value, (int, float)) and not isinstance(value, bool), path,
               f"expected a number, got {value!r}")
        _check(math.isfinite(value), path, f"must be finite, got {value!r}")
        return float(value)
    _check(isinstance(value, str), path, f"expected a string, got {value!r}")
    return value


def _build(cls, table: dict, prefix: str):
    known = {f.name: f for f in fields(cls)}
    for key in table:
        _check(key in known, _join(prefix, key), "unknown key")
    kwargs = {}
    for name, value in table.items():
        f = known[name]
        if f.default_factory is not MISSING:
            # nested section, already built
            kwargs[name] = value
            continue
        sample = FIELD_SAMPLES.get(name, f.default)
        kwargs[name] = _coerce(value, sample, _join(prefix, name))
    return cls(**kwargs)


def _resolve_files(model: ModelSpec, base_dir: str) -> ModelSpec:
    changes = {}
    for name in ("sigma_x_file", "measurement_file", "transition_file"):
        path = getattr(model, name)
        if path is None:
            continue
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        _check(os.path.isfile(path), f"model.{name}", f"file not found: {path}")
        changes[name] = path
    return replace(model, **changes)


def _validate_model(model: ModelSpec):
    _check(model.m >= 1, "model.m", f"must be positive, got {model.m}")
    _check(model.n >= 1, "model.n", f"must be positive, got {model.n}")
    _check(model.sigma > 0, "model.sigma", f"must be positive, got {model.sigma}")
    _check(model.horizon >= 1, "model.horizon", f"must be at least 1, got {model.horizon}")
    _check(model.instances >= 1, "model.instances", f"must be at least 1, got {model.instances}")
    _check(model.measurements in MEASUREMENT_KINDS + ("explicit",), "model.measurements",
           f"unknown generator '{model.measurements}'")
    _check(model.measurements != "explicit" or model.measurement_file is not None, "model.measurement_file",
           "required when measurements = \"explicit\"")
    _check(model.sigma_h >= 0, "model.sigma_h", f"must be non-negative, got {model.sigma_h}")
    _check(model.prior in PRIOR_KINDS, "model.prior", f"must be one of {PRIOR_KINDS}, got '{model.prior}'")
    _check(model.prior_condition >= 1, "model.prior_condition", f"must be >= 1, got {model.prior_condition}")


def _validate_scheduler(scheduler: SchedulerSpec, model: ModelSpec):
    k = scheduler.k
    _check(1 <= k <= model.n, "scheduler.k", f"budget {k} infeasible for n={model.n} sensors")
    lower = math.exp(-k)
    for i, eps in enumerate(scheduler.epsilons):
        _check(lower * (1.0 - 1e-12) <= eps < 1.0, f"scheduler.epsilons[{i}]",
               f"epsilon={eps} outside [e^-{k}, 1) = [{lower:.6g}, 1)")
    methods = [m.value for m in SchedulingMethod]
    for i, method in enumerate(scheduler.methods):
        _check(method in methods, f"scheduler.methods[{i}]", f"unknown method '{method}'")
    if SchedulingMethod.RANDOMIZED_GREEDY.value in scheduler.methods:
        _check(len(scheduler.epsilons) > 0, "scheduler.epsilons", "randomized_greedy needs at least one epsilon")
    _check(scheduler.brute_force_cap >= 1, "scheduler.brute_force_cap", "must be positive")
    _check(scheduler.min_wall_speedup >= 0, "scheduler.min_wall_speedup",
           f"must be non-negative, got {scheduler.min_wall_speedup}")


def _validate_curvature(curvature: CurvatureSpec):
    _check(curvature.mode in CURVATURE_MODES, "curvature.mode",
           f"must be one of {CURVATURE_MODES}, got '{curvature.mode}'")
    _check(curvature.samples >= 1, "curvature.samples", f"must be positive, got {curvature.samples}")
    _check(curvature.cap >= 2, "curvature.cap", f"must be at least 2, got {curvature.cap}")
    for i, sigma in enumerate(curvature.sigmas):
        _check(sigma > 0, f"curvature.sigmas[{i}]", f"must be positive, got {sigma}")


def _validate_theorem2(theorem2: Theorem2Spec, model: ModelSpec):
    _check(theorem2.q > 0, "theorem2.q", f"must be positive, got {theorem2.q}")
    _check(theorem2.repetitions >= 1, "theorem2.repetitions", f"must be positive, got {theorem2.repetitions}")
    if theorem2.C is not None:
        floor = model.m * model.sigma_h**2
        _check(theorem2.C >= floor * (1.0 - 1e-12), "theorem2.C",
               f"must be at least m * sigma_h^2 = {floor}, got {theorem2.C}")
    _check(0.0 <= theorem2.min_success_fraction <= 1.0, "theorem2.min_success_fraction",
           f"must lie in [0, 1], got {theorem2.min_success_fraction}")


def _validate_network(network: NetworkSpec):
    _check(network.state_dim >= 1, "network.state_dim", f"must be positive, got {network.state_dim}")
    _check(len(network.ranks) >= 2, "network.ranks", "need at least two nodes")
    for i, rank in enumerate(network.ranks):
        _check(1 <= rank <= network.state_dim, f"network.ranks[{i}]",
               f"must lie in [1, {network.state_dim}], got {rank}")
    _check(network.process_noise > 0, "network.process_noise", f"must be positive, got {network.process_noise}")
    _check(network.noise_var > 0, "network.noise_var", f"must be positive, got {network.noise_var}")
    _check(network.horizon >= 1, "network.horizon", f"must be at least 1, got {network.horizon}")
    for i, K in enumerate(network.budgets):
        _check(K >= 1, f"network.budgets[{i}]", f"must be positive, got {K}")
    for i, gamma in enumerate(network.gammas):
        _check(gamma >= 0, f"network.gammas[{i}]", f"must be non-negative, got {gamma}")
    _check(len(network.budgets) >= 1 and len(network.gammas) >= 1, "network",
           "budgets and gammas must not be empty")


def load_matrix(file_path: str) -> np.ndarray:
    """Matrix from a .npy file or a comma-separated text file."""
    try:
        if file_path.endswith(".npy"):
            return np.atleast_2d(np.load(file_path))
        return np.atleast_2d(np.loadtxt(file_path, delimiter=",", dtype=float))
    except (ValueError, UnicodeDecodeError) as e:
        raise ConfigError(f"{file_path}: not a numeric matrix ({e})") from e


__all__ = [
    "ExperimentConfig", "ModelSpec", "SchedulerSpec", "CurvatureSpec", "Theorem2Spec", "NetworkSpec",
    "EXPERIMENT_KINDS", "OUTPUT_FORMATS", "load_matrix",
]
