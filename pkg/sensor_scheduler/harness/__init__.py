from .config import ExperimentConfig, ModelSpec, SchedulerSpec, CurvatureSpec, Theorem2Spec, NetworkSpec
from .experiments import ExperimentResult, run, run_experiment
from .metrics import MetricsRow
from .pool import TrialPool


__all__ = [
    "ExperimentConfig", "ModelSpec", "SchedulerSpec", "CurvatureSpec", "Theorem2Spec", "NetworkSpec",
    "ExperimentResult", "run", "run_experiment", "MetricsRow", "TrialPool",
]
