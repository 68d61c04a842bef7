"""The four verification experiments. Each runs the prepare → replicate → evaluate → build_report graph."""
from __future__ import annotations

from typing import Optional, Sequence

from mlrd_toolkit.app.schemas import ExperimentConfig
from mlrd_toolkit.common.errors import ConfigurationError
from mlrd_toolkit.experiments.engine import resolve_threads
from mlrd_toolkit.experiments.graph import build_experiment_graph
from mlrd_toolkit.experiments.handlers import ScalarFn
from mlrd_toolkit.experiments.kinds import Experiment
from mlrd_toolkit.experiments.report import ConvergenceReport


def run_experiment(
    config: ExperimentConfig,
    experiment: Optional[Experiment] = None,
    threads: Optional[int] = None,
    functions: Optional[Sequence[ScalarFn]] = None,
) -> ConvergenceReport:
    requested = experiment or config.experiment
    if requested is None:
        raise ConfigurationError("no experiment given: set 'experiment' in the config or pick a verify-* subcommand")
    kind = Experiment(requested)
    if config.experiment is not None and config.experiment != kind:
        raise ConfigurationError(
            f"config is for experiment '{config.experiment.value}', requested '{kind.value}'",
            details={"config": config.experiment.value, "requested": kind.value},
        )
    state = build_experiment_graph().invoke({
        "experiment": kind.value,
        "config": config,
        "functions": functions,
        "threads": resolve_threads(threads, config.threads),
    })
    return state["report"]


def run_clt(config: ExperimentConfig, threads: Optional[int] = None) -> ConvergenceReport:
    return run_experiment(config, Experiment.CLT, threads)


def run_fclt(config: ExperimentConfig, threads: Optional[int] = None) -> ConvergenceReport:
    return run_experiment(config, Experiment.FCLT, threads)


def run_subordination(
    config: ExperimentConfig, G: Optional[Sequence[ScalarFn]] = None, threads: Optional[int] = None
) -> ConvergenceReport:
    """G overrides config.subordination.functions with one callable per coordinate."""
    return run_experiment(config, Experiment.SUBORDINATION, threads, G)


def run_autocov(config: ExperimentConfig, threads: Optional[int] = None) -> ConvergenceReport:
    return run_experiment(config, Experiment.AUTOCOV, threads)
