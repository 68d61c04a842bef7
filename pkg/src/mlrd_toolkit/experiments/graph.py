from __future__ import annotations

import logging
from datetime import datetime, timezone
from functools import lru_cache
from typing import Any, Dict, Optional, Sequence

from typing_extensions import TypedDict

from langgraph.graph import END, START, StateGraph

from mlrd_toolkit import __version__
from mlrd_toolkit.app.schemas import ExperimentConfig
from mlrd_toolkit.common.logging_utils import log_duration
from mlrd_toolkit.experiments.handlers import Context, Evaluation, ScalarFn, Samples, handler_for
from mlrd_toolkit.experiments.kinds import Experiment
from mlrd_toolkit.experiments.report import ConvergenceReport, ReportTiming

logger = logging.getLogger("experiments.graph")


class ExperimentState(TypedDict, total=False):
    experiment: str
    config: ExperimentConfig
    functions: Optional[Sequence[ScalarFn]]
    threads: int
    started_at: str
    context: Context
    samples: Samples
    evaluation: Evaluation
    report: ConvergenceReport
    stages_ms: Dict[str, float]


def _stage(state: ExperimentState, stage: str):
    return log_duration(logger, "stage_done", experiment=state["experiment"], stage=stage)


def _with_stage(state: ExperimentState, stage: str, fields: Dict[str, Any]) -> Dict[str, float]:
    return {**state.get("stages_ms", {}), stage: fields["duration_ms"]}


def prepare(state: ExperimentState) -> ExperimentState:
    with _stage(state, "prepare") as fields:
        handler = handler_for(Experiment(state["experiment"]))
        context = handler.prepare(state["config"], state.get("functions"))
    return {
        "context": context,
        "started_at": datetime.now(timezone.utc).isoformat(),
        "stages_ms": _with_stage(state, "prepare", fields),
    }


def replicate(state: ExperimentState) -> ExperimentState:
    with _stage(state, "replicate") as fields:
        handler = handler_for(Experiment(state["experiment"]))
        samples = handler.replicate(state["context"], int(state.get("threads", 1)))
    return {"samples": samples, "stages_ms": _with_stage(state, "replicate", fields)}


def evaluate(state: ExperimentState) -> ExperimentState:
    with _stage(state, "evaluate") as fields:
        handler = handler_for(Experiment(state["experiment"]))
        evaluation = handler.evaluate(state["context"], state["samples"])
    return {"evaluation": evaluation, "stages_ms": _with_stage(state, "evaluate", fields)}


def build_report(state: ExperimentState) -> ExperimentState:
    # the stage keeps the name "report"; the node name may not shadow the state key
    with _stage(state, "report") as fields:
        ctx = state["context"]
        ev = state["evaluation"]
        report = ConvergenceReport(
            experiment=Experiment(state["experiment"]),
            version=__version__,
            spec_digest=ctx.spec.digest(),
            config=state["config"].echo(),
            comparisons=ev.comparisons,
            normality=ev.normality,
            checks=ev.checks,
            normalizers=ev.normalizers,
            diagnostics=ev.diagnostics,
            flags=ev.flags,
        ).sealed()
    stages = _with_stage(state, "report", fields)
    report.timing = ReportTiming(
        started_at=state.get("started_at", ""), duration_ms=round(sum(stages.values()), 3), stages_ms=stages
    )
    logger.info(
        "experiment_done experiment=%s passed=%s digest=%s duration_ms=%.2f",
        report.experiment.value, report.passed, (report.digest or "")[:12], report.timing.duration_ms,
    )
    return {"report": report, "stages_ms": stages}


@lru_cache(maxsize=1)
def build_experiment_graph() -> Any:
    builder = StateGraph(ExperimentState)
    builder.add_node("prepare", prepare)
    builder.add_node("replicate", replicate)
    builder.add_node("evaluate", evaluate)
    builder.add_node("build_report", build_report)

    builder.add_edge(START, "prepare")
    builder.add_edge("prepare", "replicate")
    builder.add_edge("replicate", "evaluate")
    builder.add_edge("evaluate", "build_report")
    builder.add_edge("build_report", END)

    return builder.compile()
