from __future__ import annotations

import contextvars
import logging
import os
import sys
import time
from contextlib import contextmanager
from typing import Any, Dict, Iterator, Optional

RUN_ID_CTX: contextvars.ContextVar[str] = contextvars.ContextVar("run_id", default="-")


class RunIdFilter(logging.Filter):
    """Injects run_id into every log record."""

    def filter(self, record: logging.LogRecord) -> bool:
        record.run_id = RUN_ID_CTX.get()
        return True


def setup_logging(level: Optional[int] = None) -> None:
    """Configure process-wide logging with run_id support.

    Logs go to stderr: stdout is reserved for machine-readable output of the CLI.
    """
    if level is None:
        level = logging.getLevelName(os.getenv("LOG_LEVEL", "INFO").upper())
        if not isinstance(level, int):
            level = logging.INFO

    root = logging.getLogger()
    root.setLevel(level)

    handler = logging.StreamHandler(sys.stderr)
    handler.setLevel(level)
    handler.addFilter(RunIdFilter())

    fmt = "%(asctime)s | %(levelname)s | run_id=%(run_id)s | %(name)s | %(message)s"
    handler.setFormatter(logging.Formatter(fmt))

    # Avoid duplicate handlers on repeated CLI invocations in one process
    root.handlers = [handler]


def set_run_id(run_id: Optional[str]) -> str:
    """Set run_id into context and return the value used."""
    rid = run_id or "-"
    RUN_ID_CTX.set(rid)
    return rid


def get_run_id() -> str:
    return RUN_ID_CTX.get()


@contextmanager
def run_id_scope(run_id: Optional[str]) -> Iterator[str]:
    """Bind run_id for the duration of a block and restore the previous one."""
    token = RUN_ID_CTX.set(run_id or "-")
    try:
        yield RUN_ID_CTX.get()
    finally:
        RUN_ID_CTX.reset(token)


@contextmanager
def log_duration(logger: logging.Logger, event: str, **fields: Any) -> Iterator[Dict[str, Any]]:
    """Log `event k=v ... duration_ms=` when the block exits.

    The yielded dict may be updated inside the block; `duration_ms` is written back into it.
    """
    start = time.perf_counter()
    try:
        yield fields
    finally:
        fields["duration_ms"] = round((time.perf_counter() - start) * 1000, 3)
        pairs = " ".join(f"{k}={v}" for k, v in fields.items())
        logger.info("%s %s", event, pairs)
