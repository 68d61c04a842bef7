"""Replication engine: fixed-size chunks over a thread pool, merged by replication index."""
from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from mlrd_toolkit.common.errors import ConfigurationError

logger = logging.getLogger("experiments.engine")

CHUNK_SIZE = 64

ChunkTask = Callable[[Sequence[int]], Dict[str, np.ndarray]]


def resolve_threads(override: Optional[int] = None, configured: Optional[int] = None) -> int:
    """--threads, then the config value, then MLRD_THREADS, then 1."""
    for value in (override, configured):
        if value is not None:
            if int(value) < 1:
                raise ConfigurationError(f"thread count must be >= 1, got {value}")
            return int(value)
    env = os.getenv("MLRD_THREADS", "").strip()
    if env:
        try:
            threads = int(env)
        except ValueError as e:
            raise ConfigurationError(f"MLRD_THREADS must be an integer, got '{env}'") from e
        if threads < 1:
            raise ConfigurationError(f"MLRD_THREADS must be >= 1, got {threads}")
        return threads
    return 1


def chunk_indices(replications: int, chunk: int = CHUNK_SIZE) -> List[range]:
    return [range(s, min(s + chunk, replications)) for s in range(0, replications, chunk)]


def run_replications(task: ChunkTask, replications: int, threads: int = 1, chunk: int = CHUNK_SIZE) -> Dict[str, np.ndarray]:
    """Apply task to every chunk and concatenate each output key along axis 0.

    Chunk boundaries do not depend on the thread count, and every replication draws
    from its own stream, so the merged arrays are identical for any number of threads.
    """
    chunks = chunk_indices(replications, chunk)
    start = time.perf_counter()
    if threads <= 1 or len(chunks) == 1:
        parts = [task(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(task, chunks))
    merged = {key: np.concatenate([p[key] for p in parts], axis=0) for key in parts[0]}
    elapsed_ms = (time.perf_counter() - start) * 1000
    logger.info("replications_done reps=%d chunks=%d threads=%d duration_ms=%.2f", replications, len(chunks), threads, elapsed_ms)
    return merged


def second_moment(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """E[Y Yᵀ] (known zero mean) and its Monte Carlo standard error, samples of shape (R, d)."""
    prods = samples[:, :, None] * samples[:, None, :]
    return cross_moment(prods)


def cross_moment(prods: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    reps = prods.shape[0]
    mean = prods.mean(axis=0)
    se = prods.std(axis=0, ddof=1) / np.sqrt(reps) if reps > 1 else np.zeros_like(mean)
    return mean, se
