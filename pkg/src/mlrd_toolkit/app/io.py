"""Path and matrix export: headerless CSV (one row per time index) and the MLRDPATH columnar binary."""
from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from mlrd_toolkit.common.errors import ConfigurationError, DomainError

logger = logging.getLogger("app.io")

MAGIC = b"MLRDPATH"
HEADER_LEN = len(MAGIC) + 16

PathLike = Union[str, Path]


def write_path_csv(values: np.ndarray, path: PathLike, header: bool = False) -> Path:
    """One row per time index with d columns; `header` prepends x1..xd."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow([f"x{i + 1}" for i in range(values.shape[1])])
        writer.writerows([[repr(float(v)) for v in row] for row in values])
    return out


def _is_header(row: Sequence[str]) -> bool:
    try:
        [float(v) for v in row]
    except ValueError:
        return True
    return False


def read_path_csv(path: PathLike) -> np.ndarray:
    p = Path(path)
    with p.open("r", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigurationError(f"empty path CSV: {p}")
    d = len(rows[0])
    if _is_header(rows[0]):
        rows = rows[1:]
    try:
        return np.asarray([[float(v) for v in row] for row in rows], dtype=float).reshape(-1, d)
    except ValueError as e:
        raise ConfigurationError(f"malformed path CSV {p}: {e}") from e


def encode_path(values: np.ndarray) -> bytes:
    """MLRDPATH, u64 n, u64 d, then column-major little-endian float64."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    n, d = values.shape
    header = MAGIC + np.array([n, d], dtype="<u8").tobytes()
    return header + np.asfortranarray(values).astype("<f8").tobytes(order="F")


def decode_path(blob: bytes) -> np.ndarray:
    if len(blob) < HEADER_LEN or blob[: len(MAGIC)] != MAGIC:
        raise DomainError("not an MLRDPATH file: bad magic")
    n, d = (int(v) for v in np.frombuffer(blob, dtype="<u8", count=2, offset=len(MAGIC)))
    expected = HEADER_LEN + 8 * n * d
    if len(blob) != expected:
        raise DomainError(f"MLRDPATH size mismatch: header says n={n}, d={d}, need {expected} bytes, got {len(blob)}")
    flat = np.frombuffer(blob, dtype="<f8", count=n * d, offset=HEADER_LEN)
    return flat.reshape((n, d), order="F").astype(float)


def write_path_binary(values: np.ndarray, path: PathLike) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(encode_path(values))
    return out


def read_path_binary(path: PathLike) -> np.ndarray:
    return decode_path(Path(path).read_bytes())


def write_matrix_stack_csv(stack: np.ndarray, path: PathLike, index_name: str = "lag",
                           index: Sequence[int] | None = None) -> Path:
    """Rows <index>,row,col,value for a (K, d, d) stack, 1-based row/col."""
    stack = np.asarray(stack, dtype=float)
    idx = list(range(stack.shape[0])) if index is None else list(index)
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([index_name, "row", "col", "value"])
        for k, mat in zip(idx, stack):
            for (i, j), v in np.ndenumerate(mat):
                writer.writerow([k, i + 1, j + 1, repr(float(v))])
    logger.debug("matrix_stack_written path=%s blocks=%d", out, stack.shape[0])
    return out
