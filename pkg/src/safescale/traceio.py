"""Campaign trace files.

The trace CSV is the interchange format between the simulator and every
downstream stage (and the import path for externally recorded data):
one row per sample, floats at 9 significant digits.  A labeled trace
appends a 1-based integer ``cluster`` column.  Nine significant digits
re-print stably (parse -> print is the identity for <= 15 digits), so
rewriting a file we just read is byte-idempotent.
"""

from __future__ import annotations

import hashlib
import warnings
from pathlib import Path
from typing import Iterable

import numpy as np

from safescale.simulate import EpisodeTrace

TRACE_COLUMNS = (
    "episode",
    "t",
    "xr_x",
    "xr_y",
    "xr_z",
    "xh_x",
    "xh_y",
    "xh_z",
    "gr_x",
    "gr_y",
    "gr_z",
    "gh_x",
    "gh_y",
    "gh_z",
    "s",
)
TRACE_HEADER = ",".join(TRACE_COLUMNS)
LABELED_HEADER = TRACE_HEADER + ",cluster"

_TRACE_ROW_FMT = ",".join(["%d"] + ["%.9g"] * 14)
_LABELED_ROW_FMT = _TRACE_ROW_FMT + ",%d"


class TraceFormatError(ValueError):
    """Raised when a trace file does not match the campaign CSV format."""


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _campaign_matrix(traces: Iterable[EpisodeTrace]) -> np.ndarray:
    mats = [tr.as_matrix() for tr in traces]
    if not mats:
        raise TraceFormatError("campaign holds no episodes")
    return np.vstack(mats)


def write_trace_csv(path: str | Path, traces: Iterable[EpisodeTrace]) -> None:
    mat = _campaign_matrix(traces)
    with open(path, "w", newline="") as f:
        f.write(TRACE_HEADER + "\n")
        np.savetxt(f, mat, fmt=_TRACE_ROW_FMT)


def write_labeled_csv(
    path: str | Path,
    traces: list[EpisodeTrace],
    clusters: list[np.ndarray],
) -> None:
    """Trace CSV plus a trailing 1-based cluster-index column."""
    if len(traces) != len(clusters):
        raise TraceFormatError("one cluster array per episode is required")
    for tr, cl in zip(traces, clusters):
        if len(tr) != cl.shape[0]:
            raise TraceFormatError(f"episode {tr.episode_id}: {len(tr)} samples but {cl.shape[0]} labels")
    mat = _campaign_matrix(traces)
    mat = np.hstack([mat, np.concatenate(clusters).astype(np.float64)[:, None]])
    with open(path, "w", newline="") as f:
        f.write(LABELED_HEADER + "\n")
        np.savetxt(f, mat, fmt=_LABELED_ROW_FMT)


def _split_episodes(mat: np.ndarray) -> list[np.ndarray]:
    ep = mat[:, 0]
    starts = np.flatnonzero(np.diff(ep)) + 1
    return np.split(mat, starts)


def _traces_from_matrix(mat: np.ndarray) -> list[EpisodeTrace]:
    out = []
    for block in _split_episodes(mat):
        out.append(
            EpisodeTrace(
                episode_id=int(block[0, 0]),
                seed=-1,
                t=block[:, 1].copy(),
                xr=block[:, 2:5].copy(),
                xh=block[:, 5:8].copy(),
                gr=block[:, 8:11].copy(),
                gh=block[:, 11:14].copy(),
                s=block[:, 14].copy(),
            )
        )
    return out


def _load_matrix(path: str | Path, expected_header: str, kind: str) -> np.ndarray:
    with open(path, "r", newline="") as f:
        header = f.readline().strip()
        prefix = expected_header.split(",")
        got = header.split(",")
        if got[: len(prefix)] != prefix:
            raise TraceFormatError(
                f"{path} is not a {kind} file: header starts {got[:3]}..., expected {prefix[:3]}..."
            )
        try:
            with warnings.catch_warnings():
                # loadtxt warns on header-only files; the size check below
                # turns that case into a TraceFormatError instead.
                warnings.simplefilter("ignore", UserWarning)
                mat = np.loadtxt(f, delimiter=",", ndmin=2, usecols=range(len(prefix)))
        except ValueError as exc:
            raise TraceFormatError(f"{path}: {exc}") from exc
    if mat.shape[0] == 0:
        raise TraceFormatError(f"{path} holds no samples")
    return mat


def read_trace_csv(path: str | Path) -> list[EpisodeTrace]:
    """Parse a campaign trace CSV (extra trailing columns are ignored).

    Imported traces carry no RNG seed; the field is set to -1.
    """
    mat = _load_matrix(path, TRACE_HEADER, "trace")
    return _traces_from_matrix(mat)


def read_labeled_csv(path: str | Path) -> tuple[list[EpisodeTrace], list[np.ndarray]]:
    mat = _load_matrix(path, LABELED_HEADER, "labeled trace")
    traces = _traces_from_matrix(mat[:, :15])
    clusters = [blk[:, 15].astype(np.int64) for blk in _split_episodes(mat)]
    return traces, clusters
