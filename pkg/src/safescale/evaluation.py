"""Metrics, noise sweeps, spatial heatmaps, and report files.

The headline metric is the MSE between decoded predictions and targets.
Classification tasks additionally report exact-match accuracy and the
same accuracy restricted to samples whose human-robot distance keeps a
margin from every staircase threshold, since samples on a threshold are
ambiguous by construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from safescale.labeling import (
    ClusterModel,
    NoiseSpec,
    SupervisedDataset,
    inject_dataset_noise,
)
from safescale.nn.optim import TrainConfig
from safescale.seeding import derive_seed
from safescale.tasks import TaskKind, TrainedPredictor, predict_batch, predict_classes, train_task

BOUNDARY_MARGIN = 0.05
DEFAULT_DELTAS = (0.0, 0.02, 0.05)
DEFAULT_HEATMAP_CELL = 0.1

_XR = slice(0, 3)
_XH = slice(3, 6)


class EvalError(ValueError):
    """Raised when a predictor and a dataset cannot be evaluated together."""


@dataclass(frozen=True)
class EvalReport:
    """One row of the report table; ``delta`` is "avg" on the sweep-average row."""

    predictor: str
    delta: float | str
    mse: float
    accuracy: float | None
    boundary_excluded_accuracy: float | None
    rows: int


def _check_compat(pred: TrainedPredictor, ds: SupervisedDataset) -> None:
    if ds.n_rows == 0:
        raise EvalError("cannot evaluate on an empty dataset")
    if ds.n_features != pred.in_width:
        raise EvalError(
            f"predictor expects {pred.in_width} features, dataset has {ds.n_features}"
        )
    if pred.task.is_classification and ds.target_cluster is None:
        raise EvalError(f"{pred.task.kind} needs cluster targets, dataset has none")


def boundary_mask(ds: SupervisedDataset, thresholds: Sequence[float], margin: float = BOUNDARY_MARGIN) -> np.ndarray:
    """True where the human-robot distance clears every threshold by ``margin``."""
    d = np.linalg.norm(ds.features[:, _XR] - ds.features[:, _XH], axis=1)
    mask = np.ones(ds.n_rows, dtype=bool)
    for thr in thresholds:
        mask &= np.abs(d - thr) >= margin
    return mask


def evaluate(
    pred: TrainedPredictor,
    ds: SupervisedDataset,
    name: str | None = None,
    thresholds: Sequence[float] | None = None,
    delta: float | str = 0.0,
) -> EvalReport:
    """MSE of decoded predictions vs targets, plus classification accuracies."""
    _check_compat(pred, ds)
    decoded = predict_batch(pred, ds.features)
    err = decoded - ds.target_s
    mse = float(err @ err) / ds.n_rows
    accuracy = None
    excluded = None
    if pred.task.is_classification:
        hit = predict_classes(pred, ds.features) == ds.target_cluster
        accuracy = float(hit.mean())
        if thresholds is not None:
            mask = boundary_mask(ds, thresholds)
            if mask.any():
                excluded = float(hit[mask].mean())
    return EvalReport(
        predictor=name if name is not None else pred.task.kind,
        delta=delta,
        mse=mse,
        accuracy=accuracy,
        boundary_excluded_accuracy=excluded,
        rows=ds.n_rows,
    )


@dataclass(frozen=True)
class RetrainRecipe:
    """Everything needed to refit a predictor inside a retrain-mode sweep."""

    task: TaskKind
    train_dataset: SupervisedDataset
    cluster: ClusterModel | None
    config: TrainConfig
    name: str


def noise_sweep(
    subject: TrainedPredictor | RetrainRecipe,
    test_dataset: SupervisedDataset,
    deltas: Sequence[float] = DEFAULT_DELTAS,
    mode: str = "eval_only",
    thresholds: Sequence[float] | None = None,
    noise_seed: int = 0,
    name: str | None = None,
    base: TrainedPredictor | None = None,
) -> list[EvalReport]:
    """Per-delta reports plus a trailing cross-delta average row.

    ``eval_only`` perturbs the test inputs of a fixed predictor;
    ``retrain`` also injects the same noise level into the training
    inputs and fits a fresh model per delta (the Table-style protocol).
    A ``base`` predictor, when given, stands in for the delta = 0
    retraining; training is deterministic, so the refit would be
    identical anyway.
    """
    if list(deltas) != sorted(deltas):
        raise EvalError(f"deltas must be sorted ascending, got {list(deltas)}")
    if mode not in ("eval_only", "retrain"):
        raise EvalError(f"mode must be eval_only or retrain, got {mode!r}")
    if mode == "retrain" and not isinstance(subject, RetrainRecipe):
        raise EvalError("retrain mode needs a RetrainRecipe")
    if mode == "eval_only" and not isinstance(subject, TrainedPredictor):
        raise EvalError("eval_only mode needs a TrainedPredictor")
    if name is None:
        name = subject.name if isinstance(subject, RetrainRecipe) else subject.task.kind

    reports: list[EvalReport] = []
    for delta in deltas:
        if mode == "retrain":
            if delta == 0.0 and base is not None:
                pred = base
            else:
                train_ds = subject.train_dataset
                if delta > 0.0:
                    train_ds = inject_dataset_noise(
                        train_ds, NoiseSpec(delta, derive_seed(noise_seed, "train-noise", delta))
                    )
                pred, _ = train_task(subject.task, train_ds, subject.cluster, subject.config)
        else:
            pred = subject
        test_ds = test_dataset
        if delta > 0.0:
            test_ds = inject_dataset_noise(
                test_ds, NoiseSpec(delta, derive_seed(noise_seed, "test-noise", delta))
            )
        reports.append(evaluate(pred, test_ds, name=name, thresholds=thresholds, delta=delta))

    def _avg(vals: list[float | None]) -> float | None:
        real = [v for v in vals if v is not None]
        return sum(real) / len(real) if real else None

    reports.append(
        EvalReport(
            predictor=name,
            delta="avg",
            mse=float(np.mean([r.mse for r in reports])),
            accuracy=_avg([r.accuracy for r in reports]),
            boundary_excluded_accuracy=_avg([r.boundary_excluded_accuracy for r in reports]),
            rows=test_dataset.n_rows,
        )
    )
    return reports


@dataclass(eq=False)
class HeatmapGrid:
    """Per-cell counts and mean metric over the human horizontal plane.

    ``mean_metric`` is NaN on empty cells (the files carry an explicit
    empty marker instead of a fabricated value).  ``mean_sq`` keeps the
    per-cell mean squared metric so the global MSE can be reconstructed
    as the count-weighted average.
    """

    predictor: str
    metric: str  # "abs_error" or "correct"
    origin_x: float
    origin_y: float
    cell: float
    counts: np.ndarray
    mean_metric: np.ndarray
    mean_sq: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def make_heatmap(
    pred: TrainedPredictor,
    ds: SupervisedDataset,
    cell: float = DEFAULT_HEATMAP_CELL,
    name: str | None = None,
) -> HeatmapGrid:
    """Bin test rows by the human position (xh_x, xh_y) into square cells."""
    if cell <= 0:
        raise EvalError(f"cell size must be positive, got {cell}")
    pname = name if name is not None else pred.task.kind
    if ds.n_rows == 0:
        z = np.zeros((0, 0))
        return HeatmapGrid(pname, "abs_error", 0.0, 0.0, cell, z.astype(np.int64), z, z)
    _check_compat(pred, ds)
    if pred.task.is_classification:
        metric_name = "correct"
        metric = (predict_classes(pred, ds.features) == ds.target_cluster).astype(np.float64)
    else:
        metric_name = "abs_error"
        metric = np.abs(predict_batch(pred, ds.features) - ds.target_s)
    hx = ds.features[:, 3]
    hy = ds.features[:, 4]
    ox = math.floor(hx.min() / cell) * cell
    oy = math.floor(hy.min() / cell) * cell
    ix = np.floor((hx - ox) / cell).astype(np.int64)
    iy = np.floor((hy - oy) / cell).astype(np.int64)
    nx, ny = int(ix.max()) + 1, int(iy.max()) + 1
    flat = ix * ny + iy
    counts = np.bincount(flat, minlength=nx * ny)
    sums = np.bincount(flat, weights=metric, minlength=nx * ny)
    sq = np.bincount(flat, weights=metric * metric, minlength=nx * ny)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
        mean_sq = np.where(counts > 0, sq / np.maximum(counts, 1), np.nan)
    return HeatmapGrid(
        predictor=pname,
        metric=metric_name,
        origin_x=ox,
        origin_y=oy,
        cell=cell,
        counts=counts.reshape(nx, ny),
        mean_metric=mean.reshape(nx, ny),
        mean_sq=mean_sq.reshape(nx, ny),
    )


def _format_report_row(r: EvalReport) -> str:
    delta = r.delta if isinstance(r.delta, str) else "%.17g" % r.delta
    acc = "" if r.accuracy is None else "%.17g" % r.accuracy
    bex = "" if r.boundary_excluded_accuracy is None else "%.17g" % r.boundary_excluded_accuracy
    return f"{r.predictor},{delta},{r.mse:.17g},{acc},{bex},{r.rows}"


REPORT_HEADER = "predictor,delta,mse,accuracy,boundary_excluded_accuracy,rows"


def write_report_csv(path: str | Path, reports: Sequence[EvalReport]) -> None:
    with open(path, "w", newline="") as f:
        f.write(REPORT_HEADER + "\n")
        for r in reports:
            f.write(_format_report_row(r) + "\n")


def read_report_csv(path: str | Path) -> list[EvalReport]:
    out = []
    with open(path, "r", newline="") as f:
        header = f.readline().strip()
        if header != REPORT_HEADER:
            raise EvalError(f"{path} is not a report table")
        for line in f:
            pred, delta, mse, acc, bex, rows = line.rstrip("\n").split(",")
            out.append(
                EvalReport(
                    predictor=pred,
                    delta=delta if delta == "avg" else float(delta),
                    mse=float(mse),
                    accuracy=float(acc) if acc else None,
                    boundary_excluded_accuracy=float(bex) if bex else None,
                    rows=int(rows),
                )
            )
    return out


def write_heatmap_csv(path: str | Path, grid: HeatmapGrid) -> None:
    """All grid cells, row-major in x then y; empty cells leave the metric blank."""
    nx, ny = grid.shape
    with open(path, "w", newline="") as f:
        f.write("cell_x,cell_y,count,mean_metric\n")
        for i in range(nx):
            for j in range(ny):
                c = int(grid.counts[i, j])
                m = "%.17g" % grid.mean_metric[i, j] if c > 0 else ""
                f.write(f"{i},{j},{c},{m}\n")


def write_heatmap_meta(path: str | Path, grid: HeatmapGrid) -> None:
    meta = {
        "predictor": grid.predictor,
        "metric": grid.metric,
        "origin": [grid.origin_x, grid.origin_y],
        "cell": grid.cell,
        "shape": list(grid.shape),
        "rows": grid.total,
    }
    with open(path, "w") as f:
        json.dump(meta, f, indent=1)
        f.write("\n")


def write_heatmap_pgm(path: str | Path, grid: HeatmapGrid) -> None:
    """8-bit binary graymap: metric 0 -> white, max -> black, empty -> mid-gray."""
    nx, ny = grid.shape
    peak = float(np.nanmax(grid.mean_metric)) if grid.total > 0 else 0.0
    img = np.full((ny, nx), 128, dtype=np.uint8)
    for i in range(nx):
        for j in range(ny):
            if grid.counts[i, j] > 0:
                frac = grid.mean_metric[i, j] / peak if peak > 0 else 0.0
                img[ny - 1 - j, i] = np.uint8(round(255 * (1.0 - frac)))
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (nx, ny))
        f.write(img.tobytes())


def render_report(
    tables: dict[str, Sequence[EvalReport]],
    heatmaps: dict[str, HeatmapGrid],
    outdir: str | Path,
) -> list[Path]:
    """Write table CSVs and per-heatmap CSV + metadata + graymap files."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for name, reports in tables.items():
        path = outdir / f"{name}.csv"
        write_report_csv(path, reports)
        written.append(path)
    for name, grid in heatmaps.items():
        csv_path = outdir / f"heatmap_{name}.csv"
        write_heatmap_csv(csv_path, grid)
        written.append(csv_path)
        meta_path = outdir / f"heatmap_{name}.meta.json"
        write_heatmap_meta(meta_path, grid)
        written.append(meta_path)
        if grid.total > 0:
            pgm_path = outdir / f"heatmap_{name}.pgm"
            write_heatmap_pgm(pgm_path, grid)
            written.append(pgm_path)
    return written
