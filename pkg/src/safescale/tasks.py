"""The three predictor families and their training/decoding rules.

Classification nets emit class probabilities and decode to the centroid
of the argmax class; regression nets emit a clamped scalar; the mixed
net for window averages stacks a softmax bottleneck (width = cluster
count) under a free linear head, clamped to [0, 1] only at prediction
time so training gradients flow.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from safescale.labeling import ClusterModel, SupervisedDataset
from safescale.nn.layers import BatchNorm1d, Dense, HardTanh01, ReLU, Softmax
from safescale.nn.network import Network
from safescale.nn.optim import TrainConfig
from safescale.nn.train import TrainingLog, train_network
from safescale.seeding import derive_seed, make_rng

_PREDICT_CHUNK = 65536

TASK_KINDS = (
    "classify_one_step",
    "classify_n_step",
    "regress_one_step",
    "regress_n_step",
    "average_window",
)


class TaskError(ValueError):
    """Raised on task/dataset/architecture mismatches."""


@dataclass(frozen=True)
class TaskKind:
    kind: str
    w: int = 0

    def __post_init__(self) -> None:
        if self.kind not in TASK_KINDS:
            raise TaskError(f"kind must be one of {TASK_KINDS}, got {self.kind!r}")
        if self.is_one_step:
            if self.w != 0:
                raise TaskError(f"{self.kind} requires w = 0, got {self.w}")
        elif self.w < 1:
            raise TaskError(f"{self.kind} requires w >= 1, got {self.w}")

    @property
    def is_one_step(self) -> bool:
        return self.kind.endswith("one_step")

    @property
    def is_classification(self) -> bool:
        return self.kind.startswith("classify")

    @property
    def is_average(self) -> bool:
        return self.kind == "average_window"

    @property
    def loss(self) -> str:
        return "cross_entropy" if self.is_classification else "mse"

    @property
    def dataset_mode(self) -> str:
        if self.is_one_step:
            return "one_step"
        return "average" if self.is_average else "n_step"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "w": self.w}

    @classmethod
    def from_dict(cls, d: dict) -> "TaskKind":
        return cls(kind=d["kind"], w=int(d.get("w", 0)))


def _hidden_stack(in_width: int, n_hidden: int, width: int, rng: np.random.Generator) -> list:
    layers: list = []
    prev = in_width
    for _ in range(n_hidden):
        layers.append(Dense.initialized(prev, width, rng))
        layers.append(BatchNorm1d.initialized(width))
        layers.append(ReLU(width))
        prev = width
    return layers


def build_classification_net(input_width: int, p: int, seed: int = 0) -> Network:
    """input -> [dense 64 + batchnorm + relu] x4 -> dense p -> softmax."""
    if p < 2:
        raise TaskError(f"classification needs p >= 2, got {p}")
    rng = make_rng(seed)
    layers = _hidden_stack(input_width, 4, 64, rng)
    layers.append(Dense.initialized(64, p, rng))
    layers.append(Softmax(p))
    return Network(layers, seed=seed)


def build_regression_net(input_width: int, seed: int = 0) -> Network:
    """input -> [dense 64 + batchnorm + relu] x5 -> dense 1 -> hardtanh01.

    The head bias starts at 0.5 so the clamp is not saturated at init.
    """
    rng = make_rng(seed)
    layers = _hidden_stack(input_width, 5, 64, rng)
    layers.append(Dense.initialized(64, 1, rng, bias=0.5))
    layers.append(HardTanh01(1))
    return Network(layers, seed=seed)


def build_mixed_net(input_width: int, p: int, seed: int = 0) -> Network:
    """input -> [dense 64 + batchnorm + relu] x5 -> dense p -> softmax -> dense 1."""
    if p < 2:
        raise TaskError(f"the mixed net needs p >= 2, got {p}")
    rng = make_rng(seed)
    layers = _hidden_stack(input_width, 5, 64, rng)
    layers.append(Dense.initialized(64, p, rng))
    layers.append(Softmax(p))
    layers.append(Dense.initialized(p, 1, rng))
    return Network(layers, seed=seed)


def build_net(task: TaskKind, input_width: int, p: int | None, seed: int = 0) -> Network:
    if task.is_classification or task.is_average:
        if p is None:
            raise TaskError(f"{task.kind} needs a cluster model for its output width")
        if task.is_average:
            return build_mixed_net(input_width, p, seed)
        return build_classification_net(input_width, p, seed)
    return build_regression_net(input_width, seed)


@dataclass
class TrainedPredictor:
    task: TaskKind
    network: Network
    cluster: ClusterModel | None
    dataset_fingerprint: str = ""

    def __post_init__(self) -> None:
        if self.task.is_classification:
            if self.cluster is None:
                raise TaskError("classification predictors need their cluster model")
            if self.network.out_width != self.cluster.p:
                raise TaskError(
                    f"output width {self.network.out_width} != cluster count {self.cluster.p}"
                )

    @property
    def in_width(self) -> int:
        return self.network.in_width

    def to_dict(self) -> dict:
        return {
            "format": "safescale-predictor",
            "task": self.task.to_dict(),
            "dataset_fingerprint": self.dataset_fingerprint,
            "cluster": None if self.cluster is None else self.cluster.to_dict(),
            "network": self.network.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainedPredictor":
        return cls(
            task=TaskKind.from_dict(data["task"]),
            network=Network.from_dict(data["network"]),
            cluster=None if data.get("cluster") is None else ClusterModel.from_dict(data["cluster"]),
            dataset_fingerprint=data.get("dataset_fingerprint", ""),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)
            f.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "TrainedPredictor":
        with open(path) as f:
            data = json.load(f)
        if data.get("format") != "safescale-predictor":
            raise TaskError(f"{path} is not a predictor file")
        return cls.from_dict(data)


def dataset_fingerprint(ds: SupervisedDataset) -> str:
    """Stable digest of the rows a model was fit on."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(ds.episode).tobytes())
    h.update(np.ascontiguousarray(ds.features).tobytes())
    h.update(np.ascontiguousarray(ds.target_s).tobytes())
    if ds.target_cluster is not None:
        h.update(np.ascontiguousarray(ds.target_cluster).tobytes())
    return h.hexdigest()


def _targets_for(task: TaskKind, ds: SupervisedDataset, p: int | None) -> np.ndarray:
    if task.is_classification:
        if ds.target_cluster is None:
            raise TaskError(f"{task.kind} needs cluster targets, dataset has none")
        from safescale.nn.losses import one_hot

        return one_hot(ds.target_cluster - 1, p)
    return ds.target_s[:, None]


def train_task(
    task: TaskKind,
    dataset: SupervisedDataset,
    cluster_model: ClusterModel | None,
    config: TrainConfig,
    fingerprint: str | None = None,
) -> tuple[TrainedPredictor, TrainingLog]:
    """Build the architecture for ``task``, fit it, return the predictor."""
    if dataset.n_rows == 0:
        raise TaskError("cannot train on an empty dataset")
    if dataset.mode != task.dataset_mode and dataset.w != -1:
        raise TaskError(
            f"{task.kind} needs a {task.dataset_mode!r} dataset, got {dataset.mode!r}"
        )
    if task.is_one_step and dataset.n_features != 6:
        raise TaskError(f"one-step tasks use 6 features, dataset has {dataset.n_features}")
    p = cluster_model.p if cluster_model is not None else None
    net = build_net(task, dataset.n_features, p, seed=derive_seed(config.seed, "init"))
    log = train_network(net, dataset.features, _targets_for(task, dataset, p), task.loss, config)
    pred = TrainedPredictor(
        task=task,
        network=net,
        cluster=cluster_model,
        dataset_fingerprint=fingerprint if fingerprint is not None else dataset_fingerprint(dataset),
    )
    return pred, log


def write_training_log(path: str | Path, log: TrainingLog) -> None:
    with open(path, "w", newline="") as f:
        f.write("epoch,train_loss,val_loss\n")
        for epoch, train_loss, val_loss in log.rows:
            f.write("%d,%.17g,%.17g\n" % (epoch, train_loss, val_loss))


def read_training_log(path: str | Path) -> TrainingLog:
    log = TrainingLog()
    with open(path, "r", newline="") as f:
        if f.readline().strip() != "epoch,train_loss,val_loss":
            raise TaskError(f"{path} is not a training log")
        for line in f:
            epoch, train_loss, val_loss = line.split(",")
            log.append(int(epoch), float(train_loss), float(val_loss))
    for epoch, _, val_loss in log.rows:
        if val_loss < log.best_val:
            log.best_val = val_loss
            log.best_epoch = epoch
    return log


def predict_batch(pred: TrainedPredictor, x: np.ndarray) -> np.ndarray:
    """Decoded scaling estimates, one per input row."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != pred.in_width:
        raise TaskError(f"expected inputs of shape (n, {pred.in_width}), got {x.shape}")
    outs = []
    for a in range(0, x.shape[0], _PREDICT_CHUNK):
        out = pred.network.predict(x[a : a + _PREDICT_CHUNK])
        if pred.task.is_classification:
            # np.argmax takes the first maximum: ties resolve to the
            # lower index, hence the lower (more conservative) scaling.
            idx = np.argmax(out, axis=1)
            outs.append(np.asarray(pred.cluster.centroids)[idx])
        elif pred.task.is_average:
            outs.append(np.clip(out[:, 0], 0.0, 1.0))
        else:
            outs.append(out[:, 0])
    return np.concatenate(outs) if outs else np.empty(0)


def predict_classes(pred: TrainedPredictor, x: np.ndarray) -> np.ndarray:
    """1-based argmax class per row (classification tasks only)."""
    if not pred.task.is_classification:
        raise TaskError(f"{pred.task.kind} has no classes to predict")
    x = np.asarray(x, dtype=np.float64)
    idx = []
    for a in range(0, x.shape[0], _PREDICT_CHUNK):
        idx.append(np.argmax(pred.network.predict(x[a : a + _PREDICT_CHUNK]), axis=1) + 1)
    return np.concatenate(idx) if idx else np.empty(0, dtype=np.int64)


def predict_scaling(pred: TrainedPredictor, x: np.ndarray) -> float:
    """Single-row convenience wrapper around predict_batch."""
    x = np.asarray(x, dtype=np.float64).ravel()
    return float(predict_batch(pred, x[None, :])[0])
