"""Layer stack with input standardization and lossless persistence."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from safescale.nn.layers import (
    BatchNorm1d,
    Layer,
    LayerError,
    LayerSpec,
    layer_from_dict,
)


class Network:
    """An ordered layer stack over float64 rows.

    Inputs are z-scored with stored per-feature statistics before the
    first layer; the statistics are fit by the trainer and are not
    trainable parameters.
    """

    def __init__(self, layers: list[Layer], seed: int | None = None):
        if not layers:
            raise LayerError("a network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.spec().out_width != b.spec().in_width:
                raise LayerError(f"layer widths do not chain: {a.spec()} -> {b.spec()}")
        self.layers = layers
        self.input_mean: np.ndarray | None = None
        self.input_std: np.ndarray | None = None
        self.seed = seed
        self.epochs_run = 0

    @property
    def in_width(self) -> int:
        return self.layers[0].spec().in_width

    @property
    def out_width(self) -> int:
        return self.layers[-1].spec().out_width

    def specs(self) -> list[LayerSpec]:
        return [layer.spec() for layer in self.layers]

    def set_standardization(self, mean: np.ndarray, std: np.ndarray) -> None:
        mean = np.asarray(mean, dtype=np.float64)
        std = np.asarray(std, dtype=np.float64).copy()
        if mean.shape != (self.in_width,) or std.shape != (self.in_width,):
            raise LayerError(f"standardization stats must have shape ({self.in_width},)")
        std[std < 1e-12] = 1.0  # constant features pass through unscaled
        self.input_mean = mean
        self.input_std = std

    def _standardize(self, x: np.ndarray) -> np.ndarray:
        if self.input_mean is None:
            return x
        return (x - self.input_mean) / self.input_std

    def forward(self, x: np.ndarray, train: bool = False, update_running: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_width:
            raise LayerError(f"expected input of shape (batch, {self.in_width}), got {x.shape}")
        if train and x.shape[0] < 2:
            raise LayerError("train-mode forward needs a batch of at least 2")
        out = self._standardize(x)
        for layer in self.layers:
            out = layer.forward(out, train, update_running)
        return out

    def backward(self, gy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            gy = layer.backward(gy)
        return gy

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x, train=False)

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def gradients(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads()]

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def _state_arrays(self) -> list[np.ndarray]:
        arrays = list(self.parameters())
        for layer in self.layers:
            if isinstance(layer, BatchNorm1d):
                arrays.extend([layer.running_mean, layer.running_var])
        return arrays

    def get_state(self) -> list[np.ndarray]:
        return [a.copy() for a in self._state_arrays()]

    def set_state(self, state: list[np.ndarray]) -> None:
        live = self._state_arrays()
        if len(live) != len(state):
            raise LayerError("state snapshot does not match the network")
        for dst, src in zip(live, state):
            dst[...] = src

    def to_dict(self) -> dict:
        return {
            "format": "safescale-network",
            "seed": self.seed,
            "epochs_run": self.epochs_run,
            "input_mean": None if self.input_mean is None else self.input_mean.tolist(),
            "input_std": None if self.input_std is None else self.input_std.tolist(),
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Network":
        net = cls([layer_from_dict(d) for d in data["layers"]], seed=data.get("seed"))
        net.epochs_run = int(data.get("epochs_run", 0))
        if data.get("input_mean") is not None:
            net.set_standardization(np.asarray(data["input_mean"]), np.asarray(data["input_std"]))
        return net

    def save(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)
            f.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "Network":
        with open(path) as f:
            return cls.from_dict(json.load(f))
