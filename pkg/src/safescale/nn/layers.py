"""Network layers with explicit forward/backward passes.

Every layer caches what its backward pass needs during a train-mode
forward.  ``activation_signature`` exposes the discrete state of a
nonlinearity (ReLU mask, hardtanh saturation pattern) so the gradient
checker can skip parameter coordinates whose finite-difference
perturbation crosses a kink.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LayerError(ValueError):
    """Raised on shape or mode violations inside a layer."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_width: int
    out_width: int

    def __post_init__(self) -> None:
        if self.in_width < 1 or self.out_width < 1:
            raise LayerError(f"layer widths must be >= 1, got {self}")


class Layer:
    """Base interface; subclasses fill params/grads with aligned arrays."""

    kind = "base"

    def spec(self) -> LayerSpec:
        raise NotImplementedError

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []

    def forward(self, x: np.ndarray, train: bool, update_running: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, gy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def activation_signature(self) -> bytes | None:
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


class Dense(Layer):
    """Affine map y = x w + b with w of shape (in_width, out_width)."""

    kind = "dense"

    def __init__(self, w: np.ndarray, b: np.ndarray):
        w = np.asarray(w, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[1],):
            raise LayerError(f"dense expects w (in,out) and b (out,), got {w.shape} and {b.shape}")
        self.w = w
        self.b = b
        self.gw = np.zeros_like(w)
        self.gb = np.zeros_like(b)
        self._x: np.ndarray | None = None

    @classmethod
    def initialized(cls, in_width: int, out_width: int, rng: np.random.Generator, bias: float = 0.0) -> "Dense":
        bound = 1.0 / np.sqrt(in_width)
        w = rng.uniform(-bound, bound, size=(in_width, out_width))
        b = np.full(out_width, bias, dtype=np.float64)
        return cls(w, b)

    def spec(self) -> LayerSpec:
        return LayerSpec(self.kind, self.w.shape[0], self.w.shape[1])

    def params(self) -> list[np.ndarray]:
        return [self.w, self.b]

    def grads(self) -> list[np.ndarray]:
        return [self.gw, self.gb]

    def forward(self, x: np.ndarray, train: bool, update_running: bool = True) -> np.ndarray:
        if train:
            self._x = x
        return x @ self.w + self.b

    def backward(self, gy: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise LayerError("dense backward without a train-mode forward")
        self.gw[...] = self._x.T @ gy
        self.gb[...] = gy.sum(axis=0)
        return gy @ self.w.T

    def to_dict(self) -> dict:
        return {"kind": self.kind, "w": self.w.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Dense":
        return cls(np.asarray(d["w"]), np.asarray(d["b"]))


class BatchNorm1d(Layer):
    """Per-feature batch normalization with learnable gain and shift.

    Train mode normalizes by biased batch statistics and folds them
    into the running estimates as new = (1-momentum)*old + momentum*batch;
    infer mode normalizes by the running estimates.
    """

    kind = "batchnorm1d"

    def __init__(
        self,
        gamma: np.ndarray,
        beta: np.ndarray,
        running_mean: np.ndarray,
        running_var: np.ndarray,
        momentum: float = 0.1,
        eps: float = 1e-5,
    ):
        self.gamma = np.asarray(gamma, dtype=np.float64)
        self.beta = np.asarray(beta, dtype=np.float64)
        self.running_mean = np.asarray(running_mean, dtype=np.float64)
        self.running_var = np.asarray(running_var, dtype=np.float64)
        shapes = {a.shape for a in (self.gamma, self.beta, self.running_mean, self.running_var)}
        if len(shapes) != 1 or self.gamma.ndim != 1:
            raise LayerError("batchnorm arrays must share one (width,) shape")
        if (self.running_var <= 0).any():
            raise LayerError("batchnorm running variance must stay positive")
        self.momentum = momentum
        self.eps = eps
        self.ggamma = np.zeros_like(self.gamma)
        self.gbeta = np.zeros_like(self.beta)
        self._cache: tuple | None = None

    @classmethod
    def initialized(cls, width: int) -> "BatchNorm1d":
        return cls(np.ones(width), np.zeros(width), np.zeros(width), np.ones(width))

    @property
    def width(self) -> int:
        return self.gamma.shape[0]

    def spec(self) -> LayerSpec:
        return LayerSpec(self.kind, self.width, self.width)

    def params(self) -> list[np.ndarray]:
        return [self.gamma, self.beta]

    def grads(self) -> list[np.ndarray]:
        return [self.ggamma, self.gbeta]

    def forward(self, x: np.ndarray, train: bool, update_running: bool = True) -> np.ndarray:
        if not train:
            inv = 1.0 / np.sqrt(self.running_var + self.eps)
            return (x - self.running_mean) * inv * self.gamma + self.beta
        if x.shape[0] < 2:
            raise LayerError("batchnorm train mode needs a batch of at least 2")
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv
        if update_running:
            # In place: optimizer and snapshot code hold references.
            self.running_mean *= 1.0 - self.momentum
            self.running_mean += self.momentum * mean
            self.running_var *= 1.0 - self.momentum
            self.running_var += self.momentum * var
        self._cache = (x, mean, inv, xhat)
        return xhat * self.gamma + self.beta

    def backward(self, gy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise LayerError("batchnorm backward without a train-mode forward")
        x, mean, inv, xhat = self._cache
        n = x.shape[0]
        self.ggamma[...] = (gy * xhat).sum(axis=0)
        self.gbeta[...] = gy.sum(axis=0)
        gxhat = gy * self.gamma
        # Backprop through the batch statistics themselves.
        gvar = (gxhat * (x - mean)).sum(axis=0) * (-0.5) * inv**3
        gmean = -(gxhat.sum(axis=0)) * inv + gvar * (-2.0 / n) * (x - mean).sum(axis=0)
        return gxhat * inv + gvar * (2.0 / n) * (x - mean) + gmean / n

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "gamma": self.gamma.tolist(),
            "beta": self.beta.tolist(),
            "running_mean": self.running_mean.tolist(),
            "running_var": self.running_var.tolist(),
            "momentum": self.momentum,
            "eps": self.eps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BatchNorm1d":
        return cls(
            np.asarray(d["gamma"]),
            np.asarray(d["beta"]),
            np.asarray(d["running_mean"]),
            np.asarray(d["running_var"]),
            momentum=float(d["momentum"]),
            eps=float(d["eps"]),
        )


class _Activation(Layer):
    def __init__(self, width: int):
        self.width = int(width)

    def spec(self) -> LayerSpec:
        return LayerSpec(self.kind, self.width, self.width)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "width": self.width}

    @classmethod
    def from_dict(cls, d: dict):
        return cls(d["width"])


class ReLU(_Activation):
    kind = "relu"

    def __init__(self, width: int):
        super().__init__(width)
        self._mask: np.ndarray | None = None

    def forward(self, x: np.ndarray, train: bool, update_running: bool = True) -> np.ndarray:
        mask = x > 0.0
        if train:
            self._mask = mask
        return np.where(mask, x, 0.0)

    def backward(self, gy: np.ndarray) -> np.ndarray:
        if self._mask is None:
            raise LayerError("relu backward without a train-mode forward")
        return gy * self._mask

    def activation_signature(self) -> bytes | None:
        return None if self._mask is None else np.packbits(self._mask).tobytes()


class HardTanh01(_Activation):
    """Clamp to [0, 1]; the unit interval replaces the usual [-1, 1]
    because the predicted quantity is a scaling factor."""

    kind = "hardtanh01"

    def __init__(self, width: int):
        super().__init__(width)
        self._inside: np.ndarray | None = None
        self._state: np.ndarray | None = None

    def forward(self, x: np.ndarray, train: bool, update_running: bool = True) -> np.ndarray:
        if train:
            self._inside = (x > 0.0) & (x < 1.0)
            self._state = np.sign(x - 0.5) * (~self._inside)
        return np.clip(x, 0.0, 1.0)

    def backward(self, gy: np.ndarray) -> np.ndarray:
        if self._inside is None:
            raise LayerError("hardtanh01 backward without a train-mode forward")
        return gy * self._inside

    def activation_signature(self) -> bytes | None:
        return None if self._state is None else self._state.tobytes()


class Softmax(_Activation):
    kind = "softmax"

    def __init__(self, width: int):
        super().__init__(width)
        self._y: np.ndarray | None = None

    def forward(self, x: np.ndarray, train: bool, update_running: bool = True) -> np.ndarray:
        z = np.exp(x - x.max(axis=1, keepdims=True))
        y = z / z.sum(axis=1, keepdims=True)
        if train:
            self._y = y
        return y

    def backward(self, gy: np.ndarray) -> np.ndarray:
        if self._y is None:
            raise LayerError("softmax backward without a train-mode forward")
        y = self._y
        return y * (gy - (gy * y).sum(axis=1, keepdims=True))


_LAYER_KINDS = {
    Dense.kind: Dense,
    BatchNorm1d.kind: BatchNorm1d,
    ReLU.kind: ReLU,
    HardTanh01.kind: HardTanh01,
    Softmax.kind: Softmax,
}


def layer_from_dict(d: dict) -> Layer:
    try:
        cls = _LAYER_KINDS[d["kind"]]
    except KeyError as exc:
        raise LayerError(f"unknown layer kind {d.get('kind')!r}") from exc
    return cls.from_dict(d)
