"""Batch-mean losses and their gradients w.r.t. the network output."""

from __future__ import annotations

import numpy as np

PROB_FLOOR = 1e-12


def one_hot(indices: np.ndarray, width: int) -> np.ndarray:
    """Rows of zeros with a single 1 at each (0-based) index."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.min() < 0 or idx.max() >= width:
        raise ValueError(f"indices must lie in [0, {width}), got range [{idx.min()}, {idx.max()}]")
    out = np.zeros((idx.shape[0], width), dtype=np.float64)
    out[np.arange(idx.shape[0]), idx] = 1.0
    return out


def loss_cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean over the batch of -sum_j l_j log max(p_j, floor)."""
    if probs.shape != labels.shape:
        raise ValueError(f"shape mismatch: {probs.shape} vs {labels.shape}")
    p = np.maximum(probs, PROB_FLOOR)
    return float(-(labels * np.log(p)).sum() / probs.shape[0])


def grad_cross_entropy(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    # The floor zeroes the derivative below it, matching the loss exactly.
    p = np.maximum(probs, PROB_FLOOR)
    g = -(labels / p) / probs.shape[0]
    g[probs < PROB_FLOOR] = 0.0
    return g


def loss_mse(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over the batch of the per-row squared error norm."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    d = pred - target
    return float((d * d).sum() / pred.shape[0])


def grad_mse(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    return 2.0 * (pred - target) / pred.shape[0]


_LOSSES = {
    "cross_entropy": (loss_cross_entropy, grad_cross_entropy),
    "mse": (loss_mse, grad_mse),
}


def get_loss(kind: str):
    try:
        return _LOSSES[kind]
    except KeyError as exc:
        raise ValueError(f"unknown loss {kind!r}; expected one of {sorted(_LOSSES)}") from exc
