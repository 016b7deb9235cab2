"""Minibatch training loop with early stopping on a validation carve-out."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from safescale.nn.losses import get_loss
from safescale.nn.network import Network
from safescale.nn.optim import AdamState, TrainConfig, adam_update
from safescale.seeding import make_rng

_EVAL_CHUNK = 65536


@dataclass
class TrainingLog:
    """Per-epoch losses; ``best_epoch`` is where validation was lowest."""

    rows: list[tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = float("inf")
    stopped_early: bool = False

    def append(self, epoch: int, train_loss: float, val_loss: float) -> None:
        self.rows.append((epoch, train_loss, val_loss))


def _batched_loss(net: Network, x: np.ndarray, y: np.ndarray, loss_fn) -> float:
    """Infer-mode loss over the whole set, chunked; exact sample mean."""
    total = 0.0
    for a in range(0, x.shape[0], _EVAL_CHUNK):
        xb = x[a : a + _EVAL_CHUNK]
        total += loss_fn(net.forward(xb), y[a : a + _EVAL_CHUNK]) * xb.shape[0]
    return total / x.shape[0]


def train_network(
    net: Network,
    x: np.ndarray,
    y: np.ndarray,
    loss_kind: str,
    config: TrainConfig,
) -> TrainingLog:
    """Fit in place and leave the best-validation state in the network.

    A validation slice of round(n * val_fraction) rows (at least 1) is
    carved off by a seeded shuffle; standardization statistics come from
    the remaining fit rows.  Epochs stop at max_epochs or after
    ``patience`` epochs without a new validation minimum.  Trailing
    minibatches of a single row are dropped (batch statistics need
    two rows).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError(f"expected matching 2-D x and y, got {x.shape} and {y.shape}")
    n = x.shape[0]
    if n < 4:
        raise ValueError(f"need at least 4 rows to train, got {n}")
    loss_fn, grad_fn = get_loss(loss_kind)
    rng = make_rng(config.seed)

    order = rng.permutation(n)
    n_val = min(max(1, int(round(n * config.val_fraction))), n - 2)
    val_idx, fit_idx = order[:n_val], order[n_val:]
    x_val, y_val = x[val_idx], y[val_idx]
    x_fit, y_fit = x[fit_idx], y[fit_idx]

    net.set_standardization(x_fit.mean(axis=0), x_fit.std(axis=0))
    params = net.parameters()
    state = AdamState(params)
    log = TrainingLog()
    best_state: list[np.ndarray] | None = None
    since_best = 0
    step = 0
    n_fit = x_fit.shape[0]

    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(n_fit)
        train_total = 0.0
        train_rows = 0
        for a in range(0, n_fit, config.batch_size):
            idx = perm[a : a + config.batch_size]
            if idx.shape[0] < 2:
                continue
            xb, yb = x_fit[idx], y_fit[idx]
            out = net.forward(xb, train=True)
            loss = loss_fn(out, yb)
            net.backward(grad_fn(out, yb))
            step += 1
            adam_update(params, net.gradients(), state, config, step)
            train_total += loss * idx.shape[0]
            train_rows += idx.shape[0]
        val_loss = _batched_loss(net, x_val, y_val, loss_fn)
        log.append(epoch, train_total / train_rows, val_loss)
        if val_loss < log.best_val:
            log.best_val = val_loss
            log.best_epoch = epoch
            best_state = net.get_state()
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                log.stopped_early = True
                break

    if best_state is not None:
        net.set_state(best_state)
    net.epochs_run = log.rows[-1][0] if log.rows else 0
    return log
