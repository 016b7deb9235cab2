"""From-scratch dense network engine on float64 numpy."""

from safescale.nn.gradcheck import GradCheckReport, gradient_check
from safescale.nn.layers import (
    BatchNorm1d,
    Dense,
    HardTanh01,
    LayerError,
    LayerSpec,
    ReLU,
    Softmax,
)
from safescale.nn.losses import (
    grad_cross_entropy,
    grad_mse,
    loss_cross_entropy,
    loss_mse,
    one_hot,
)
from safescale.nn.network import Network
from safescale.nn.optim import AdamState, TrainConfig, adam_update
from safescale.nn.train import TrainingLog, train_network

__all__ = [
    "AdamState",
    "BatchNorm1d",
    "Dense",
    "GradCheckReport",
    "HardTanh01",
    "LayerError",
    "LayerSpec",
    "Network",
    "ReLU",
    "Softmax",
    "TrainConfig",
    "TrainingLog",
    "adam_update",
    "grad_cross_entropy",
    "grad_mse",
    "gradient_check",
    "loss_cross_entropy",
    "loss_mse",
    "one_hot",
    "train_network",
]
