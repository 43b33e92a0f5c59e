"""Lag-indexed emulators: a layer-normalized GELU MLP and a closed-form ridge baseline."""

from .bank import LagModelBank, load_bank, save_bank, train_lag_bank
from .mlp import MlpConfig, init_mlp, mlp_forward, mlp_loss_and_grads
from .model import EmulatorModel, load_model, predict, save_model
from .train import fit_linear, train

__all__ = [
    "EmulatorModel",
    "LagModelBank",
    "MlpConfig",
    "fit_linear",
    "init_mlp",
    "load_bank",
    "load_model",
    "mlp_forward",
    "mlp_loss_and_grads",
    "predict",
    "save_bank",
    "save_model",
    "train",
    "train_lag_bank",
]
