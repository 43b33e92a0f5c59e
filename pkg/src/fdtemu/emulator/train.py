"""Training loops: minibatch MSE descent for the MLP, closed-form ridge fit."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from ..dataio import LagPairs
from ..errors import ValidationError
from .mlp import MlpConfig, mlp_forward, mlp_loss_and_grads
from .model import EmulatorModel, identity_norm, quantize_weights
from .optim import DecoupledAdamW

_EVAL_CHUNK = 8192


def _flatten_pairs(pairs: LagPairs):
    x = pairs.inputs.reshape(pairs.n_samples, -1).astype(np.float64)
    y = pairs.targets.reshape(pairs.n_samples, -1).astype(np.float64)
    return x, y


def _mse(weights, x, y) -> float:
    total = 0.0
    for i in range(0, x.shape[0], _EVAL_CHUNK):
        pred = mlp_forward(weights, x[i:i + _EVAL_CHUNK])
        diff = pred - y[i:i + _EVAL_CHUNK]
        total += float(np.sum(diff * diff))
    return total / (x.shape[0] * y.shape[1])


def train(model: EmulatorModel, pairs: LagPairs, validation: LagPairs) -> EmulatorModel:
    """Minimize MSE over minibatches; keep the best-validation-epoch weights.

    Pairs must be in the model's training units (standardized anomalies when
    the model carries training norm stats).  The learning rate decays as
    lr * exp(-rate * epoch); batch order reshuffles each epoch from a stream
    seeded by (config seed, lag, epoch), so runs are reproducible.
    """
    if model.kind != "mlp":
        raise ValidationError("train() only applies to mlp-kind models")
    if pairs.n_samples == 0:
        raise ValidationError("training pairs are empty")
    if validation is None or validation.n_samples == 0:
        raise ValidationError("validation pairs are required for best-epoch selection")
    config = MlpConfig(**model.config)
    x, y = _flatten_pairs(pairs)
    xv, yv = _flatten_pairs(validation)
    if x.shape[1] != model.d_in or y.shape[1] != model.d_out:
        raise ValidationError(
            f"pair shapes ({x.shape[1]} -> {y.shape[1]}) do not match model "
            f"({model.d_in} -> {model.d_out})"
        )

    weights = {k: v.copy() for k, v in model.weights.items()}
    opt = DecoupledAdamW(weights, weight_decay=config.weight_decay)
    train_curve: list[float] = []
    val_curve: list[float] = []
    best_val = np.inf
    best_weights = {k: v.copy() for k, v in weights.items()}
    best_epoch = -1

    for epoch in range(config.epochs):
        lr = config.learning_rate * np.exp(-config.lr_decay_per_epoch * epoch)
        rng = np.random.default_rng([config.seed, model.lag, 2, epoch])
        perm = rng.permutation(pairs.n_samples)
        batch_losses = []
        for start in range(0, pairs.n_samples, config.batch_size):
            sel = perm[start:start + config.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = mlp_loss_and_grads(weights, x[sel], y[sel])
            if not np.isfinite(loss):
                raise ValidationError(
                    f"non-finite training loss at epoch {epoch}; "
                    "try a smaller learning_rate"
                )
            opt.step(weights, grads, lr)
            batch_losses.append(loss)
        train_curve.append(float(np.mean(batch_losses)))
        val_loss = _mse(weights, xv, yv)
        val_curve.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_weights = {k: v.copy() for k, v in weights.items()}
            best_epoch = epoch

    model.weights = quantize_weights(best_weights)
    model.history = {
        "train_loss": train_curve,
        "val_loss": val_curve,
        "best_epoch": best_epoch,
    }
    return model


def fit_linear(pairs: LagPairs, ridge: float = 0.0, *, n_nodes=None,
               channels_in=None, channels_out=None, mesh_level=None,
               norm=None) -> EmulatorModel:
    """Closed-form ridge regression Y X^T (X X^T + ridge I)^{-1} over flat pairs.

    With ridge 0 an exactly singular normal matrix is rejected with a hint to
    use ridge > 0.  Metadata keywords default to anonymous channel names so
    the fit can run on bare arrays.
    """
    if ridge < 0:
        raise ValidationError("ridge must be >= 0")
    if pairs.n_samples < 1:
        raise ValidationError("need at least one sample to fit")
    x, y = _flatten_pairs(pairs)
    gram = x.T @ x
    cross = x.T @ y
    if ridge > 0:
        gram = gram + ridge * np.eye(gram.shape[0])
    try:
        coef = scipy.linalg.solve(gram, cross, assume_a="pos").T
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise ValidationError(
            "normal matrix X X^T is singular; refit with ridge > 0"
        ) from exc
    coef = quantize_weights({"coef": coef})["coef"]

    n_nodes = pairs.inputs.shape[1] if n_nodes is None else n_nodes
    c_in = pairs.inputs.shape[2]
    c_out = pairs.targets.shape[2]
    channels_in = list(channels_in) if channels_in else [f"in{j}" for j in range(c_in)]
    channels_out = list(channels_out) if channels_out else [f"out{j}" for j in range(c_out)]
    return EmulatorModel(
        kind="linear",
        lag=pairs.lag,
        n_nodes=n_nodes,
        channels_in=channels_in,
        channels_out=channels_out,
        weights={"coef": coef},
        norm=norm if norm is not None else identity_norm(channels_in, channels_out),
        mesh_level=mesh_level,
        config={"ridge": float(ridge)},
        history={},
    )
