"""Dense network math: flatten -> [linear -> layer norm -> GELU] x L -> linear.

All arithmetic runs in float64; gradients are hand-derived so they can be
checked against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from ..errors import ValidationError

LN_EPS = 1e-5
_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact Gaussian-error linear unit x * Phi(x)."""
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    phi = _INV_SQRT2PI * np.exp(-0.5 * x * x)
    return 0.5 * (1.0 + erf(x * _INV_SQRT2)) + x * phi


@dataclass(frozen=True)
class MlpConfig:
    """Hyperparameters of the lag emulator network.

    The architecture itself is fixed: layer normalization and GELU after every
    hidden linear layer, mean-squared-error loss, decoupled-weight-decay
    adaptive-moment optimizer with per-epoch exponential learning-rate decay.
    """

    hidden_layers: int = 4
    hidden_width: int = 256
    learning_rate: float = 2e-4
    lr_decay_per_epoch: float = 1e-6
    weight_decay: float = 1e-2
    epochs: int = 15
    batch_size: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise ValidationError("hidden_layers and hidden_width must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.weight_decay < 0 or self.lr_decay_per_epoch < 0:
            raise ValidationError("weight_decay and lr_decay_per_epoch must be >= 0")

    def to_dict(self) -> dict:
        return {
            "hidden_layers": self.hidden_layers,
            "hidden_width": self.hidden_width,
            "learning_rate": self.learning_rate,
            "lr_decay_per_epoch": self.lr_decay_per_epoch,
            "weight_decay": self.weight_decay,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
        }


def init_mlp_weights(config: MlpConfig, d_in: int, d_out: int, lag: int) -> dict:
    """Seeded scaled-uniform fan-in initialization, snapped to the float32 grid.

    The snap keeps in-memory weights exactly representable in the float32
    model-file format, so serialization round-trips bit for bit.
    """
    rng = np.random.default_rng([config.seed, int(lag), 0])
    weights: dict[str, np.ndarray] = {}
    fan_in = d_in
    for i in range(config.hidden_layers):
        bound = 1.0 / np.sqrt(fan_in)
        weights[f"layer{i}.weight"] = rng.uniform(
            -bound, bound, size=(fan_in, config.hidden_width)
        )
        weights[f"layer{i}.bias"] = rng.uniform(-bound, bound, size=config.hidden_width)
        weights[f"layer{i}.ln_scale"] = np.ones(config.hidden_width)
        weights[f"layer{i}.ln_shift"] = np.zeros(config.hidden_width)
        fan_in = config.hidden_width
    bound = 1.0 / np.sqrt(fan_in)
    weights["out.weight"] = rng.uniform(-bound, bound, size=(fan_in, d_out))
    weights["out.bias"] = rng.uniform(-bound, bound, size=d_out)
    return {k: v.astype(np.float32).astype(np.float64) for k, v in weights.items()}


def mlp_hidden_layers(weights: dict) -> int:
    n = 0
    while f"layer{n}.weight" in weights:
        n += 1
    return n


def mlp_forward(weights: dict, x: np.ndarray, *, want_cache: bool = False):
    """Forward pass on a (batch, d_in) float64 array."""
    h = x
    cache = {"x": x} if want_cache else None
    for i in range(mlp_hidden_layers(weights)):
        z = h @ weights[f"layer{i}.weight"] + weights[f"layer{i}.bias"]
        mu = z.mean(axis=1, keepdims=True)
        var = z.var(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + LN_EPS)
        zhat = (z - mu) * inv
        a = zhat * weights[f"layer{i}.ln_scale"] + weights[f"layer{i}.ln_shift"]
        g = gelu(a)
        if want_cache:
            cache[f"h{i}"] = h
            cache[f"zhat{i}"] = zhat
            cache[f"inv{i}"] = inv
            cache[f"a{i}"] = a
        h = g
    out = h @ weights["out.weight"] + weights["out.bias"]
    if want_cache:
        cache["h_out"] = h
        return out, cache
    return out


def mlp_backward(weights: dict, cache: dict, dout: np.ndarray) -> dict:
    """Gradients of a scalar loss wrt all parameters, given dloss/doutput."""
    grads = {
        "out.weight": cache["h_out"].T @ dout,
        "out.bias": dout.sum(axis=0),
    }
    dh = dout @ weights["out.weight"].T
    width = weights["out.weight"].shape[0]
    for i in reversed(range(mlp_hidden_layers(weights))):
        da = dh * gelu_grad(cache[f"a{i}"])
        zhat = cache[f"zhat{i}"]
        grads[f"layer{i}.ln_scale"] = (da * zhat).sum(axis=0)
        grads[f"layer{i}.ln_shift"] = da.sum(axis=0)
        dzhat = da * weights[f"layer{i}.ln_scale"]
        inv = cache[f"inv{i}"]
        # layer-norm backward over the feature axis
        dz = inv * (
            dzhat
            - dzhat.mean(axis=1, keepdims=True)
            - zhat * (dzhat * zhat).mean(axis=1, keepdims=True)
        )
        grads[f"layer{i}.weight"] = cache[f"h{i}"].T @ dz
        grads[f"layer{i}.bias"] = dz.sum(axis=0)
        dh = dz @ weights[f"layer{i}.weight"].T
    return grads


def mlp_loss_and_grads(weights: dict, x: np.ndarray, y: np.ndarray):
    """Mean-squared-error loss and its analytic parameter gradients."""
    pred, cache = mlp_forward(weights, x, want_cache=True)
    diff = pred - y
    loss = float(np.mean(diff * diff))
    dout = (2.0 / diff.size) * diff
    return loss, mlp_backward(weights, cache, dout)


def init_mlp(config: MlpConfig, lag: int, n_nodes: int, channels_in, channels_out,
             *, mesh_level=None, norm_stats=None):
    """Freshly initialized MLP emulator for one lag (see model.EmulatorModel)."""
    from .model import EmulatorModel, identity_norm

    channels_in = list(channels_in)
    channels_out = list(channels_out)
    weights = init_mlp_weights(
        config, n_nodes * len(channels_in), n_nodes * len(channels_out), lag
    )
    return EmulatorModel(
        kind="mlp",
        lag=int(lag),
        n_nodes=int(n_nodes),
        channels_in=channels_in,
        channels_out=channels_out,
        weights=weights,
        norm=norm_stats if norm_stats is not None
        else identity_norm(channels_in, channels_out),
        mesh_level=mesh_level,
        config=config.to_dict(),
        history={},
    )
