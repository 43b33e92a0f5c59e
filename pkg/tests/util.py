"""Shared builders and oracles for the test suite."""

import numpy as np

from fdtemu.dataio import AnomalyDataset, ChannelSpec, EnsembleDataset


def io_channels(n_in=1, n_out=1, in_prefix="cres", out_prefix="tas"):
    ins = [ChannelSpec(in_prefix if n_in == 1 else f"{in_prefix}{i}", "input")
           for i in range(n_in)]
    outs = [ChannelSpec(out_prefix if n_out == 1 else f"{out_prefix}{i}", "output")
            for i in range(n_out)]
    return ins + outs


def make_dataset(values, mesh_level=0, start_month=1, channels=None):
    values = np.asarray(values, dtype=np.float32)
    channels = channels or io_channels(values.shape[-1] - 1, 1)
    return EnsembleDataset(
        mesh_level=mesh_level,
        start_month=start_month,
        channels=channels,
        values=values,
    )


def make_anomalies(values, mesh_level=0, start_month=1, channels=None):
    values = np.asarray(values, dtype=np.float32)
    channels = channels or io_channels(values.shape[-1] - 1, 1)
    return AnomalyDataset(
        mesh_level=mesh_level,
        start_month=start_month,
        channels=channels,
        values=values,
    )


def random_anomalies(rng, members=3, months=24, mesh_level=0, n_in=1, n_out=1,
                     scale=1.0):
    n = 10 * 4**mesh_level + 2
    values = scale * rng.standard_normal((members, months, n, n_in + n_out))
    return make_anomalies(values, mesh_level, channels=io_channels(n_in, n_out))


def flatten_weights(weights):
    names = list(weights)
    vec = np.concatenate([weights[k].ravel() for k in names])
    return names, vec


def unflatten_weights(names, vec, template):
    out = {}
    pos = 0
    for k in names:
        size = template[k].size
        out[k] = vec[pos:pos + size].reshape(template[k].shape).copy()
        pos += size
    return out


def finite_difference_grads(loss_fn, weights, h=1e-6):
    """Central finite differences of loss_fn(weights) wrt every parameter."""
    names, vec = flatten_weights(weights)
    grad = np.empty_like(vec)
    for i in range(vec.size):
        bump = np.zeros_like(vec)
        bump[i] = h
        lo = loss_fn(unflatten_weights(names, vec - bump, weights))
        hi = loss_fn(unflatten_weights(names, vec + bump, weights))
        grad[i] = (hi - lo) / (2.0 * h)
    return unflatten_weights(names, grad, weights)


def max_relative_grad_error(analytic, numeric):
    worst = 0.0
    for k in analytic:
        a = analytic[k].ravel()
        n = numeric[k].ravel()
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def pattern_corr(a, b):
    a = np.asarray(a, float).ravel()
    b = np.asarray(b, float).ravel()
    a = a - a.mean()
    b = b - b.mean()
    return float(a @ b / np.sqrt((a @ a) * (b @ b)))
