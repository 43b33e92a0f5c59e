"""Evaluation metrics, the persistence baseline, and the OOD score.

All node statistics are unweighted: icosahedral vertices are treated as
equal-area.  Correlations are Pearson; constant series yield NaN markers in
per-node maps rather than global failures.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .dataio import AnomalyDataset, channel_indices, make_lag_pairs
from .errors import ValidationError


def rmse(pred, truth) -> np.ndarray | float:
    """Root mean squared difference over all leading axes; per channel if 3-D+.

    Arrays of shape (..., node) give a scalar; (..., node, channel) give one
    value per channel.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValidationError(f"shape mismatch {pred.shape} vs {truth.shape}")
    sq = (pred - truth) ** 2
    if pred.ndim >= 3:
        axes = tuple(range(pred.ndim - 1))
        return np.sqrt(sq.mean(axis=axes))
    return float(np.sqrt(sq.mean()))


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0.0:
        raise ValidationError("correlation undefined for a zero-variance field")
    return float(np.clip((a * b).sum() / denom, -1.0, 1.0))


def spatial_corr(pred, truth) -> float:
    """Pearson correlation across nodes; series inputs average over timesteps.

    Accepts (node,) fields or (time, node) series (one value per 2-D slice).
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValidationError(f"shape mismatch {pred.shape} vs {truth.shape}")
    if pred.ndim == 1:
        if pred.size < 2:
            raise ValidationError("need at least 2 nodes for spatial correlation")
        return _pearson(pred, truth)
    if pred.ndim == 2:
        return float(np.mean([_pearson(p, t) for p, t in zip(pred, truth)]))
    raise ValidationError("spatial_corr expects (node,) or (time, node) arrays")


def temporal_corr_map(pred, truth) -> np.ndarray:
    """Per-node Pearson correlation over time; NaN where either series is constant.

    Accepts (time, node) or (time, node, channel); output drops the time axis.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValidationError(f"shape mismatch {pred.shape} vs {truth.shape}")
    if pred.shape[0] < 2:
        raise ValidationError("need at least 2 timesteps for temporal correlation")
    pa = pred - pred.mean(axis=0)
    ta = truth - truth.mean(axis=0)
    cov = (pa * ta).sum(axis=0)
    denom = np.sqrt((pa * pa).sum(axis=0) * (ta * ta).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0, cov / np.where(denom > 0, denom, 1.0), np.nan)
    return np.clip(out, -1.0, 1.0)


def persistence_baseline(anoms: AnomalyDataset, lag: int):
    """RMSE and spatial correlation of predicting y(t + lag) with y(t).

    Returns (rmse_per_channel, corr_per_channel) over output channels; lag 0
    is exactly (0, 1).
    """
    if not 0 <= lag < anoms.months:
        raise ValidationError(f"lag must satisfy 0 <= lag < {anoms.months}, got {lag}")
    co = channel_indices(anoms.channels, "output")
    if not co:
        raise ValidationError("dataset has no output channels")
    y = anoms.values[..., co].astype(np.float64)
    if lag == 0:
        return np.zeros(len(co)), np.ones(len(co))
    pred = y[:, : anoms.months - lag].reshape(-1, anoms.n_nodes, len(co))
    truth = y[:, lag:].reshape(-1, anoms.n_nodes, len(co))
    r = rmse(pred, truth)
    corr = np.array(
        [spatial_corr(pred[..., c], truth[..., c]) for c in range(len(co))]
    )
    return r, corr


# ---------------------------------------------------------------------------
# out-of-distribution guard

@dataclass
class OodStats:
    """Top-k principal subspace of the training inputs with Mahalanobis scaling.

    Scores are normalized so the training-set median is 1; the stored 2-D
    projections back the background scatter of the scenario console.
    """

    mean: np.ndarray            # (D,)
    components: np.ndarray      # (k, D) orthonormal rows
    variances: np.ndarray       # (k,) subspace variances
    normalizer: float
    background: np.ndarray     # (S, 2) training projections onto PCs 1-2

    @property
    def k(self) -> int:
        return self.components.shape[0]


def _flatten_inputs(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        x = x.reshape(x.shape[0], -1)
    if x.ndim != 2:
        raise ValidationError("training inputs must be (samples, nodes, channels)")
    return x


def fit_ood_stats(inputs, k: int = 10, *, max_background: int = 2000) -> OodStats:
    """PCA of the flattened training inputs, keeping the top-k subspace."""
    x = _flatten_inputs(inputs)
    s, d = x.shape
    mean = x.mean(axis=0)
    xc = x - mean
    _, svals, vt = np.linalg.svd(xc, full_matrices=False)
    rank = int(np.sum(svals > svals[0] * 1e-12)) if svals.size else 0
    if k > rank:
        raise ValidationError(
            f"requested {k} principal components but the data rank is {rank}"
        )
    components = vt[:k]
    variances = (svals[:k] ** 2) / s
    proj = xc @ components.T
    raw = np.sqrt(((proj**2) / variances).sum(axis=1))
    normalizer = float(np.median(raw))
    if normalizer == 0.0:
        raise ValidationError("degenerate training inputs: median score is zero")
    step = max(1, s // max_background)
    background = proj[::step, :2].copy()
    return OodStats(
        mean=mean,
        components=components,
        variances=variances,
        normalizer=normalizer,
        background=background,
    )


def ood_score(stats: OodStats, x) -> float | np.ndarray:
    """Median-normalized Mahalanobis distance in the principal subspace."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim in (1, 2) and arr.size == stats.mean.size
    flat = arr.reshape(1, -1) if single else _flatten_inputs(arr)
    if flat.shape[1] != stats.mean.size:
        raise ValidationError(
            f"state dimension {flat.shape[1]} != fitted dimension {stats.mean.size}"
        )
    proj = (flat - stats.mean) @ stats.components.T
    raw = np.sqrt(((proj**2) / stats.variances).sum(axis=1)) / stats.normalizer
    return float(raw[0]) if single else raw


def save_ood_stats(stats: OodStats, outdir: str, *, name: str = "ood.json") -> str:
    os.makedirs(outdir, exist_ok=True)
    payload = name.replace(".json", ".f64")
    arrays = np.concatenate([
        stats.mean,
        stats.components.ravel(),
        stats.variances,
        stats.background.ravel(),
    ])
    manifest = {
        "k": stats.k,
        "dim": int(stats.mean.size),
        "n_background": int(stats.background.shape[0]),
        "normalizer": stats.normalizer,
        "payload": payload,
    }
    path = os.path.join(outdir, name)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    arrays.astype("<f8").tofile(os.path.join(outdir, payload))
    return path


def load_ood_stats(path: str) -> OodStats:
    from .errors import FormatError

    try:
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read OOD stats: {exc}") from exc
    raw = np.fromfile(
        os.path.join(os.path.dirname(path), manifest["payload"]), dtype="<f8"
    )
    k, d, nb = int(manifest["k"]), int(manifest["dim"]), int(manifest["n_background"])
    expected = d + k * d + k + 2 * nb
    if raw.size != expected:
        raise FormatError(f"OOD payload holds {raw.size} floats, expected {expected}")
    pos = 0
    mean = raw[pos:pos + d]; pos += d
    components = raw[pos:pos + k * d].reshape(k, d); pos += k * d
    variances = raw[pos:pos + k]; pos += k
    background = raw[pos:].reshape(nb, 2)
    return OodStats(
        mean=mean,
        components=components,
        variances=variances,
        normalizer=float(manifest["normalizer"]),
        background=background,
    )


# ---------------------------------------------------------------------------
# bank evaluation report

@dataclass
class MetricReport:
    """Per-lag, per-output-channel emulation skill vs the persistence baseline."""

    lags: list[int]
    channels: list[str]
    model_rmse: np.ndarray          # (L, C)
    model_spatial_corr: np.ndarray  # (L, C)
    persistence_rmse: np.ndarray    # (L, C)
    persistence_corr: np.ndarray    # (L, C)
    temporal_corr: dict = field(default_factory=dict)   # lag -> (N, C) map

    def to_dict(self) -> dict:
        return {
            "lags": self.lags,
            "channels": self.channels,
            "model_rmse": self.model_rmse.tolist(),
            "model_spatial_corr": self.model_spatial_corr.tolist(),
            "persistence_rmse": self.persistence_rmse.tolist(),
            "persistence_corr": self.persistence_corr.tolist(),
        }

    def save(self, path: str, *, with_maps: bool = False) -> str:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")
        if with_maps and self.temporal_corr:
            stack = np.stack([self.temporal_corr[l] for l in self.lags])
            stack.astype("<f8").tofile(path.replace(".json", "_tcorr.f64"))
        return path


def evaluate_bank(bank, anoms: AnomalyDataset, *, lags=None,
                  with_maps: bool = True) -> MetricReport:
    """Predict held-out pairs per lag and compare against truth and persistence.

    Works on physical-unit anomalies: predictions are destandardized inside
    the models, so metrics are in channel units.
    """
    from .emulator.model import predict

    if anoms.standardized:
        raise ValidationError("evaluate on physical-unit anomalies, not standardized")
    lag_list = sorted(int(l) for l in (bank.lags if lags is None else lags))
    channels = list(bank.channels_out)
    shape = (len(lag_list), len(channels))
    m_rmse = np.empty(shape)
    m_corr = np.empty(shape)
    p_rmse = np.empty(shape)
    p_corr = np.empty(shape)
    maps: dict[int, np.ndarray] = {}
    for i, lag in enumerate(lag_list):
        pairs = make_lag_pairs(anoms, lag)
        pred = predict(bank.models[lag], pairs.inputs.astype(np.float64))
        truth = pairs.targets.astype(np.float64)
        m_rmse[i] = rmse(pred, truth)
        m_corr[i] = [
            spatial_corr(pred[..., c], truth[..., c]) for c in range(len(channels))
        ]
        p_rmse[i], p_corr[i] = persistence_baseline(anoms, lag)
        if with_maps:
            maps[lag] = temporal_corr_map(pred, truth)
    return MetricReport(
        lags=lag_list,
        channels=channels,
        model_rmse=m_rmse,
        model_spatial_corr=m_corr,
        persistence_rmse=p_rmse,
        persistence_corr=p_corr,
        temporal_corr=maps,
    )
