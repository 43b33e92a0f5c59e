"""Emulator container, prediction, and the binary model-file format.

File layout: 8-byte magic ``AIBEDOM1``, little-endian uint64 header length,
canonical-JSON UTF-8 header (kind, lag, shapes, config, norm reference, loss
curves, block table), then the raw little-endian float32 blocks in declared
order.  In-memory weights are float64 values snapped to the float32 grid, so
save -> load -> predict is bit-identical to predicting before the save.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from ..dataio import NormStats
from ..errors import FormatError, ValidationError
from ..grid import vertex_count
from .mlp import mlp_forward, mlp_hidden_layers

MAGIC = b"AIBEDOM1"


@dataclass
class ModelNorm:
    """Per-channel standardization applied inside predict (float32-grid values)."""

    in_mean: np.ndarray
    in_std: np.ndarray
    out_mean: np.ndarray
    out_std: np.ndarray
    source: str = "identity"

    def __post_init__(self):
        for name in ("in_mean", "in_std", "out_mean", "out_std"):
            arr = np.asarray(getattr(self, name), np.float32).astype(np.float64)
            setattr(self, name, arr)
        if np.any(self.in_std <= 0) or np.any(self.out_std <= 0):
            raise ValidationError("standardization stds must be positive")


def identity_norm(channels_in, channels_out) -> ModelNorm:
    return ModelNorm(
        in_mean=np.zeros(len(channels_in)),
        in_std=np.ones(len(channels_in)),
        out_mean=np.zeros(len(channels_out)),
        out_std=np.ones(len(channels_out)),
    )


def norm_from_stats(stats: NormStats, channels_in, channels_out, *,
                    source: str = "training") -> ModelNorm:
    sin = stats.select(channels_in)
    sout = stats.select(channels_out)
    return ModelNorm(sin.mean, sin.std, sout.mean, sout.std, source=source)


@dataclass
class EmulatorModel:
    """One trained lag-tau mapping from input to output anomaly fields.

    kind "mlp": weights hold the dense network parameters; kind "linear": a
    single coefficient matrix under the key "coef", shaped (d_out, d_in).
    """

    kind: str
    lag: int
    n_nodes: int
    channels_in: list[str]
    channels_out: list[str]
    weights: dict[str, np.ndarray]
    norm: ModelNorm
    mesh_level: int | None = None
    config: dict = field(default_factory=dict)
    history: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("mlp", "linear"):
            raise ValidationError(f"unknown emulator kind {self.kind!r}")
        if self.lag < 0:
            raise ValidationError("lag must be >= 0")
        if self.mesh_level is not None and self.n_nodes != vertex_count(self.mesh_level):
            raise ValidationError(
                f"{self.n_nodes} nodes inconsistent with mesh level {self.mesh_level}"
            )
        for name, arr in self.weights.items():
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"weight block {name!r} contains non-finite values")
        if self.kind == "linear":
            coef = self.weights.get("coef")
            if coef is None or coef.shape != (self.d_out, self.d_in):
                raise ValidationError(
                    f"linear model needs a coef block of shape ({self.d_out}, {self.d_in})"
                )
        else:
            w0 = self.weights.get("layer0.weight")
            wo = self.weights.get("out.weight")
            if w0 is None or wo is None or w0.shape[0] != self.d_in or wo.shape[1] != self.d_out:
                raise ValidationError("mlp weight shapes inconsistent with declared sizes")

    @property
    def d_in(self) -> int:
        return self.n_nodes * len(self.channels_in)

    @property
    def d_out(self) -> int:
        return self.n_nodes * len(self.channels_out)


def quantize_weights(weights: dict) -> dict:
    """Snap float64 arrays onto the float32 grid (lossless wrt the file format)."""
    return {k: np.asarray(v, np.float64).astype(np.float32).astype(np.float64)
            for k, v in weights.items()}


def predict(model: EmulatorModel, x: np.ndarray) -> np.ndarray:
    """Map physical-unit input anomalies to physical-unit output anomalies.

    Accepts (N, C_in) or a batch (B, N, C_in); standardization and its
    inverse are applied inside using the stored per-channel stats.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != (model.n_nodes, len(model.channels_in)):
        raise ValidationError(
            f"input shape {x.shape[1:] if x.ndim == 3 else x.shape} does not match "
            f"(nodes, input channels) = ({model.n_nodes}, {len(model.channels_in)})"
        )
    if not np.all(np.isfinite(x)):
        raise ValidationError("prediction input contains non-finite values")
    z = (x - model.norm.in_mean) / model.norm.in_std
    flat = z.reshape(x.shape[0], -1)
    if model.kind == "linear":
        out = flat @ model.weights["coef"].T
    else:
        out = mlp_forward(model.weights, flat)
    out = out.reshape(x.shape[0], model.n_nodes, len(model.channels_out))
    out = out * model.norm.out_std + model.norm.out_mean
    return out[0] if single else out


_NORM_BLOCKS = ("norm.in_mean", "norm.in_std", "norm.out_mean", "norm.out_std")


def save_model(model: EmulatorModel, path: str) -> str:
    """Write the model file; weights must already sit on the float32 grid."""
    blocks: list[tuple[str, np.ndarray]] = [
        ("norm.in_mean", model.norm.in_mean),
        ("norm.in_std", model.norm.in_std),
        ("norm.out_mean", model.norm.out_mean),
        ("norm.out_std", model.norm.out_std),
    ]
    blocks += [(name, arr) for name, arr in model.weights.items()]
    header = {
        "kind": model.kind,
        "lag": model.lag,
        "n_nodes": model.n_nodes,
        "mesh_level": model.mesh_level,
        "channels_in": model.channels_in,
        "channels_out": model.channels_out,
        "norm_source": model.norm.source,
        "config": model.config,
        "history": model.history,
        "blocks": [{"name": n, "shape": list(a.shape)} for n, a in blocks],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for _, arr in blocks:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return path


def load_model(path: str) -> EmulatorModel:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read model file: {exc}") from exc
    if raw[:8] != MAGIC:
        raise FormatError(f"bad model magic {raw[:8]!r}, expected {MAGIC!r}")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    try:
        header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"model header is not valid JSON: {exc}") from exc
    offset = 16 + hlen
    arrays: dict[str, np.ndarray] = {}
    for blk in header["blocks"]:
        count = int(np.prod(blk["shape"])) if blk["shape"] else 1
        nbytes = 4 * count
        if offset + nbytes > len(raw):
            raise FormatError(f"model file truncated in block {blk['name']!r}")
        arr = np.frombuffer(raw[offset:offset + nbytes], dtype="<f4")
        arrays[blk["name"]] = arr.reshape(blk["shape"]).astype(np.float64)
        offset += nbytes
    if offset != len(raw):
        raise FormatError(f"{len(raw) - offset} trailing bytes after declared blocks")
    missing = [n for n in _NORM_BLOCKS if n not in arrays]
    if missing:
        raise FormatError(f"model file missing norm blocks {missing}")
    norm = ModelNorm(
        arrays["norm.in_mean"], arrays["norm.in_std"],
        arrays["norm.out_mean"], arrays["norm.out_std"],
        source=header.get("norm_source", "identity"),
    )
    weights = {n: a for n, a in arrays.items() if n not in _NORM_BLOCKS}
    return EmulatorModel(
        kind=header["kind"],
        lag=int(header["lag"]),
        n_nodes=int(header["n_nodes"]),
        channels_in=list(header["channels_in"]),
        channels_out=list(header["channels_out"]),
        weights=weights,
        norm=norm,
        mesh_level=header.get("mesh_level"),
        config=dict(header.get("config", {})),
        history=dict(header.get("history", {})),
    )
