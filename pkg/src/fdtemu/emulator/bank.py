"""Banks of per-lag emulators sharing one channel spec and normalization."""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..dataio import (
    AnomalyDataset,
    channel_indices,
    make_lag_pairs,
    split_members,
    standardize,
    take_members,
)
from ..errors import FormatError, ValidationError
from .mlp import MlpConfig, init_mlp
from .model import EmulatorModel, load_model, norm_from_stats, save_model
from .train import fit_linear, train


@dataclass
class LagModelBank:
    """Ordered lag -> model map; all models share shapes and norm stats."""

    models: dict[int, EmulatorModel]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.models:
            raise ValidationError("model bank is empty")
        self.models = {int(k): self.models[k] for k in sorted(self.models)}
        ref = next(iter(self.models.values()))
        for lag, m in self.models.items():
            if m.lag != lag:
                raise ValidationError(f"model stored under lag {lag} reports lag {m.lag}")
            same = (
                m.channels_in == ref.channels_in
                and m.channels_out == ref.channels_out
                and m.n_nodes == ref.n_nodes
                and np.array_equal(m.norm.in_mean, ref.norm.in_mean)
                and np.array_equal(m.norm.in_std, ref.norm.in_std)
                and np.array_equal(m.norm.out_mean, ref.norm.out_mean)
                and np.array_equal(m.norm.out_std, ref.norm.out_std)
            )
            if not same:
                raise ValidationError(
                    f"lag-{lag} model shapes/norm stats differ from the rest of the bank"
                )

    @property
    def lags(self) -> list[int]:
        return list(self.models)

    @property
    def channels_in(self) -> list[str]:
        return next(iter(self.models.values())).channels_in

    @property
    def channels_out(self) -> list[str]:
        return next(iter(self.models.values())).channels_out

    @property
    def n_nodes(self) -> int:
        return next(iter(self.models.values())).n_nodes

    @property
    def mesh_level(self):
        return next(iter(self.models.values())).mesh_level


def _train_one_lag(args):
    (kind, lag, z_train, z_val, config, ridge, n_nodes,
     names_in, names_out, mesh_level, norm) = args
    pairs = make_lag_pairs(z_train, lag)
    if kind == "linear":
        return lag, fit_linear(
            pairs, ridge, n_nodes=n_nodes, channels_in=names_in,
            channels_out=names_out, mesh_level=mesh_level, norm=norm,
        )
    model = init_mlp(
        config, lag, n_nodes, names_in, names_out,
        mesh_level=mesh_level, norm_stats=norm,
    )
    return lag, train(model, pairs, make_lag_pairs(z_val, lag))


def train_lag_bank(
    anoms: AnomalyDataset,
    lags,
    config: MlpConfig | None = None,
    *,
    kind: str = "mlp",
    ridge: float = 1e-6,
    val_fraction: float = 0.2,
    train_members=None,
    val_members=None,
    parallel: int = 1,
) -> LagModelBank:
    """Train one emulator per lag on standardized anomalies.

    Unstandardized input is split by members into train/validation groups
    (explicit lists, or a seeded split by val_fraction) and standardized from
    the training group; the resulting stats are stored in every model so
    prediction accepts physical-unit anomalies.  Per-lag seeds derive from
    (seed, lag), making results independent of training order, serial or
    parallel.
    """
    lags = [int(l) for l in lags]
    if not lags:
        raise ValidationError("lag list is empty")
    if len(set(lags)) != len(lags):
        raise ValidationError(f"lags must be distinct, got {lags}")
    for lag in lags:
        if not 0 <= lag < anoms.months:
            raise ValidationError(
                f"lag {lag} invalid for a {anoms.months}-month dataset"
            )
    if kind not in ("mlp", "linear"):
        raise ValidationError(f"unknown bank kind {kind!r}")
    config = config or MlpConfig()

    if (train_members is None) != (val_members is None):
        raise ValidationError("pass both train_members and val_members, or neither")
    if train_members is None:
        train_m, val_m = split_members(
            anoms.members, (1.0 - val_fraction, val_fraction), config.seed
        )
    else:
        train_m = [int(i) for i in train_members]
        val_m = [int(i) for i in val_members]
        if not train_m or not val_m:
            raise ValidationError("train and validation member lists must be non-empty")
        if set(train_m) & set(val_m):
            raise ValidationError("train and validation members overlap")
    if anoms.standardized:
        if anoms.norm_stats is None:
            raise ValidationError("standardized dataset lacks norm stats")
        z = anoms
    else:
        z = standardize(anoms, train_m)
    z_train = take_members(z, train_m)
    z_val = take_members(z, val_m)

    names_in = [z.channels[i].name for i in channel_indices(z.channels, "input")]
    names_out = [z.channels[i].name for i in channel_indices(z.channels, "output")]
    norm = norm_from_stats(z.norm_stats, names_in, names_out)
    jobs = [
        (kind, lag, z_train, z_val, config, ridge, anoms.n_nodes,
         names_in, names_out, anoms.mesh_level, norm)
        for lag in sorted(lags)
    ]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            trained = list(pool.map(_train_one_lag, jobs))
    else:
        trained = [_train_one_lag(job) for job in jobs]

    models = dict(trained)
    metadata = {
        "kind": kind,
        "seed": config.seed,
        "config": config.to_dict() if kind == "mlp" else {"ridge": float(ridge)},
        "train_members": [int(i) for i in train_m],
        "val_members": [int(i) for i in val_m],
    }
    return LagModelBank(models=models, metadata=metadata)


BANK_MANIFEST = "bank.json"


def save_bank(bank: LagModelBank, outdir: str) -> str:
    os.makedirs(outdir, exist_ok=True)
    files = {str(lag): f"lag_{lag:03d}.emu" for lag in bank.lags}
    manifest = {
        "lags": bank.lags,
        "files": files,
        "mesh_level": bank.mesh_level,
        "channels_in": bank.channels_in,
        "channels_out": bank.channels_out,
        "metadata": bank.metadata,
    }
    path = os.path.join(outdir, BANK_MANIFEST)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    for lag in bank.lags:
        save_model(bank.models[lag], os.path.join(outdir, files[str(lag)]))
    return path


def load_bank(path: str) -> LagModelBank:
    if os.path.isdir(path):
        path = os.path.join(path, BANK_MANIFEST)
    try:
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read bank manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"bank manifest is not valid JSON: {exc}") from exc
    dirname = os.path.dirname(path)
    models = {}
    for lag in manifest["lags"]:
        fname = manifest["files"][str(lag)]
        models[int(lag)] = load_model(os.path.join(dirname, fname))
    return LagModelBank(models=models, metadata=dict(manifest.get("metadata", {})))
