"""Dataset containers, preprocessing, lagged pairs, splits, and fluctuation sampling.

On disk a dataset is a JSON manifest plus one raw little-endian float32 file
per ensemble member, laid out [time][node][channel] row-major with no header.
Climatology and normalization stats use the same manifest-plus-payload style.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import FormatError, ValidationError
from .grid import vertex_count

CHANNEL_ROLES = ("input", "output", "static")


@dataclass(frozen=True)
class ChannelSpec:
    name: str
    role: str
    units: str = ""

    def __post_init__(self):
        if self.role not in CHANNEL_ROLES:
            raise ValidationError(
                f"unknown channel role {self.role!r} for channel {self.name!r}; "
                f"expected one of {CHANNEL_ROLES}"
            )


def validate_channels(channels, *, require_io: bool = True) -> None:
    names = [c.name for c in channels]
    if len(set(names)) != len(names):
        raise ValidationError(f"channel names must be unique, got {names}")
    if require_io:
        roles = {c.role for c in channels}
        if "input" not in roles or "output" not in roles:
            raise ValidationError(
                "dataset needs at least one input and one output channel"
            )


def channel_indices(channels, role: str) -> list[int]:
    return [i for i, c in enumerate(channels) if c.role == role]


def state_indices(channels) -> list[int]:
    """Indices of dynamic (input + output) channels, in channel order."""
    return [i for i, c in enumerate(channels) if c.role in ("input", "output")]


def calendar_months(start_month: int, n_months: int) -> np.ndarray:
    """Calendar month (1..12) of each time index, cycling from start_month."""
    return (start_month - 1 + np.arange(n_months)) % 12 + 1


@dataclass
class EnsembleDataset:
    """Ensemble of monthly fields on an icosahedral mesh: values (M, T, N, C) float32."""

    mesh_level: int
    start_month: int
    channels: list[ChannelSpec]
    values: np.ndarray
    member_ids: list[int] | None = None

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 4:
            raise ValidationError(
                f"values must be 4-D (member, time, node, channel), got {self.values.ndim}-D"
            )
        if not 1 <= self.start_month <= 12:
            raise ValidationError(f"start_month must be in 1..12, got {self.start_month}")
        validate_channels(self.channels, require_io=False)
        m, t, n, c = self.values.shape
        if c != len(self.channels):
            raise ValidationError(
                f"values have {c} channels but {len(self.channels)} channel specs given"
            )
        expected_n = vertex_count(self.mesh_level)
        if n != expected_n:
            raise ValidationError(
                f"values have {n} nodes but mesh level {self.mesh_level} "
                f"implies {expected_n}"
            )
        bad = np.argwhere(~np.isfinite(self.values))
        if bad.size:
            bm, bt, bn, bc = bad[0]
            raise ValidationError(
                f"non-finite value at member {bm}, time {bt} "
                f"(node {bn}, channel {self.channels[bc].name!r})"
            )
        if self.member_ids is None:
            self.member_ids = list(range(m))
        elif len(self.member_ids) != m:
            raise ValidationError("member_ids length does not match member count")

    @property
    def members(self) -> int:
        return self.values.shape[0]

    @property
    def months(self) -> int:
        return self.values.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.values.shape[2]

    @property
    def n_channels(self) -> int:
        return self.values.shape[3]

    @property
    def channel_names(self) -> list[str]:
        return [c.name for c in self.channels]

    def channel_index(self, name: str) -> int:
        for i, c in enumerate(self.channels):
            if c.name == name:
                return i
        raise ValidationError(f"unknown channel {name!r}; have {self.channel_names}")


@dataclass
class Climatology:
    """Per calendar-month ensemble-mean state: values (12, N, C) float32.

    Calendar months without any sample (datasets shorter than a year) are
    filled with zero; `observed` records which slots were estimated.
    """

    mesh_level: int
    channels: list[ChannelSpec]
    values: np.ndarray
    observed: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.shape[0] != 12:
            raise ValidationError("climatology must have exactly 12 calendar slots")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("climatology contains non-finite values")
        if self.observed is None:
            self.observed = np.ones(12, dtype=bool)
        else:
            self.observed = np.asarray(self.observed, dtype=bool)


@dataclass(frozen=True)
class NormStats:
    """Per-channel training-split mean/std, snapped to the float32 grid."""

    channels: list[str]
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "mean", np.asarray(self.mean, np.float32).astype(np.float64)
        )
        object.__setattr__(
            self, "std", np.asarray(self.std, np.float32).astype(np.float64)
        )
        if self.mean.shape != (len(self.channels),) or self.std.shape != self.mean.shape:
            raise ValidationError("norm stats shape mismatch with channel list")
        if np.any(self.std <= 0):
            bad = [self.channels[i] for i in np.nonzero(self.std <= 0)[0]]
            raise ValidationError(f"non-positive standard deviation for channels {bad}")

    def select(self, names) -> "NormStats":
        idx = [self.channels.index(n) for n in names]
        return NormStats(list(names), self.mean[idx], self.std[idx])


@dataclass
class AnomalyDataset(EnsembleDataset):
    """Deviations from climatology; optionally z-scored per channel."""

    climatology: Climatology | None = None
    norm_stats: NormStats | None = None
    standardized: bool = False


@dataclass(frozen=True)
class LagPairs:
    """Input states at t paired with output states at t + lag, within members."""

    lag: int
    inputs: np.ndarray        # (S, N, C_in)
    targets: np.ndarray       # (S, N, C_out)
    provenance: np.ndarray    # (S, 2) of (member, input time)

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]


# ---------------------------------------------------------------------------
# preprocessing

def compute_climatology(data: EnsembleDataset) -> Climatology:
    """Mean over all members and timesteps of each calendar month."""
    months = calendar_months(data.start_month, data.months)
    out = np.zeros((12,) + data.values.shape[2:], dtype=np.float64)
    observed = np.zeros(12, dtype=bool)
    for m in range(1, 13):
        sel = months == m
        if sel.any():
            out[m - 1] = data.values[:, sel].mean(axis=(0, 1), dtype=np.float64)
            observed[m - 1] = True
    return Climatology(
        mesh_level=data.mesh_level,
        channels=list(data.channels),
        values=out.astype(np.float32),
        observed=observed,
    )


def _check_alignment(data: EnsembleDataset, clim: Climatology) -> None:
    if clim.mesh_level != data.mesh_level:
        raise ValidationError(
            f"climatology mesh level {clim.mesh_level} != dataset level {data.mesh_level}"
        )
    if [c.name for c in clim.channels] != data.channel_names:
        raise ValidationError("climatology channels do not match dataset channels")
    months = calendar_months(data.start_month, data.months)
    missing = sorted(set(months.tolist()) - set(np.nonzero(clim.observed)[0] + 1))
    if missing:
        raise ValidationError(
            f"climatology has no estimate for calendar months {missing} "
            "present in the dataset"
        )


def deseasonalize(data: EnsembleDataset, clim: Climatology) -> AnomalyDataset:
    """Subtract the matching calendar-month climatology from every timestep."""
    _check_alignment(data, clim)
    months = calendar_months(data.start_month, data.months)
    anoms = data.values.astype(np.float64) - clim.values.astype(np.float64)[months - 1]
    return AnomalyDataset(
        mesh_level=data.mesh_level,
        start_month=data.start_month,
        channels=list(data.channels),
        values=anoms.astype(np.float32),
        member_ids=list(data.member_ids),
        climatology=clim,
    )


def reseasonalize(anoms: AnomalyDataset) -> EnsembleDataset:
    """Add the stored climatology back, reconstructing the source field."""
    if anoms.climatology is None:
        raise ValidationError("anomaly dataset carries no climatology reference")
    if anoms.standardized:
        raise ValidationError("destandardize before adding climatology back")
    months = calendar_months(anoms.start_month, anoms.months)
    clim = anoms.climatology.values.astype(np.float64)[months - 1]
    values = (anoms.values.astype(np.float64) + clim).astype(np.float32)
    return EnsembleDataset(
        mesh_level=anoms.mesh_level,
        start_month=anoms.start_month,
        channels=list(anoms.channels),
        values=values,
        member_ids=list(anoms.member_ids),
    )


def compute_norm_stats(anoms: AnomalyDataset, training_members) -> NormStats:
    """Per-channel mean/std over the training members' full (time, node) extent."""
    training_members = list(training_members)
    if not training_members:
        raise ValidationError("training split is empty")
    sub = anoms.values[training_members].astype(np.float64)
    mean = sub.mean(axis=(0, 1, 2))
    std = sub.std(axis=(0, 1, 2))
    zero = np.nonzero(std == 0)[0]
    if zero.size:
        names = [anoms.channels[i].name for i in zero]
        raise ValidationError(
            f"zero-variance channels {names} cannot be standardized"
        )
    return NormStats([c.name for c in anoms.channels], mean, std)


def standardize(anoms: AnomalyDataset, training_members) -> AnomalyDataset:
    """Z-score every channel using stats from the training members only."""
    if anoms.standardized:
        raise ValidationError("dataset is already standardized")
    stats = compute_norm_stats(anoms, training_members)
    z = (anoms.values.astype(np.float64) - stats.mean) / stats.std
    return AnomalyDataset(
        mesh_level=anoms.mesh_level,
        start_month=anoms.start_month,
        channels=list(anoms.channels),
        values=z.astype(np.float32),
        member_ids=list(anoms.member_ids),
        climatology=anoms.climatology,
        norm_stats=stats,
        standardized=True,
    )


def destandardize(anoms: AnomalyDataset) -> AnomalyDataset:
    """Invert `standardize` using the stored stats."""
    if not anoms.standardized or anoms.norm_stats is None:
        raise ValidationError("dataset is not standardized")
    stats = anoms.norm_stats
    values = anoms.values.astype(np.float64) * stats.std + stats.mean
    return AnomalyDataset(
        mesh_level=anoms.mesh_level,
        start_month=anoms.start_month,
        channels=list(anoms.channels),
        values=values.astype(np.float32),
        member_ids=list(anoms.member_ids),
        climatology=anoms.climatology,
        norm_stats=stats,
        standardized=False,
    )


def make_lag_pairs(anoms: AnomalyDataset, lag: int) -> LagPairs:
    """Pair input channels at t with output channels at t + lag, per member."""
    if not 0 <= lag < anoms.months:
        raise ValidationError(
            f"lag must satisfy 0 <= lag < {anoms.months} months, got {lag}"
        )
    validate_channels(anoms.channels)
    ci = channel_indices(anoms.channels, "input")
    co = channel_indices(anoms.channels, "output")
    span = anoms.months - lag
    inputs = anoms.values[:, :span][..., ci].reshape(-1, anoms.n_nodes, len(ci))
    targets = anoms.values[:, lag:][..., co].reshape(-1, anoms.n_nodes, len(co))
    members = np.repeat(np.arange(anoms.members), span)
    times = np.tile(np.arange(span), anoms.members)
    provenance = np.column_stack([members, times])
    return LagPairs(lag=int(lag), inputs=inputs, targets=targets, provenance=provenance)


def split_members(n_members: int, fractions, seed: int) -> list[list[int]]:
    """Deterministically partition member indices by the given fractions.

    Largest-remainder allocation after guaranteeing one member per split.
    """
    fractions = [float(f) for f in fractions]
    if any(f <= 0 for f in fractions):
        raise ValidationError(f"split fractions must be positive, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"split fractions must sum to 1, got {sum(fractions)}")
    k = len(fractions)
    if n_members < k:
        raise ValidationError(
            f"cannot split {n_members} members into {k} non-empty groups"
        )
    ideal = [f * n_members for f in fractions]
    counts = [max(1, int(x)) for x in ideal]
    while sum(counts) > n_members:
        counts[int(np.argmax(counts))] -= 1
    remainders = [x - c for x, c in zip(ideal, counts)]
    while sum(counts) < n_members:
        j = int(np.argmax(remainders))
        counts[j] += 1
        remainders[j] -= 1.0
    order = np.random.default_rng(seed).permutation(n_members)
    groups, pos = [], 0
    for c in counts:
        groups.append(sorted(int(i) for i in order[pos:pos + c]))
        pos += c
    return groups


def take_members(anoms: AnomalyDataset, members) -> AnomalyDataset:
    """View of the dataset restricted to the given member indices."""
    members = list(members)
    return replace(
        anoms,
        values=anoms.values[members],
        member_ids=[anoms.member_ids[i] for i in members],
    )


def split(anoms: AnomalyDataset, fractions, seed: int):
    """Partition by whole members into len(fractions) datasets (no time leakage)."""
    groups = split_members(anoms.members, fractions, seed)
    return tuple(take_members(anoms, g) for g in groups)


def sample_fluctuations(anoms: AnomalyDataset, n: int, seed: int):
    """Draw n input-channel states uniformly without replacement over (member, time).

    Returns (states, slots): states (n, N, C_in) float32 in the dataset's
    units, slots (n, 2) of (member, time) provenance in draw order.
    """
    total = anoms.members * anoms.months
    if not 1 <= n <= total:
        raise ValidationError(
            f"cannot draw {n} fluctuation samples from {total} available slots"
        )
    ci = channel_indices(anoms.channels, "input")
    if not ci:
        raise ValidationError("dataset has no input channels to sample")
    rng = np.random.default_rng(seed)
    flat = rng.choice(total, size=n, replace=False)
    members = flat // anoms.months
    times = flat % anoms.months
    states = anoms.values[members, times][..., ci]
    return states, np.column_stack([members, times])


# ---------------------------------------------------------------------------
# manifest + payload persistence

DATASET_MANIFEST = "dataset.json"


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def _read_json(path: str, what: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read {what}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{what} is not valid JSON: {exc}") from exc


def _channels_to_json(channels):
    return [{"name": c.name, "role": c.role, "units": c.units} for c in channels]


def _channels_from_json(raw, what: str):
    try:
        return [ChannelSpec(c["name"], c["role"], c.get("units", "")) for c in raw]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{what} has malformed channel entries: {exc}") from exc


def save_dataset(data: EnsembleDataset, outdir: str, *, name: str = DATASET_MANIFEST) -> str:
    """Write manifest + one float32 payload file per member; returns manifest path."""
    os.makedirs(outdir, exist_ok=True)
    payload_names = [f"member_{i:03d}.f32" for i in range(data.members)]
    manifest = {
        "mesh_level": data.mesh_level,
        "start_month": data.start_month,
        "months": data.months,
        "members": data.members,
        "channels": _channels_to_json(data.channels),
        "payload": payload_names,
    }
    if isinstance(data, AnomalyDataset):
        manifest["kind"] = "anomaly"
        manifest["standardized"] = data.standardized
        if data.climatology is not None:
            manifest["climatology"] = "climatology.json"
            save_climatology(data.climatology, outdir)
        if data.norm_stats is not None:
            manifest["norm_stats"] = "norm_stats.json"
            save_norm_stats(data.norm_stats, outdir)
    path = os.path.join(outdir, name)
    _write_json(path, manifest)
    for i, fname in enumerate(payload_names):
        data.values[i].astype("<f4").tofile(os.path.join(outdir, fname))
    return path


def _load_payload(dirname: str, manifest, what: str) -> np.ndarray:
    months = int(manifest["months"])
    members = int(manifest["members"])
    n_nodes = vertex_count(int(manifest["mesh_level"]))
    n_channels = len(manifest["channels"])
    payload = manifest["payload"]
    if len(payload) != members:
        raise FormatError(
            f"{what} lists {len(payload)} payload files for {members} members"
        )
    per_member = months * n_nodes * n_channels
    values = np.empty((members, months, n_nodes, n_channels), dtype=np.float32)
    for i, fname in enumerate(payload):
        fpath = os.path.join(dirname, fname)
        try:
            raw = np.fromfile(fpath, dtype="<f4")
        except OSError as exc:
            raise FormatError(f"cannot read payload {fname!r}: {exc}") from exc
        if raw.size != per_member:
            raise FormatError(
                f"payload {fname!r} holds {raw.size} floats, expected {per_member} "
                f"([time={months}][node={n_nodes}][channel={n_channels}])"
            )
        values[i] = raw.reshape(months, n_nodes, n_channels)
    return values


def load_dataset(manifest_path: str) -> EnsembleDataset:
    """Load and validate a dataset manifest plus payloads."""
    if os.path.isdir(manifest_path):
        manifest_path = os.path.join(manifest_path, DATASET_MANIFEST)
    manifest = _read_json(manifest_path, "dataset manifest")
    for key in ("mesh_level", "start_month", "months", "members", "channels", "payload"):
        if key not in manifest:
            raise FormatError(f"dataset manifest missing key {key!r}")
    dirname = os.path.dirname(manifest_path)
    channels = _channels_from_json(manifest["channels"], "dataset manifest")
    values = _load_payload(dirname, manifest, "dataset manifest")
    try:
        if manifest.get("kind") == "anomaly":
            clim = None
            if "climatology" in manifest:
                clim = load_climatology(os.path.join(dirname, manifest["climatology"]))
            stats = None
            if "norm_stats" in manifest:
                stats = load_norm_stats(os.path.join(dirname, manifest["norm_stats"]))
            return AnomalyDataset(
                mesh_level=int(manifest["mesh_level"]),
                start_month=int(manifest["start_month"]),
                channels=channels,
                values=values,
                climatology=clim,
                norm_stats=stats,
                standardized=bool(manifest.get("standardized", False)),
            )
        return EnsembleDataset(
            mesh_level=int(manifest["mesh_level"]),
            start_month=int(manifest["start_month"]),
            channels=channels,
            values=values,
        )
    except ValidationError:
        raise


def save_climatology(clim: Climatology, outdir: str, *, name: str = "climatology.json") -> str:
    os.makedirs(outdir, exist_ok=True)
    payload = name.replace(".json", ".f32")
    manifest = {
        "mesh_level": clim.mesh_level,
        "channels": _channels_to_json(clim.channels),
        "observed_months": [int(m + 1) for m in np.nonzero(clim.observed)[0]],
        "payload": payload,
    }
    path = os.path.join(outdir, name)
    _write_json(path, manifest)
    clim.values.astype("<f4").tofile(os.path.join(outdir, payload))
    return path


def load_climatology(path: str) -> Climatology:
    manifest = _read_json(path, "climatology manifest")
    dirname = os.path.dirname(path)
    channels = _channels_from_json(manifest["channels"], "climatology manifest")
    n_nodes = vertex_count(int(manifest["mesh_level"]))
    raw = np.fromfile(os.path.join(dirname, manifest["payload"]), dtype="<f4")
    expected = 12 * n_nodes * len(channels)
    if raw.size != expected:
        raise FormatError(
            f"climatology payload holds {raw.size} floats, expected {expected}"
        )
    observed = np.zeros(12, dtype=bool)
    observed[[m - 1 for m in manifest["observed_months"]]] = True
    return Climatology(
        mesh_level=int(manifest["mesh_level"]),
        channels=channels,
        values=raw.reshape(12, n_nodes, len(channels)),
        observed=observed,
    )


def save_norm_stats(stats: NormStats, outdir: str, *, name: str = "norm_stats.json") -> str:
    os.makedirs(outdir, exist_ok=True)
    payload = name.replace(".json", ".f32")
    manifest = {"channels": list(stats.channels), "payload": payload}
    path = os.path.join(outdir, name)
    _write_json(path, manifest)
    np.concatenate([stats.mean, stats.std]).astype("<f4").tofile(
        os.path.join(outdir, payload)
    )
    return path


def load_norm_stats(path: str) -> NormStats:
    manifest = _read_json(path, "norm stats manifest")
    dirname = os.path.dirname(path)
    channels = list(manifest["channels"])
    raw = np.fromfile(os.path.join(dirname, manifest["payload"]), dtype="<f4")
    if raw.size != 2 * len(channels):
        raise FormatError(
            f"norm stats payload holds {raw.size} floats, expected {2 * len(channels)}"
        )
    return NormStats(channels, raw[: len(channels)], raw[len(channels):])
