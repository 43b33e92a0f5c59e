"""Regional forcing construction and end-to-end what-if scenario runs.

A scenario names one or more lat-lon region boxes (wrapping across 360/0 is
allowed), per-input-channel amplitudes in physical anomaly units, a sample
count, a lag set, and an integration rule.  Running it samples that many
internal fluctuations, adds the forcing to each sample, and averages the
emulator bank's perturbed-minus-unperturbed outputs; sampled fluctuations
are perturbed rather than feeding the bare forcing field, which would be far
outside anything the emulators saw in training.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .dataio import AnomalyDataset, channel_indices, sample_fluctuations
from .errors import FormatError, ValidationError
from .fdt import INTEGRATION_RULES, ResponseEstimate, emulator_response
from .grid import IcoMesh

DEFAULT_SAMPLES = 480


@dataclass(frozen=True)
class RegionBox:
    """Closed lat-lon box; lon_min > lon_max means the box wraps across 0."""

    name: str
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        if not -90.0 <= self.lat_min < self.lat_max <= 90.0:
            raise ValidationError(
                f"region {self.name!r}: need -90 <= lat_min < lat_max <= 90, "
                f"got [{self.lat_min}, {self.lat_max}]"
            )
        object.__setattr__(self, "lon_min", float(self.lon_min) % 360.0)
        object.__setattr__(self, "lon_max", float(self.lon_max) % 360.0)

    @property
    def wraps(self) -> bool:
        return self.lon_min > self.lon_max

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lat_min": self.lat_min,
            "lat_max": self.lat_max,
            "lon_min": self.lon_min,
            "lon_max": self.lon_max,
        }


# marine-cloud-brightening study regions, stored in [0, 360) convention
PRESET_REGIONS = {
    "NEP": RegionBox("NEP", 0.0, 30.0, 210.0, 250.0),    # 150W-110W
    "SEP": RegionBox("SEP", -30.0, 0.0, 250.0, 290.0),   # 110W-70W
    "SEA": RegionBox("SEA", -30.0, 0.0, 345.0, 25.0),    # 15W-25E, wraps
}


def region_mask(mesh: IcoMesh, box: RegionBox) -> np.ndarray:
    """Boolean per-vertex membership; boundaries inclusive."""
    lat_ok = (mesh.lat >= box.lat_min) & (mesh.lat <= box.lat_max)
    lon = mesh.lon % 360.0
    if box.wraps:
        lon_ok = (lon >= box.lon_min) | (lon <= box.lon_max)
    else:
        lon_ok = (lon >= box.lon_min) & (lon <= box.lon_max)
    return lat_ok & lon_ok


@dataclass
class ForcingField:
    """Per-node perturbation on each input channel; zero outside the region masks."""

    channels: list[str]
    values: np.ndarray          # (N, C_in) float64

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.channels):
            raise ValidationError("forcing values must be (nodes, input channels)")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("forcing contains non-finite values")


def build_forcing(mesh: IcoMesh, regions, amplitudes: dict,
                  channels_in) -> ForcingField:
    """Constant per-channel amplitude on the union of the region masks."""
    channels_in = list(channels_in)
    unknown = sorted(set(amplitudes) - set(channels_in))
    if unknown:
        raise ValidationError(
            f"amplitudes name unknown input channels {unknown}; "
            f"available: {channels_in}"
        )
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    for box in regions:
        mask |= region_mask(mesh, box)
    values = np.zeros((mesh.n_vertices, len(channels_in)))
    for name, amp in amplitudes.items():
        amp = float(amp)
        if not np.isfinite(amp):
            raise ValidationError(f"amplitude for channel {name!r} is not finite")
        values[mask, channels_in.index(name)] = amp
    return ForcingField(channels=channels_in, values=values)


@dataclass
class PerturbationScenario:
    """Serializable description of one what-if run."""

    regions: list[RegionBox]
    amplitudes: dict
    samples: int = DEFAULT_SAMPLES
    lags: list[int] = field(default_factory=list)
    rule: str = "sum"
    seed: int = 0

    def __post_init__(self):
        if not self.regions:
            raise ValidationError("scenario needs at least one region")
        if self.samples < 1:
            raise ValidationError("scenario sample count must be >= 1")
        if self.rule not in INTEGRATION_RULES:
            raise ValidationError(
                f"unknown integration rule {self.rule!r}; "
                f"expected one of {INTEGRATION_RULES}"
            )

    def to_dict(self) -> dict:
        return {
            "regions": [r.to_dict() for r in self.regions],
            "amplitudes": {k: float(v) for k, v in self.amplitudes.items()},
            "samples": self.samples,
            "lags": [int(l) for l in self.lags],
            "rule": self.rule,
            "seed": self.seed,
        }


def _parse_region(entry, errors: list) -> RegionBox | None:
    if isinstance(entry, str):
        if entry in PRESET_REGIONS:
            return PRESET_REGIONS[entry]
        errors.append(f"regions: unknown preset {entry!r} "
                      f"(have {sorted(PRESET_REGIONS)})")
        return None
    if isinstance(entry, dict):
        if "preset" in entry:
            return _parse_region(entry["preset"], errors)
        missing = [k for k in ("lat_min", "lat_max", "lon_min", "lon_max")
                   if k not in entry]
        if missing:
            errors.append(f"regions: box missing fields {missing}")
            return None
        try:
            return RegionBox(
                name=str(entry.get("name", "custom")),
                lat_min=float(entry["lat_min"]),
                lat_max=float(entry["lat_max"]),
                lon_min=float(entry["lon_min"]),
                lon_max=float(entry["lon_max"]),
            )
        except (TypeError, ValueError, ValidationError) as exc:
            errors.append(f"regions: {exc}")
            return None
    errors.append(f"regions: expected preset name or box object, got {type(entry).__name__}")
    return None


def parse_scenario(raw: dict) -> tuple[PerturbationScenario | None, list[str]]:
    """Validate a scenario JSON body; returns (scenario, list of field errors)."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        return None, ["scenario body must be a JSON object"]
    regions = []
    raw_regions = raw.get("regions")
    if not isinstance(raw_regions, list) or not raw_regions:
        errors.append("regions: must be a non-empty list")
    else:
        for entry in raw_regions:
            box = _parse_region(entry, errors)
            if box is not None:
                regions.append(box)
    amplitudes = raw.get("amplitudes")
    if not isinstance(amplitudes, dict):
        errors.append("amplitudes: must be an object of channel -> value")
        amplitudes = {}
    else:
        for k, v in amplitudes.items():
            if not isinstance(v, (int, float)) or not np.isfinite(v):
                errors.append(f"amplitudes: value for {k!r} must be a finite number")
    samples = raw.get("samples", DEFAULT_SAMPLES)
    if not isinstance(samples, int) or samples < 1:
        errors.append("samples: must be a positive integer")
    lags = raw.get("lags", [])
    if not isinstance(lags, list) or not all(
        isinstance(l, int) and l >= 0 for l in lags
    ):
        errors.append("lags: must be a list of non-negative integers")
    rule = raw.get("rule", "sum")
    if rule not in INTEGRATION_RULES:
        errors.append(f"rule: must be one of {list(INTEGRATION_RULES)}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        errors.append("seed: must be an integer")
    if errors:
        return None, errors
    try:
        scenario = PerturbationScenario(
            regions=regions,
            amplitudes=dict(amplitudes),
            samples=samples,
            lags=[int(l) for l in lags],
            rule=rule,
            seed=seed,
        )
    except ValidationError as exc:
        return None, [str(exc)]
    return scenario, []


def load_scenario(path: str) -> PerturbationScenario:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read scenario file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"scenario file is not valid JSON: {exc}") from exc
    scenario, errors = parse_scenario(raw)
    if errors:
        raise ValidationError("invalid scenario: " + "; ".join(errors))
    return scenario


def save_scenario(scenario: PerturbationScenario, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario.to_dict(), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    return path


def run_scenario(scenario: PerturbationScenario, bank, anoms: AnomalyDataset,
                 mesh: IcoMesh) -> ResponseEstimate:
    """Sample fluctuations, build the forcing, and run the emulator estimator."""
    if anoms.standardized:
        raise ValidationError(
            "scenarios run on physical-unit anomalies; standardization happens "
            "inside the emulators"
        )
    if anoms.mesh_level != bank.mesh_level:
        raise ValidationError(
            f"dataset mesh level {anoms.mesh_level} != bank level {bank.mesh_level}"
        )
    if mesh.n_vertices != bank.n_nodes:
        raise ValidationError("mesh does not match the bank's node count")
    names_in = [anoms.channels[i].name for i in channel_indices(anoms.channels, "input")]
    if names_in != bank.channels_in:
        raise ValidationError(
            f"dataset input channels {names_in} != bank inputs {bank.channels_in}"
        )
    lags = scenario.lags or bank.lags
    states, _slots = sample_fluctuations(anoms, scenario.samples, scenario.seed)
    forcing = build_forcing(mesh, scenario.regions, scenario.amplitudes,
                            bank.channels_in)
    est = emulator_response(
        bank, states, forcing, scenario.rule, lags=lags, seed=scenario.seed
    )
    est.diagnostics = dict(est.diagnostics)
    est.diagnostics["scenario"] = scenario.to_dict()
    return est
