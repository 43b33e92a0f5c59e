"""Forced-response estimation from fluctuations.

Two estimators:

* classical: accumulate C(tau) C(0)^{-1} over lags and apply it to the
  embedded forcing, with C(0) inverted through an eigendecomposition that
  drops eigenvalues below a relative floor;
* emulator: average perturbed-minus-unperturbed emulator outputs over sampled
  fluctuations, one contribution per lag, then integrate over lags.

Lag integration targets the dense sum over integer lags.  Sparse lag sets are
interpolated onto every integer lag first, either piecewise-linearly or with
overlapping-quadratic ("Simpson-like") fits, and then summed.
"""

from __future__ import annotations

import json
import os
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataio import AnomalyDataset, channel_indices, state_indices
from .errors import FormatError, ValidationError

INTEGRATION_RULES = ("sum", "interp-linear", "interp-quadratic")


@dataclass
class LagCovariance:
    """Sample covariance C(tau)[i, j] = E[z_i(t + tau) z_j(t)] over D state entries."""

    lag: int
    matrix: np.ndarray
    samples: int

    def __post_init__(self):
        if self.lag == 0:
            asym = np.max(np.abs(self.matrix - self.matrix.T))
            scale = max(np.max(np.abs(self.matrix)), 1.0)
            if asym > 1e-10 * scale:
                raise ValidationError(f"C(0) asymmetry {asym:.2e} exceeds tolerance")


@dataclass
class ClassicalFdtOperator:
    """Accumulated response operator sum_tau C(tau) C(0)^{-1} with conditioning info."""

    lags: list[int]
    operator: np.ndarray
    eigenvalue_floor: float
    smallest_kept: float
    largest: float
    n_kept: int


def _state_matrix(anoms: AnomalyDataset):
    """Dynamic-channel values as (members, months, D) float64, defensively re-centered."""
    st = state_indices(anoms.channels)
    if not st:
        raise ValidationError("dataset has no dynamic (input/output) channels")
    z = anoms.values[..., st].astype(np.float64)
    z = z.reshape(anoms.members, anoms.months, -1)
    return z - z.mean(axis=(0, 1)), [anoms.channels[i].name for i in st]


def estimate_covariance(anoms: AnomalyDataset, lag: int) -> LagCovariance:
    """C(tau) from all valid within-member pairs; warns when samples < D."""
    if not 0 <= lag < anoms.months:
        raise ValidationError(
            f"lag must satisfy 0 <= lag < {anoms.months}, got {lag}"
        )
    z, _ = _state_matrix(anoms)
    return _covariance_from_state(z, lag)


def _covariance_from_state(z: np.ndarray, lag: int) -> LagCovariance:
    m, t, d = z.shape
    samples = m * (t - lag)
    if samples < d:
        warnings.warn(
            f"covariance at lag {lag} uses {samples} samples for dimension {d}; "
            "estimates will be noisy",
            stacklevel=2,
        )
    acc = np.zeros((d, d))
    for i in range(m):
        acc += z[i, lag:].T @ z[i, : t - lag]
    return LagCovariance(lag=int(lag), matrix=acc / samples, samples=samples)


def _regularized_inverse(c0: np.ndarray, floor: float):
    sym = 0.5 * (c0 + c0.T)
    evals, evecs = np.linalg.eigh(sym)
    cutoff = floor * evals[-1]
    keep = evals >= cutoff
    if not keep.any() or evals[-1] <= 0:
        raise ValidationError(
            "all C(0) eigenvalues fall below the regularization floor; "
            "the fluctuation data are degenerate"
        )
    inv = (evecs[:, keep] / evals[keep]) @ evecs[:, keep].T
    diag = {
        "eigenvalue_floor": float(floor),
        "smallest_kept_eigenvalue": float(evals[keep][0]),
        "largest_eigenvalue": float(evals[-1]),
        "eigenvalues_kept": int(keep.sum()),
        "eigenvalues_total": int(evals.size),
    }
    return inv, diag


def _normalize_lags(lags) -> list[int]:
    if isinstance(lags, (int, np.integer)):
        if lags < 0:
            raise ValidationError("maximum lag must be >= 0")
        return list(range(int(lags) + 1))
    out = [int(l) for l in lags]
    if not out:
        raise ValidationError("lag list is empty")
    if sorted(set(out)) != out:
        raise ValidationError(f"lags must be sorted and distinct, got {out}")
    if any(l < 0 for l in out):
        raise ValidationError("lags must be non-negative")
    return out


def _forcing_values(forcing, n_nodes: int, channels_in: list[str]) -> np.ndarray:
    values = getattr(forcing, "values", forcing)
    names = getattr(forcing, "channels", None)
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (n_nodes, len(channels_in)):
        raise ValidationError(
            f"forcing shape {values.shape} != ({n_nodes}, {len(channels_in)})"
        )
    if names is not None and list(names) != list(channels_in):
        raise ValidationError(
            f"forcing channels {list(names)} do not match input channels {channels_in}"
        )
    if not np.all(np.isfinite(values)):
        raise ValidationError("forcing contains non-finite values")
    return values


@dataclass
class ResponseEstimate:
    """Lag-integrated mean response with per-lag contributions.

    `total` always equals integrate_lags(contributions, lags, rule): the
    stored rule re-integrates the stored contributions to the stored total
    exactly.  `timing_seconds` and `mean_perturbed_input` are in-memory
    conveniences and are not persisted (outputs stay bit-reproducible).
    """

    kind: str
    lags: list[int]
    rule: str
    channels: list[str]
    total: np.ndarray             # (N, C)
    contributions: np.ndarray     # (L, N, C)
    n_samples: int
    mesh_level: int | None = None
    seed: int | None = None
    diagnostics: dict = field(default_factory=dict)
    timing_seconds: float | None = None
    mean_perturbed_input: np.ndarray | None = None

    def __post_init__(self):
        self.total = np.asarray(self.total, dtype=np.float64)
        self.contributions = np.asarray(self.contributions, dtype=np.float64)
        if self.contributions.shape[0] != len(self.lags):
            raise ValidationError("one contribution field per lag is required")
        if self.contributions.shape[1:] != self.total.shape:
            raise ValidationError("contribution and total field shapes differ")
        if self.total.shape[1] != len(self.channels):
            raise ValidationError("total field channel count mismatch")

    def channel_field(self, name: str) -> np.ndarray:
        return self.total[:, self.channels.index(name)]

    def project(self, names) -> np.ndarray:
        idx = [self.channels.index(n) for n in names]
        return self.total[:, idx]


def classical_operator(anoms: AnomalyDataset, lags,
                       eigenvalue_floor: float = 1e-6) -> ClassicalFdtOperator:
    """Materialize sum_tau C(tau) C(0)^{-1} as a D x D matrix."""
    lag_list = _normalize_lags(lags)
    z, _ = _state_matrix(anoms)
    c0inv, diag = _regularized_inverse(_covariance_from_state(z, 0).matrix,
                                       eigenvalue_floor)
    d = z.shape[2]
    op = np.zeros((d, d))
    for lag in lag_list:
        op += _covariance_from_state(z, lag).matrix @ c0inv
    return ClassicalFdtOperator(
        lags=lag_list,
        operator=op,
        eigenvalue_floor=eigenvalue_floor,
        smallest_kept=diag["smallest_kept_eigenvalue"],
        largest=diag["largest_eigenvalue"],
        n_kept=diag["eigenvalues_kept"],
    )


def classical_response(anoms: AnomalyDataset, lags, forcing,
                       eigenvalue_floor: float = 1e-6) -> ResponseEstimate:
    """Covariance-based response sum_tau C(tau) C(0)^{-1} df over a dense lag range.

    The forcing lives on input channels and is embedded into the state vector
    with zeros on output channels; the estimate reports the response of every
    dynamic channel (use .project to compare output channels only).
    """
    t0 = time.perf_counter()
    lag_list = _normalize_lags(lags)
    if lag_list != list(range(lag_list[0], lag_list[-1] + 1)):
        raise ValidationError(
            "classical_response accumulates a literal sum and needs a dense "
            f"integer lag range, got {lag_list}"
        )
    if max(lag_list) >= anoms.months:
        raise ValidationError(
            f"maximum lag {max(lag_list)} is not below the series length {anoms.months}"
        )
    z, state_names = _state_matrix(anoms)
    n = anoms.n_nodes
    c_state = len(state_names)
    in_names = [anoms.channels[i].name for i in channel_indices(anoms.channels, "input")]
    values = _forcing_values(forcing, n, in_names)

    f = np.zeros((n, c_state))
    in_pos = [state_names.index(nm) for nm in in_names]
    f[:, in_pos] = values
    f_vec = f.ravel()

    c0inv, diag = _regularized_inverse(_covariance_from_state(z, 0).matrix,
                                       eigenvalue_floor)
    w = c0inv @ f_vec
    contribs = np.empty((len(lag_list), n, c_state))
    total_pairs = 0
    for i, lag in enumerate(lag_list):
        cov = _covariance_from_state(z, lag)
        contribs[i] = (cov.matrix @ w).reshape(n, c_state)
        total_pairs = max(total_pairs, cov.samples)
    total = integrate_lags(contribs, lag_list, "sum")
    return ResponseEstimate(
        kind="classical",
        lags=lag_list,
        rule="sum",
        channels=state_names,
        total=total,
        contributions=contribs,
        n_samples=total_pairs,
        mesh_level=anoms.mesh_level,
        diagnostics=diag,
        timing_seconds=time.perf_counter() - t0,
    )


def emulator_response(bank, fluctuations, forcing, rule: str = "sum",
                      *, lags=None, seed=None) -> ResponseEstimate:
    """Mean perturbed-minus-unperturbed emulator output, integrated over lags.

    contribution_tau = (1/n) sum_i [A_tau(x_i + df) - A_tau(x_i)] with the
    constant forcing df added to every sampled fluctuation x_i.
    """
    from .emulator.model import predict

    t0 = time.perf_counter()
    x = np.asarray(fluctuations, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] == 0:
        raise ValidationError(
            "fluctuations must be a non-empty (samples, nodes, channels) array"
        )
    lag_list = sorted(int(l) for l in (bank.lags if lags is None else lags))
    if not lag_list:
        raise ValidationError("lag list is empty")
    missing = [l for l in lag_list if l not in bank.models]
    if missing:
        raise ValidationError(f"bank has no models for lags {missing}")
    if rule not in INTEGRATION_RULES:
        raise ValidationError(
            f"unknown integration rule {rule!r}; expected one of {INTEGRATION_RULES}"
        )
    values = _forcing_values(forcing, bank.n_nodes, bank.channels_in)

    perturbed = x + values
    contribs = np.empty((len(lag_list), bank.n_nodes, len(bank.channels_out)))
    for i, lag in enumerate(lag_list):
        model = bank.models[lag]
        delta = predict(model, perturbed) - predict(model, x)
        contribs[i] = delta.mean(axis=0)
    total = integrate_lags(contribs, lag_list, rule)
    return ResponseEstimate(
        kind="emulator",
        lags=lag_list,
        rule=rule,
        channels=list(bank.channels_out),
        total=total,
        contributions=contribs,
        n_samples=x.shape[0],
        mesh_level=bank.mesh_level,
        seed=seed,
        timing_seconds=time.perf_counter() - t0,
        mean_perturbed_input=perturbed.mean(axis=0),
    )


# ---------------------------------------------------------------------------
# lag integration

def _linear_weights(lags: np.ndarray) -> np.ndarray:
    m = lags.size
    w = np.zeros(m)
    if m == 1:
        w[0] = 1.0
        return w
    ts = np.arange(int(lags[0]), int(lags[-1]) + 1)
    seg = np.clip(np.searchsorted(lags, ts, side="right") - 1, 0, m - 2)
    for t, j in zip(ts, seg):
        alpha = (t - lags[j]) / (lags[j + 1] - lags[j])
        w[j] += 1.0 - alpha
        w[j + 1] += alpha
    return w


def _quadratic_weights(lags: np.ndarray) -> np.ndarray:
    m = lags.size
    if m < 3:
        return _linear_weights(lags)
    w = np.zeros(m)
    ts = np.arange(int(lags[0]), int(lags[-1]) + 1)
    seg = np.clip(np.searchsorted(lags, ts, side="right") - 1, 0, m - 2)
    for t, j in zip(ts, seg):
        # interval j is covered by the lag triples starting at j-1 and j
        triples = [k for k in (j - 1, j) if 0 <= k <= m - 3]
        share = 1.0 / len(triples)
        for k in triples:
            x0, x1, x2 = lags[k], lags[k + 1], lags[k + 2]
            w[k] += share * (t - x1) * (t - x2) / ((x0 - x1) * (x0 - x2))
            w[k + 1] += share * (t - x0) * (t - x2) / ((x1 - x0) * (x1 - x2))
            w[k + 2] += share * (t - x0) * (t - x1) / ((x2 - x0) * (x2 - x1))
    return w


def integration_weights(lags, rule: str) -> np.ndarray:
    """Per-lag weights w such that the integrated value is sum_j w_j r(lag_j)."""
    lag_list = _normalize_lags(lags)
    arr = np.array(lag_list, dtype=np.float64)
    if rule == "sum":
        if lag_list != list(range(lag_list[0], lag_list[-1] + 1)):
            raise ValidationError(
                "sum rule requires the full integer lag range; "
                f"{lag_list} has gaps; use an interpolating rule"
            )
        return np.ones(arr.size)
    if rule == "interp-linear":
        return _linear_weights(arr)
    if rule == "interp-quadratic":
        return _quadratic_weights(arr)
    raise ValidationError(
        f"unknown integration rule {rule!r}; expected one of {INTEGRATION_RULES}"
    )


def integrate_lags(contributions, lags, rule: str) -> np.ndarray:
    """Integrate per-lag fields into the dense-sum estimate over integer lags.

    `contributions` is either a dict {lag: field} or an array stacked in lag
    order.  All rules reduce to fixed per-lag weights, so the result is exactly
    reproducible from the stored contributions.
    """
    lag_list = _normalize_lags(lags)
    if isinstance(contributions, dict):
        missing = [l for l in lag_list if l not in contributions]
        if missing:
            raise ValidationError(f"contributions missing for lags {missing}")
        stack = np.stack([np.asarray(contributions[l], np.float64) for l in lag_list])
    else:
        stack = np.asarray(contributions, dtype=np.float64)
        if stack.shape[0] != len(lag_list):
            raise ValidationError(
                f"got {stack.shape[0]} contribution fields for {len(lag_list)} lags"
            )
    w = integration_weights(lag_list, rule)
    return np.tensordot(w, stack, axes=(0, 0))


# ---------------------------------------------------------------------------
# persistence

RESPONSE_MANIFEST = "response.json"


def save_response(est: ResponseEstimate, outdir: str) -> str:
    """Persist manifest + float64 payloads (timing and sample cache excluded)."""
    os.makedirs(outdir, exist_ok=True)
    manifest = {
        "kind": est.kind,
        "lags": est.lags,
        "rule": est.rule,
        "channels": est.channels,
        "mesh_level": est.mesh_level,
        "n_nodes": int(est.total.shape[0]),
        "n_samples": est.n_samples,
        "seed": est.seed,
        "diagnostics": est.diagnostics,
        "total": "total.f64",
        "contributions": "contributions.f64",
    }
    path = os.path.join(outdir, RESPONSE_MANIFEST)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    est.total.astype("<f8").tofile(os.path.join(outdir, "total.f64"))
    est.contributions.astype("<f8").tofile(os.path.join(outdir, "contributions.f64"))
    return path


def load_response(path: str) -> ResponseEstimate:
    if os.path.isdir(path):
        path = os.path.join(path, RESPONSE_MANIFEST)
    try:
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read response manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"response manifest is not valid JSON: {exc}") from exc
    dirname = os.path.dirname(path)
    n = int(manifest["n_nodes"])
    c = len(manifest["channels"])
    l = len(manifest["lags"])
    total = np.fromfile(os.path.join(dirname, manifest["total"]), dtype="<f8")
    contribs = np.fromfile(os.path.join(dirname, manifest["contributions"]), dtype="<f8")
    if total.size != n * c or contribs.size != l * n * c:
        raise FormatError("response payload sizes disagree with the manifest")
    return ResponseEstimate(
        kind=manifest["kind"],
        lags=[int(x) for x in manifest["lags"]],
        rule=manifest["rule"],
        channels=list(manifest["channels"]),
        total=total.reshape(n, c),
        contributions=contribs.reshape(l, n, c),
        n_samples=int(manifest["n_samples"]),
        mesh_level=manifest.get("mesh_level"),
        seed=manifest.get("seed"),
        diagnostics=dict(manifest.get("diagnostics", {})),
    )
