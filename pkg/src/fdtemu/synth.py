"""Synthetic "toy climate" ensembles from a stable linear stochastic system.

The state z stacks all dynamic channels per mesh node (index = node * C + c).
One simulation step is z_{t+1} = A z_t + eps_t with eps ~ N(0, Q), so the
stationary mean shift under a constant forcing added every step is exactly
(I - A)^{-1} df, the analytic oracle every response estimator is checked
against.

The propagator mixes per-state damping, graph diffusion along mesh edges, and
a seeded low-rank coupling whose source patterns live on the input channels
and whose target patterns weight the output channels: inputs evolve on their
own and drive the outputs through a few global modes, which is what makes the
input->output emulation problem (and its fluctuation-based response estimate)
well posed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .dataio import ChannelSpec, EnsembleDataset, channel_indices, state_indices, validate_channels
from .errors import FormatError, ValidationError
from .grid import build_icosphere, vertex_count

SPECTRAL_TOL = 1e-6


def spectral_radius_power(A: np.ndarray, iters: int = 300) -> float:
    """Power-iteration estimate of the spectral radius.

    Deterministic start vector; the estimate is the geometric mean of the last
    few growth factors, which makes it exactly homogeneous under scaling of A.
    """
    A = np.asarray(A, dtype=np.float64)
    d = A.shape[0]
    x = np.ones(d) / np.sqrt(d)
    growth = []
    for _ in range(iters):
        y = A @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        growth.append(norm)
        x = y / norm
    tail = np.array(growth[-20:])
    return float(np.exp(np.mean(np.log(tail))))


@dataclass
class LinearTruthSystem:
    """Stable linear Gaussian system on the mesh with known response."""

    mesh_level: int
    channels: list[ChannelSpec]
    propagator: np.ndarray      # (D, D) float64, spectral radius < 1
    noise_cov: np.ndarray       # (D, D) float64, SPD
    seed: int
    spectral_radius: float
    params: dict

    def __post_init__(self):
        validate_channels(self.channels)
        d = vertex_count(self.mesh_level) * len(state_indices(self.channels))
        if self.propagator.shape != (d, d):
            raise ValidationError(
                f"propagator shape {self.propagator.shape} != state dim {d}"
            )
        if self.noise_cov.shape != (d, d):
            raise ValidationError("noise covariance shape mismatch")
        asym = np.max(np.abs(self.noise_cov - self.noise_cov.T))
        if asym > 1e-12:
            raise ValidationError(f"noise covariance asymmetry {asym:.2e} exceeds 1e-12")
        est = spectral_radius_power(self.propagator)
        if est >= 1.0 - SPECTRAL_TOL:
            raise ValidationError(
                f"propagator spectral radius estimate {est:.8f} is not < 1"
            )
        try:
            np.linalg.cholesky(self.noise_cov)
        except np.linalg.LinAlgError as exc:
            raise ValidationError("noise covariance is not positive definite") from exc

    @property
    def state_dim(self) -> int:
        return self.propagator.shape[0]

    @property
    def n_nodes(self) -> int:
        return vertex_count(self.mesh_level)


def _mesh_graph(mesh_level: int):
    mesh = build_icosphere(mesh_level)
    n = mesh.n_vertices
    adj = np.zeros((n, n))
    adj[mesh.edges[:, 0], mesh.edges[:, 1]] = 1.0
    adj[mesh.edges[:, 1], mesh.edges[:, 0]] = 1.0
    return adj / adj.sum(axis=1, keepdims=True)


def _smooth_pattern(rng, walk, n, steps=6):
    v = rng.standard_normal(n)
    for _ in range(steps):
        v = 0.5 * v + 0.5 * walk @ v
    return v / np.linalg.norm(v)


def make_truth_system(
    mesh_level: int,
    channels,
    spectral_radius: float,
    teleconnection_strength: float = 0.4,
    seed: int = 0,
    *,
    coupling_rank: int = 8,
    damping_input: tuple[float, float] = (0.6, 0.95),
    damping_output: tuple[float, float] = (0.1, 0.35),
    output_drive_weight: float = 0.75,
    noise_scale=1.0,
    noise_smoothing: float = 0.3,
) -> LinearTruthSystem:
    """Build a stable propagator and SPD noise covariance on the mesh graph.

    A is the convex mix (1-s)/2 * damping + (1-s)/2 * diffusion + s * low-rank
    with s = teleconnection_strength, rescaled so the power-iteration spectral
    radius estimate equals the target.  Q = S (I + gamma * G_sym) S where S is
    the per-channel noise scale (scalar or one value per dynamic channel).
    """
    channels = list(channels)
    validate_channels(channels)
    if not 0.0 < spectral_radius < 1.0:
        raise ValidationError(
            f"spectral_radius must lie in (0, 1), got {spectral_radius}"
        )
    if not 0.0 <= teleconnection_strength <= 1.0:
        raise ValidationError("teleconnection_strength must lie in [0, 1]")

    st = state_indices(channels)
    dyn = [channels[i] for i in st]
    n = vertex_count(mesh_level)
    c = len(dyn)
    d = n * c
    rng = np.random.default_rng([int(seed), 0x5F])

    walk = _mesh_graph(mesh_level)
    in_pos = [i for i, ch in enumerate(dyn) if ch.role == "input"]
    out_pos = [i for i, ch in enumerate(dyn) if ch.role == "output"]
    idx = lambda pos: (np.arange(n)[:, None] * c + np.array(pos)).ravel()
    idx_in, idx_out = idx(in_pos), idx(out_pos)

    damp = np.empty(d)
    damp[idx_in] = rng.uniform(*damping_input, idx_in.size)
    damp[idx_out] = rng.uniform(*damping_output, idx_out.size)

    diffusion = np.zeros((d, d))
    for p in range(c):
        rows = np.arange(n) * c + p
        diffusion[np.ix_(rows, rows)] = walk

    lowrank = np.zeros((d, d))
    for _ in range(coupling_rank):
        src = _smooth_pattern(rng, walk, n)
        tgt_out = _smooth_pattern(rng, walk, n)
        tgt_in = _smooth_pattern(rng, walk, n)
        u = np.zeros(d)
        if out_pos:
            u[idx_out] = np.sqrt(output_drive_weight) * np.repeat(tgt_out, len(out_pos))
            u[idx_out] /= np.sqrt(len(out_pos))
        if in_pos:
            u[idx_in] = np.sqrt(1.0 - output_drive_weight) * np.repeat(tgt_in, len(in_pos))
            u[idx_in] /= np.sqrt(len(in_pos))
        v = np.zeros(d)
        v[idx_in] = np.repeat(src, len(in_pos)) / np.sqrt(len(in_pos))
        lowrank += np.outer(u, v)
    lowrank /= np.sqrt(coupling_rank)

    s = teleconnection_strength
    w = 0.5 * (1.0 - s)
    A = w * np.diag(damp) + w * diffusion + s * lowrank
    est = spectral_radius_power(A)
    if est == 0.0:
        raise ValidationError("degenerate propagator (zero spectral radius)")
    A *= spectral_radius / est

    scale = np.broadcast_to(np.atleast_1d(np.asarray(noise_scale, float)), (c,))
    if np.any(scale <= 0):
        raise ValidationError("noise_scale entries must be positive")
    sdiag = np.tile(scale, n)
    gsym = 0.5 * (diffusion + diffusion.T)
    Q = (np.eye(d) + noise_smoothing * gsym) * np.outer(sdiag, sdiag)
    Q = 0.5 * (Q + Q.T)

    return LinearTruthSystem(
        mesh_level=mesh_level,
        channels=channels,
        propagator=A,
        noise_cov=Q,
        seed=int(seed),
        spectral_radius=float(spectral_radius),
        params={
            "teleconnection_strength": float(s),
            "coupling_rank": int(coupling_rank),
            "damping_input": [float(x) for x in damping_input],
            "damping_output": [float(x) for x in damping_output],
            "output_drive_weight": float(output_drive_weight),
            "noise_scale": [float(x) for x in scale],
            "noise_smoothing": float(noise_smoothing),
        },
    )


def _seasonal_cycle(system: LinearTruthSystem, amplitude: float) -> np.ndarray:
    """Fixed 12-month sinusoidal cycle per (node, channel), identical for all members."""
    n, c = system.n_nodes, len(state_indices(system.channels))
    rng = np.random.default_rng([system.seed, 0xC1])
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(n, c))
    months = np.arange(12)
    return amplitude * np.sin(
        2.0 * np.pi * months[:, None, None] / 12.0 + phase[None, :, :]
    )


def simulate(
    system: LinearTruthSystem,
    members: int,
    months: int,
    burn_in: int = 200,
    seed: int = 0,
    *,
    seasonal_amplitude: float = 1.0,
) -> EnsembleDataset:
    """Run independent member trajectories and add the shared seasonal cycle.

    Member m draws its noise from a stream seeded by (seed, m), so results do
    not depend on simulation order.
    """
    if months < 1:
        raise ValidationError("months must be >= 1")
    if members < 1:
        raise ValidationError("members must be >= 1")
    if burn_in < 0:
        raise ValidationError("burn_in must be >= 0")
    d = system.state_dim
    n = system.n_nodes
    c = len(state_indices(system.channels))
    chol = np.linalg.cholesky(system.noise_cov)
    cycle = _seasonal_cycle(system, seasonal_amplitude)
    cal = (np.arange(months)) % 12   # start_month = 1

    values = np.empty((members, months, n, c), dtype=np.float32)
    A = system.propagator
    for m in range(members):
        rng = np.random.default_rng([int(seed), int(m)])
        eps = rng.standard_normal((burn_in + months, d)) @ chol.T
        z = np.zeros(d)
        for t in range(burn_in):
            z = A @ z + eps[t]
        for t in range(months):
            z = A @ z + eps[burn_in + t]
            values[m, t] = (z.reshape(n, c) + cycle[cal[t]]).astype(np.float32)
    return EnsembleDataset(
        mesh_level=system.mesh_level,
        start_month=1,
        channels=list(system.channels),
        values=values,
    )


def _forcing_array(system: LinearTruthSystem, forcing) -> np.ndarray:
    values = getattr(forcing, "values", forcing)
    values = np.asarray(values, dtype=np.float64)
    n_in = len(channel_indices(system.channels, "input"))
    if values.shape != (system.n_nodes, n_in):
        raise ValidationError(
            f"forcing shape {values.shape} != (nodes, input channels) "
            f"= ({system.n_nodes}, {n_in})"
        )
    if not np.all(np.isfinite(values)):
        raise ValidationError("forcing contains non-finite values")
    return values


def embed_forcing(system: LinearTruthSystem, forcing) -> np.ndarray:
    """Place per-node input-channel forcing into the state vector (zeros elsewhere)."""
    values = _forcing_array(system, forcing)
    st = state_indices(system.channels)
    dyn = [system.channels[i] for i in st]
    c = len(dyn)
    f = np.zeros((system.n_nodes, c))
    in_pos = [i for i, ch in enumerate(dyn) if ch.role == "input"]
    f[:, in_pos] = values
    return f.ravel()


def analytic_response(system: LinearTruthSystem, forcing) -> np.ndarray:
    """Exact stationary mean shift (I - A)^{-1} df, projected onto output channels.

    Returns (N, C_out).  The forcing is flux-like: added to the state update
    at every step, not a one-off state offset.
    """
    f = embed_forcing(system, forcing)
    d = system.state_dim
    u = np.linalg.solve(np.eye(d) - system.propagator, f)
    st = state_indices(system.channels)
    dyn = [system.channels[i] for i in st]
    out_pos = [i for i, ch in enumerate(dyn) if ch.role == "output"]
    return u.reshape(system.n_nodes, len(dyn))[:, out_pos]


def analytic_state_response(system: LinearTruthSystem, forcing) -> np.ndarray:
    """Full-state stationary response reshaped to (N, C_state)."""
    f = embed_forcing(system, forcing)
    u = np.linalg.solve(np.eye(system.state_dim) - system.propagator, f)
    return u.reshape(system.n_nodes, len(state_indices(system.channels)))


SYSTEM_MANIFEST = "system.json"


def save_system(system: LinearTruthSystem, outdir: str) -> str:
    """Persist parameters + exact float64 matrices for bit-reproducible reloads."""
    os.makedirs(outdir, exist_ok=True)
    manifest = {
        "mesh_level": system.mesh_level,
        "channels": [
            {"name": ch.name, "role": ch.role, "units": ch.units}
            for ch in system.channels
        ],
        "seed": system.seed,
        "spectral_radius": system.spectral_radius,
        "params": system.params,
        "propagator": "propagator.f64",
        "noise_cov": "noise_cov.f64",
    }
    path = os.path.join(outdir, SYSTEM_MANIFEST)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    system.propagator.astype("<f8").tofile(os.path.join(outdir, "propagator.f64"))
    system.noise_cov.astype("<f8").tofile(os.path.join(outdir, "noise_cov.f64"))
    return path


def load_system(path: str) -> LinearTruthSystem:
    if os.path.isdir(path):
        path = os.path.join(path, SYSTEM_MANIFEST)
    try:
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read system manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"system manifest is not valid JSON: {exc}") from exc
    dirname = os.path.dirname(path)
    channels = [
        ChannelSpec(ch["name"], ch["role"], ch.get("units", ""))
        for ch in manifest["channels"]
    ]
    n = vertex_count(int(manifest["mesh_level"]))
    d = n * len(state_indices(channels))
    A = np.fromfile(os.path.join(dirname, manifest["propagator"]), dtype="<f8")
    Q = np.fromfile(os.path.join(dirname, manifest["noise_cov"]), dtype="<f8")
    if A.size != d * d or Q.size != d * d:
        raise FormatError("system matrix payload size mismatch")
    return LinearTruthSystem(
        mesh_level=int(manifest["mesh_level"]),
        channels=channels,
        propagator=A.reshape(d, d),
        noise_cov=Q.reshape(d, d),
        seed=int(manifest["seed"]),
        spectral_radius=float(manifest["spectral_radius"]),
        params=dict(manifest["params"]),
    )
