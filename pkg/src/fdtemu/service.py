"""HTTP facade over loaded datasets and model banks for the scenario console.

All state is loaded once at startup and never mutated by requests, so
concurrent identical requests return identical bodies.  Wall-clock timing for
scenario runs travels in the X-Compute-Seconds response header, keeping the
JSON payload deterministic under a fixed seed.  Every error body carries a
machine-readable {"code", "message"} pair.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import dataio, grid, metrics
from .cli import ANOMALIES_FILE
from .emulator import LagModelBank, load_bank
from .errors import ToolkitError, ValidationError
from .fdt import ResponseEstimate
from .scenario import PRESET_REGIONS, RegionBox, parse_scenario, region_mask, run_scenario

DEFAULT_PORT = 8642


@dataclass
class ServiceState:
    """Immutable artifacts the endpoints read from."""

    mesh: grid.IcoMesh
    datasets: dict[str, dataio.AnomalyDataset]
    banks: dict[str, LagModelBank]
    ood: metrics.OodStats | None = None
    ui_dir: str | None = None


def build_state(data_dir: str, bank_dir: str, *, ui_dir: str | None = None,
                dataset_name: str = "default", bank_name: str = "default") -> ServiceState:
    """Load one preprocessed dataset + one bank (plus OOD stats when present)."""
    anoms = dataio.load_dataset(os.path.join(data_dir, ANOMALIES_FILE))
    bank = load_bank(bank_dir)
    if anoms.mesh_level != bank.mesh_level:
        raise ValidationError(
            f"dataset mesh level {anoms.mesh_level} != bank level {bank.mesh_level}"
        )
    ood = None
    ood_path = os.path.join(data_dir, "ood.json")
    if os.path.exists(ood_path):
        ood = metrics.load_ood_stats(ood_path)
    if ui_dir is not None and not os.path.isdir(ui_dir):
        raise ValidationError(f"UI directory {ui_dir!r} does not exist")
    return ServiceState(
        mesh=grid.build_icosphere(anoms.mesh_level),
        datasets={dataset_name: anoms},
        banks={bank_name: bank},
        ood=ood,
        ui_dir=ui_dir,
    )


def _error(status: int, code: str, message: str, **extra) -> JSONResponse:
    body = {"code": code, "message": message}
    body.update(extra)
    return JSONResponse(status_code=status, content=body)


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="fdtemu scenario console", version="0.1.0", docs_url=None,
                  redoc_url=None)

    @app.exception_handler(ToolkitError)
    async def _toolkit_error(_req, exc: ToolkitError):
        return _error(400, exc.category, str(exc))

    @app.exception_handler(RequestValidationError)
    async def _request_error(_req, exc: RequestValidationError):
        return _error(400, "invalid_request", "request failed validation",
                      fields=[str(e.get("loc")) for e in exc.errors()])

    @app.get("/api/health")
    async def health():
        return {"status": "ok"}

    @app.get("/api/meta")
    async def meta():
        datasets = []
        for name, ds in state.datasets.items():
            datasets.append({
                "name": name,
                "members": ds.members,
                "months": ds.months,
                "mesh_level": ds.mesh_level,
                "start_month": ds.start_month,
                "channels": [
                    {"name": c.name, "role": c.role, "units": c.units}
                    for c in ds.channels
                ],
            })
        banks = []
        for name, bank in state.banks.items():
            banks.append({
                "name": name,
                "lags": bank.lags,
                "kind": bank.metadata.get("kind", "mlp"),
                "channels_in": bank.channels_in,
                "channels_out": bank.channels_out,
            })
        return {
            "mesh_level": state.mesh.level,
            "n_nodes": state.mesh.n_vertices,
            "datasets": datasets,
            "banks": banks,
            "presets": {k: v.to_dict() for k, v in PRESET_REGIONS.items()},
            "default_samples": 480,
        }

    @app.get("/api/field")
    async def field(dataset: str = "default", member: int = 0, time: int = 0,
                    channel: str = ""):
        ds = state.datasets.get(dataset)
        if ds is None:
            return _error(404, "not_found", f"unknown dataset {dataset!r}",
                          available=sorted(state.datasets))
        if not 0 <= member < ds.members:
            return _error(404, "out_of_range",
                          f"member {member} outside 0..{ds.members - 1}")
        if not 0 <= time < ds.months:
            return _error(404, "out_of_range",
                          f"time {time} outside 0..{ds.months - 1}")
        if channel not in ds.channel_names:
            return _error(404, "not_found", f"unknown channel {channel!r}",
                          available=ds.channel_names)
        c = ds.channel_index(channel)
        return {
            "dataset": dataset,
            "member": member,
            "time": time,
            "channel": channel,
            "units": ds.channels[c].units,
            "values": [float(v) for v in ds.values[member, time, :, c]],
            "lat": [float(v) for v in state.mesh.lat],
            "lon": [float(v) for v in state.mesh.lon],
        }

    @app.post("/api/scenario")
    async def scenario_endpoint(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "invalid_request", "body is not valid JSON")
        if not isinstance(body, dict):
            return _error(400, "invalid_scenario", "body must be a JSON object")
        body = dict(body)
        dataset_name = body.pop("dataset", "default")
        bank_name = body.pop("bank", "default")
        include_contributions = bool(body.pop("include_contributions", False))
        ds = state.datasets.get(dataset_name)
        bank = state.banks.get(bank_name)
        if ds is None:
            return _error(404, "not_found", f"unknown dataset {dataset_name!r}")
        if bank is None:
            return _error(404, "not_found", f"unknown bank {bank_name!r}")
        sc, errors = parse_scenario(body)
        if errors:
            return _error(400, "invalid_scenario", "scenario failed validation",
                          fields=errors)
        bad_lags = [l for l in sc.lags if l not in bank.models]
        if bad_lags:
            return _error(400, "invalid_scenario",
                          f"bank has no models for lags {bad_lags}",
                          fields=["lags"])
        t0 = time.perf_counter()
        try:
            est = run_scenario(sc, bank, ds, state.mesh)
        except ToolkitError as exc:
            return _error(400, exc.category, str(exc))
        payload = _estimate_payload(state, est, include_contributions)
        elapsed = time.perf_counter() - t0
        return JSONResponse(content=payload,
                            headers={"X-Compute-Seconds": f"{elapsed:.4f}"})

    @app.get("/api/region_mask")
    async def region_mask_endpoint(lat_min: float, lat_max: float,
                                   lon_min: float, lon_max: float):
        box = RegionBox("query", lat_min, lat_max, lon_min, lon_max)
        mask = region_mask(state.mesh, box)
        return {
            "mask": [bool(v) for v in mask],
            "lat": [float(v) for v in state.mesh.lat],
            "lon": [float(v) for v in state.mesh.lon],
        }

    @app.get("/api/ood/background")
    async def ood_background():
        if state.ood is None:
            return _error(404, "not_found", "no OOD statistics loaded")
        return {
            "k": int(state.ood.k),
            "points": [[float(a), float(b)] for a, b in state.ood.background],
        }

    if state.ui_dir:
        app.mount("/", StaticFiles(directory=state.ui_dir, html=True), name="ui")

    return app


def _estimate_payload(state: ServiceState, est: ResponseEstimate,
                      include_contributions: bool) -> dict:
    totals = {
        name: [float(v) for v in est.total[:, i]]
        for i, name in enumerate(est.channels)
    }
    payload = {
        "channels": est.channels,
        "lags": est.lags,
        "rule": est.rule,
        "samples": est.n_samples,
        "seed": est.seed,
        "totals": totals,
        "lat": [float(v) for v in state.mesh.lat],
        "lon": [float(v) for v in state.mesh.lon],
    }
    if include_contributions:
        payload["contributions"] = {
            str(lag): {
                name: [float(v) for v in est.contributions[j, :, i]]
                for i, name in enumerate(est.channels)
            }
            for j, lag in enumerate(est.lags)
        }
    if state.ood is not None and est.mean_perturbed_input is not None:
        payload["ood_score"] = float(metrics.ood_score(state.ood,
                                                       est.mean_perturbed_input))
    else:
        payload["ood_score"] = None
    return payload


def run_server(state: ServiceState, port: int = DEFAULT_PORT) -> None:
    import uvicorn

    uvicorn.run(create_app(state), host="127.0.0.1", port=port, log_level="info")
