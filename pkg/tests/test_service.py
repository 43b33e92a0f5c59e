import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from fdtemu.cli import dispatch
from fdtemu.service import build_state, create_app


@pytest.fixture(scope="module")
def client(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc")
    raw, prep, bank = root / "raw", root / "prep", root / "bank"
    assert dispatch(["synth", "--out", str(raw), "--level", "0",
                     "--members", "6", "--months", "60", "--burn-in", "40",
                     "--seed", "5"]) == 0
    assert dispatch(["preprocess", "--data", str(raw), "--out", str(prep),
                     "--ood-k", "5", "--seed", "5"]) == 0
    assert dispatch(["train", "--data", str(prep), "--out", str(bank),
                     "--lags", "0,1,2,3", "--kind", "linear", "--seed", "5"]) == 0
    ui = root / "ui"
    ui.mkdir()
    (ui / "index.html").write_text("<html><body>scenario console</body></html>")
    state = build_state(str(prep), str(bank), ui_dir=str(ui))
    return TestClient(create_app(state))


def _scenario_body(**overrides):
    body = {
        "regions": ["NEP"],
        "amplitudes": {"cres": -5.0},
        "samples": 16,
        "lags": [0, 1, 2, 3],
        "rule": "sum",
        "seed": 4,
    }
    body.update(overrides)
    return body


def test_health(client):
    resp = client.get("/api/health")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok"}


def test_meta_lists_artifacts_and_presets(client):
    resp = client.get("/api/meta")
    assert resp.status_code == 200
    meta = resp.json()
    assert len(meta["datasets"]) == 1 and len(meta["banks"]) == 1
    assert meta["banks"][0]["lags"] == [0, 1, 2, 3]
    assert set(meta["presets"]) == {"NEP", "SEP", "SEA"}
    assert meta["presets"]["NEP"]["lon_min"] == 210.0
    assert meta["default_samples"] == 480
    # immutability: identical bodies on repeat calls
    assert client.get("/api/meta").content == resp.content


def test_field_endpoint(client):
    resp = client.get("/api/field", params={
        "dataset": "default", "member": 0, "time": 3, "channel": "tas",
    })
    assert resp.status_code == 200
    body = resp.json()
    assert len(body["values"]) == 12
    assert len(body["lat"]) == 12 and len(body["lon"]) == 12


def test_field_out_of_range(client):
    resp = client.get("/api/field", params={
        "dataset": "default", "member": 0, "time": 60, "channel": "tas",
    })
    assert resp.status_code == 404
    body = resp.json()
    assert body["code"] == "out_of_range"
    assert "time" in body["message"]

    resp = client.get("/api/field", params={"channel": "nope"})
    assert resp.status_code == 404
    assert resp.json()["code"] == "not_found"


def test_scenario_roundtrip(client):
    resp = client.post("/api/scenario", json=_scenario_body())
    assert resp.status_code == 200
    body = resp.json()
    assert body["channels"] == ["tas"]
    assert len(body["totals"]["tas"]) == 12
    assert body["ood_score"] is not None and body["ood_score"] >= 0.0
    assert "X-Compute-Seconds" in resp.headers
    assert "contributions" not in body

    with_contribs = client.post(
        "/api/scenario", json=_scenario_body(include_contributions=True)
    ).json()
    assert set(with_contribs["contributions"]) == {"0", "1", "2", "3"}
    total = np.zeros(12)
    for lag in ("0", "1", "2", "3"):
        total += np.array(with_contribs["contributions"][lag]["tas"])
    np.testing.assert_allclose(total, np.array(body["totals"]["tas"]), atol=1e-9)


def test_scenario_deterministic_bodies(client):
    a = client.post("/api/scenario", json=_scenario_body())
    b = client.post("/api/scenario", json=_scenario_body())
    assert a.content == b.content


def test_scenario_zero_amplitude_neutral(client):
    resp = client.post("/api/scenario", json=_scenario_body(amplitudes={}))
    body = resp.json()
    assert all(v == 0.0 for v in body["totals"]["tas"])
    # unperturbed sample mean sits deep inside the training cloud
    assert body["ood_score"] < 1.0


def test_scenario_validation_errors(client):
    resp = client.post("/api/scenario", json=_scenario_body(rule="simpson"))
    assert resp.status_code == 400
    body = resp.json()
    assert body["code"] == "invalid_scenario"
    assert any("rule" in f for f in body["fields"])

    resp = client.post("/api/scenario", json=_scenario_body(lags=[0, 99]))
    assert resp.status_code == 400
    assert "99" in resp.json()["message"]

    resp = client.post("/api/scenario", json=_scenario_body(regions=[]))
    assert resp.status_code == 400

    resp = client.post("/api/scenario", content=b"not json",
                       headers={"content-type": "application/json"})
    assert resp.status_code == 400
    assert resp.json()["code"] == "invalid_request"


def test_scenario_unknown_bank_or_dataset(client):
    resp = client.post("/api/scenario", json=_scenario_body(bank="other"))
    assert resp.status_code == 404
    assert resp.json()["code"] == "not_found"


def test_region_mask_endpoint(client):
    from fdtemu.grid import build_icosphere
    from fdtemu.scenario import PRESET_REGIONS, region_mask

    resp = client.get("/api/region_mask", params={
        "lat_min": 0.0, "lat_max": 30.0, "lon_min": 210.0, "lon_max": 250.0,
    })
    assert resp.status_code == 200
    got = resp.json()["mask"]
    expected = region_mask(build_icosphere(0), PRESET_REGIONS["NEP"])
    assert got == [bool(v) for v in expected]

    resp = client.get("/api/region_mask", params={
        "lat_min": 30.0, "lat_max": 0.0, "lon_min": 0.0, "lon_max": 10.0,
    })
    assert resp.status_code == 400
    assert resp.json()["code"] == "validation"


def test_ood_background(client):
    resp = client.get("/api/ood/background")
    assert resp.status_code == 200
    pts = resp.json()["points"]
    assert len(pts) > 10 and len(pts[0]) == 2


def test_static_ui_served(client):
    resp = client.get("/")
    assert resp.status_code == 200
    assert "scenario console" in resp.text


def test_concurrent_identical_requests_identical_bodies(client):
    from concurrent.futures import ThreadPoolExecutor

    body = _scenario_body()
    with ThreadPoolExecutor(max_workers=4) as pool:
        results = list(pool.map(
            lambda _: client.post("/api/scenario", json=body).content, range(8)
        ))
    assert all(r == results[0] for r in results)


def test_errors_always_structured(client):
    resp = client.get("/api/field", params={"member": "wibble"})
    assert resp.status_code == 400
    body = resp.json()
    assert body["code"] == "invalid_request"
    assert body["message"]
