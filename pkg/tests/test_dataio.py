import json

import numpy as np
import pytest

from fdtemu import dataio
from fdtemu.dataio import (
    ChannelSpec,
    compute_climatology,
    deseasonalize,
    destandardize,
    load_dataset,
    make_lag_pairs,
    reseasonalize,
    sample_fluctuations,
    save_dataset,
    split,
    split_members,
    standardize,
)
from fdtemu.errors import FormatError, ValidationError
from util import io_channels, make_anomalies, make_dataset, random_anomalies


def test_channel_spec_roles():
    ChannelSpec("tas", "output", "K")
    with pytest.raises(ValidationError, match="role"):
        ChannelSpec("x", "wibble")


def test_dataset_requires_matching_node_count():
    values = np.zeros((2, 24, 43, 2), dtype=np.float32)
    with pytest.raises(ValidationError, match="42"):
        make_dataset(values, mesh_level=1)


def test_dataset_rejects_non_finite_with_location():
    values = np.zeros((2, 24, 12, 2), dtype=np.float32)
    values[1, 7, 3, 0] = np.nan
    with pytest.raises(ValidationError, match="member 1, time 7"):
        make_dataset(values)


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    data = make_dataset(rng.standard_normal((2, 24, 42, 2)), mesh_level=1)
    save_dataset(data, str(tmp_path))
    loaded = load_dataset(str(tmp_path / "dataset.json"))
    assert loaded.values.shape == (2, 24, 42, 2)
    np.testing.assert_array_equal(loaded.values, data.values)
    assert [c.name for c in loaded.channels] == [c.name for c in data.channels]


def test_load_rejects_payload_shape_mismatch(tmp_path):
    data = make_dataset(np.zeros((1, 4, 42, 2), dtype=np.float32), mesh_level=1)
    save_dataset(data, str(tmp_path))
    manifest = json.loads((tmp_path / "dataset.json").read_text())
    # claim one more node than the payload holds by lying about months
    manifest["months"] = 5
    (tmp_path / "dataset.json").write_text(json.dumps(manifest))
    with pytest.raises(FormatError, match="expected"):
        load_dataset(str(tmp_path / "dataset.json"))


def test_load_rejects_non_finite_payload(tmp_path):
    data = make_dataset(np.zeros((1, 4, 12, 2), dtype=np.float32))
    save_dataset(data, str(tmp_path))
    raw = np.fromfile(tmp_path / "member_000.f32", dtype="<f4")
    raw[5] = np.inf
    raw.tofile(tmp_path / "member_000.f32")
    with pytest.raises(ValidationError, match="non-finite"):
        load_dataset(str(tmp_path / "dataset.json"))


def test_load_rejects_unknown_role(tmp_path):
    data = make_dataset(np.zeros((1, 4, 12, 2), dtype=np.float32))
    save_dataset(data, str(tmp_path))
    manifest = json.loads((tmp_path / "dataset.json").read_text())
    manifest["channels"][0]["role"] = "mystery"
    (tmp_path / "dataset.json").write_text(json.dumps(manifest))
    with pytest.raises(ValidationError, match="role"):
        load_dataset(str(tmp_path / "dataset.json"))


def test_climatology_symmetric_members_cancel():
    rng = np.random.default_rng(1)
    v = rng.standard_normal((1, 24, 12, 2)).astype(np.float32)
    data = make_dataset(np.concatenate([v, -v]))
    clim = compute_climatology(data)
    np.testing.assert_allclose(clim.values, 0.0, atol=1e-7)


def test_climatology_single_member_yearly():
    rng = np.random.default_rng(2)
    v = rng.standard_normal((1, 12, 12, 2)).astype(np.float32)
    data = make_dataset(v)
    clim = compute_climatology(data)
    np.testing.assert_allclose(clim.values, v[0], atol=1e-7)
    anoms = deseasonalize(data, clim)
    np.testing.assert_allclose(anoms.values, 0.0, atol=1e-6)


def test_climatology_arithmetic_mean():
    v = np.zeros((3, 12, 12, 2), dtype=np.float32)
    v[0, 2, 5, 1] = 1.0
    v[1, 2, 5, 1] = 2.0
    v[2, 2, 5, 1] = 3.0
    clim = compute_climatology(make_dataset(v))
    assert clim.values[2, 5, 1] == pytest.approx(2.0)


def test_deseasonalize_roundtrip_and_zero_mean():
    rng = np.random.default_rng(3)
    months = np.arange(48)
    cycle = 3.0 * np.sin(2 * np.pi * months / 12.0)
    v = (cycle[None, :, None, None]
         + rng.standard_normal((6, 48, 12, 2))).astype(np.float32)
    data = make_dataset(v, start_month=4)
    clim = compute_climatology(data)
    anoms = deseasonalize(data, clim)

    # ensemble mean per calendar month vanishes relative to channel spread
    cal = dataio.calendar_months(4, 48)
    stds = anoms.values.std(axis=(0, 1, 2), dtype=np.float64)
    for m in np.unique(cal):
        mean = anoms.values[:, cal == m].mean(axis=(0, 1), dtype=np.float64)
        assert np.max(np.abs(mean) / stds) < 1e-5

    back = reseasonalize(anoms)
    np.testing.assert_allclose(back.values, data.values, rtol=1e-6, atol=1e-5)


def test_deseasonalize_removes_known_cycle():
    rng = np.random.default_rng(4)
    members, months = 300, 24
    cal = dataio.calendar_months(1, months)
    cycle = 5.0 * np.sin(2 * np.pi * (cal - 1) / 12.0)
    noise = rng.standard_normal((members, months, 12, 2))
    v = (cycle[None, :, None, None] + noise).astype(np.float32)
    data = make_dataset(v)
    anoms = deseasonalize(data, compute_climatology(data))
    # anomaly variance approaches the unit noise variance once the cycle is gone
    assert anoms.values.var(dtype=np.float64) == pytest.approx(1.0, rel=0.05)


def test_deseasonalize_rejects_misaligned_channels():
    data = make_dataset(np.zeros((2, 12, 12, 2), dtype=np.float32))
    other = make_dataset(
        np.zeros((2, 12, 12, 2), dtype=np.float32),
        channels=[ChannelSpec("a", "input"), ChannelSpec("b", "output")],
    )
    clim = compute_climatology(other)
    with pytest.raises(ValidationError, match="channels"):
        deseasonalize(data, clim)


def test_standardize_stats_and_inverse():
    rng = np.random.default_rng(5)
    anoms = make_anomalies(4.0 + 2.5 * rng.standard_normal((5, 36, 12, 2)))
    z = standardize(anoms, [0, 1, 2])
    sub = z.values[[0, 1, 2]].astype(np.float64)
    np.testing.assert_allclose(sub.mean(axis=(0, 1, 2)), 0.0, atol=1e-6)
    np.testing.assert_allclose(sub.std(axis=(0, 1, 2)), 1.0, atol=1e-3)
    back = destandardize(z)
    np.testing.assert_allclose(back.values, anoms.values, rtol=1e-6, atol=1e-6)


def test_standardize_rejects_constant_channel():
    values = np.zeros((2, 12, 12, 2), dtype=np.float32)
    values[..., 0] = np.random.default_rng(0).standard_normal((2, 12, 12))
    values[..., 1] = 7.0
    anoms = make_anomalies(values)
    with pytest.raises(ValidationError, match="tas"):
        standardize(anoms, [0, 1])


def test_lag_pairs_counting_and_alignment():
    rng = np.random.default_rng(6)
    anoms = random_anomalies(rng, members=1, months=10)
    pairs = make_lag_pairs(anoms, 3)
    assert pairs.n_samples == 7

    zero = make_lag_pairs(anoms, 0)
    np.testing.assert_array_equal(
        zero.inputs[:, :, 0], anoms.values[0, :, :, 0]
    )
    np.testing.assert_array_equal(
        zero.targets[:, :, 0], anoms.values[0, :, :, 1]
    )
    with pytest.raises(ValidationError):
        make_lag_pairs(anoms, 10)


def test_lag_pairs_never_cross_members():
    rng = np.random.default_rng(7)
    anoms = random_anomalies(rng, members=2, months=10)
    # give member 1 a large offset so cross-member pairing would be obvious
    v = anoms.values.copy()
    v[1] += 1000.0
    anoms = make_anomalies(v)
    pairs = make_lag_pairs(anoms, 3)
    assert pairs.n_samples == 14
    big_in = pairs.inputs[:, 0, 0] > 500
    big_tg = pairs.targets[:, 0, 0] > 500
    np.testing.assert_array_equal(big_in, big_tg)
    np.testing.assert_array_equal(pairs.provenance[:, 0], np.repeat([0, 1], 7))


@pytest.mark.parametrize("members,months,lag", [
    (1, 5, 0), (1, 5, 4), (2, 10, 3), (4, 7, 6), (3, 12, 1),
])
def test_lag_pair_count_formula(members, months, lag):
    rng = np.random.default_rng(8)
    anoms = random_anomalies(rng, members=members, months=months)
    pairs = make_lag_pairs(anoms, lag)
    assert pairs.n_samples == members * max(0, months - lag)


def test_split_counts_and_determinism():
    groups = split_members(10, (0.6, 0.2, 0.2), seed=11)
    assert [len(g) for g in groups] == [6, 2, 2]
    assert split_members(10, (0.6, 0.2, 0.2), seed=11) == groups
    assert split_members(10, (0.6, 0.2, 0.2), seed=12) != groups


def test_split_partitions_members():
    for seed in range(5):
        groups = split_members(7, (0.5, 0.3, 0.2), seed=seed)
        flat = sorted(i for g in groups for i in g)
        assert flat == list(range(7))
        assert all(len(g) >= 1 for g in groups)


def test_split_rejects_too_few_members():
    with pytest.raises(ValidationError, match="split"):
        split_members(2, (0.6, 0.2, 0.2), seed=0)
    with pytest.raises(ValidationError):
        split_members(5, (0.5, 0.6), seed=0)
    with pytest.raises(ValidationError):
        split_members(5, (1.2, -0.2), seed=0)


def test_split_returns_member_datasets():
    rng = np.random.default_rng(9)
    anoms = random_anomalies(rng, members=10, months=6)
    train, val, test = split(anoms, (0.6, 0.2, 0.2), seed=3)
    assert (train.members, val.members, test.members) == (6, 2, 2)
    ids = sorted(train.member_ids + val.member_ids + test.member_ids)
    assert ids == list(range(10))
    np.testing.assert_array_equal(train.values[0], anoms.values[train.member_ids[0]])


def test_sample_fluctuations():
    rng = np.random.default_rng(10)
    anoms = random_anomalies(rng, members=5, months=100)
    states, slots = sample_fluctuations(anoms, 480, seed=1)
    assert states.shape == (480, 12, 1)
    again, slots2 = sample_fluctuations(anoms, 480, seed=1)
    np.testing.assert_array_equal(states, again)
    np.testing.assert_array_equal(slots, slots2)
    # drawing everything gives a permutation of all slots
    full, slots_all = sample_fluctuations(anoms, 500, seed=2)
    seen = {(int(m), int(t)) for m, t in slots_all}
    assert len(seen) == 500
    with pytest.raises(ValidationError):
        sample_fluctuations(anoms, 501, seed=0)


def test_anomaly_manifest_roundtrip(tmp_path):
    rng = np.random.default_rng(12)
    data = make_dataset(rng.standard_normal((4, 24, 12, 2)) + 3.0)
    clim = compute_climatology(data)
    anoms = deseasonalize(data, clim)
    anoms.norm_stats = dataio.compute_norm_stats(anoms, [0, 1])
    save_dataset(anoms, str(tmp_path), name="anomalies.json")
    loaded = load_dataset(str(tmp_path / "anomalies.json"))
    assert isinstance(loaded, dataio.AnomalyDataset)
    assert not loaded.standardized
    np.testing.assert_array_equal(loaded.values, anoms.values)
    np.testing.assert_array_equal(loaded.climatology.values, clim.values)
    np.testing.assert_allclose(loaded.norm_stats.mean, anoms.norm_stats.mean)
    np.testing.assert_allclose(loaded.norm_stats.std, anoms.norm_stats.std)
