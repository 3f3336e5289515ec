"""Synthetic data generation, CSV round-trips, splits, and windowing."""

from datetime import datetime, timedelta

import numpy as np
import pytest

from gridcast.data import (
    START,
    CsvFormatError,
    EnergyDataset,
    SplitFractions,
    SyntheticSpec,
    WindowSample,
    generate_synthetic,
    load_csv,
    persistence_forecast,
    split_bounds,
    window_samples,
    write_csvs,
)


# -- synthetic generation ---------------------------------------------------------


def test_synthetic_shapes_and_metadata():
    spec = SyntheticSpec(n_users=6, n_regions=3, days=2, steps_per_day=48, seed=0)
    ds = generate_synthetic(spec)
    assert ds.readings.shape == (96, 6)
    assert ds.n_users == 6 and ds.n_regions == 3 and ds.n_steps == 96
    assert ds.steps_per_day == 48
    assert ds.timestamps[0] == START
    assert ds.timestamps[1] - ds.timestamps[0] == timedelta(minutes=30)
    np.testing.assert_array_equal(ds.region_of, [0, 1, 2, 0, 1, 2])
    assert ds.user_ids[0] == "u000" and ds.region_ids[0] == "r00"


def test_synthetic_readings_are_nonnegative():
    ds = generate_synthetic(SyntheticSpec(n_users=10, n_regions=2, days=3, seed=1))
    assert np.all(ds.readings >= 0)


def test_noise_free_signal_repeats_weekly():
    spec = SyntheticSpec(n_users=5, n_regions=2, days=9, steps_per_day=24,
                         noise=0.0, seed=2)
    ds = generate_synthetic(spec)
    season = 7 * 24
    np.testing.assert_array_equal(ds.readings[season:], ds.readings[:ds.n_steps - season])


def test_noise_free_signal_is_not_day_periodic():
    # the weekly modulation is what separates days; a day lag must not match
    spec = SyntheticSpec(n_users=5, n_regions=2, days=9, steps_per_day=24,
                         noise=0.0, seed=3)
    ds = generate_synthetic(spec)
    assert not np.allclose(ds.readings[24:], ds.readings[:-24], atol=1e-3)


def test_synthetic_is_deterministic_per_seed():
    spec = SyntheticSpec(n_users=4, n_regions=2, days=2, seed=7)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    np.testing.assert_array_equal(a.readings, b.readings)
    np.testing.assert_array_equal(a.user_coords, b.user_coords)
    assert a.timestamps == b.timestamps
    c = generate_synthetic(SyntheticSpec(n_users=4, n_regions=2, days=2, seed=8))
    assert not np.array_equal(a.readings, c.readings)


def test_noise_shift_quadruples_residual_variance():
    shift_at = 15 * 48 // 2
    noisy = SyntheticSpec(n_users=20, n_regions=4, days=15, noise=0.05,
                          shift_at=shift_at, shift_scale=2.0, seed=11)
    clean = SyntheticSpec(n_users=20, n_regions=4, days=15, noise=0.0, seed=11)
    resid = generate_synthetic(noisy).readings - generate_synthetic(clean).readings
    pre = resid[:shift_at].reshape(-1)
    post = resid[shift_at:].reshape(-1)
    assert post.size >= 5000
    ratio = post.var() / pre.var()
    assert 4.0 * 0.8 <= ratio <= 4.0 * 1.2


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(n_users=2, n_regions=3)
    with pytest.raises(ValueError):
        SyntheticSpec(days=0)
    with pytest.raises(ValueError):
        SyntheticSpec(steps_per_day=7)
    with pytest.raises(ValueError):
        SyntheticSpec(noise=-0.1)
    with pytest.raises(ValueError):
        SyntheticSpec(shift_scale=0.0)


def test_dataset_validation():
    ts = [START, START + timedelta(minutes=30)]
    ok = dict(timestamps=ts, readings=np.ones((2, 2)), user_ids=["a", "b"],
              user_coords=np.zeros((2, 2)), region_of=np.array([0, 0]),
              region_ids=["r"], region_coords=np.zeros((1, 2)))
    EnergyDataset(**ok)
    with pytest.raises(ValueError):
        EnergyDataset(**{**ok, "readings": np.array([[1.0, -0.5], [1.0, 1.0]])})
    with pytest.raises(ValueError):
        EnergyDataset(**{**ok, "region_of": np.array([0, 5])})
    with pytest.raises(ValueError):
        EnergyDataset(**{**ok, "timestamps": [START, START]})
    irregular = [START, START + timedelta(minutes=30), START + timedelta(minutes=90)]
    with pytest.raises(ValueError):
        EnergyDataset(**{**ok, "timestamps": irregular,
                         "readings": np.ones((3, 2))})


def test_node_set_accessors():
    ds = generate_synthetic(SyntheticSpec(n_users=6, n_regions=2, days=1, seed=4))
    micro = ds.micro_nodes()
    assert micro.level == "micro" and micro.n == 6
    np.testing.assert_array_equal(micro.region_of, ds.region_of)
    macro = ds.macro_nodes()
    assert macro.level == "macro" and macro.n == 2


# -- CSV round-trip -----------------------------------------------------------------


def csv_paths(tmp_path):
    return (tmp_path / "readings.csv", tmp_path / "users.csv",
            tmp_path / "regions.csv")


def test_csv_round_trip_is_bit_exact(tmp_path):
    ds = generate_synthetic(SyntheticSpec(n_users=5, n_regions=2, days=1,
                                          steps_per_day=24, seed=5))
    paths = csv_paths(tmp_path)
    write_csvs(ds, *paths)
    back = load_csv(*paths)
    np.testing.assert_array_equal(back.readings, ds.readings)
    np.testing.assert_array_equal(back.user_coords, ds.user_coords)
    np.testing.assert_array_equal(back.region_coords, ds.region_coords)
    np.testing.assert_array_equal(back.region_of, ds.region_of)
    assert back.user_ids == ds.user_ids
    assert back.region_ids == ds.region_ids
    assert back.timestamps == ds.timestamps


FIXTURE_REGIONS = "region_id,x,y\nr0,0.0,0.0\nr1,5.0,5.0\n"
FIXTURE_USERS = ("user_id,x,y,region_id\n"
                 "alice,0.1,0.2,r0\nbob,4.9,5.1,r1\ncarol,0.3,0.1,r0\n")
FIXTURE_READINGS = ("timestamp,user_id,kwh\n"
                    "2018-01-01T00:00:00,alice,1.5\n"
                    "2018-01-01T00:00:00,bob,2.5\n"
                    "2018-01-01T00:00:00,carol,0.5\n"
                    "2018-01-01T00:30:00,alice,1.25\n"
                    "2018-01-01T00:30:00,bob,2.25\n"
                    "2018-01-01T00:30:00,carol,0.75\n")


def write_fixture(tmp_path, readings=FIXTURE_READINGS, users=FIXTURE_USERS,
                  regions=FIXTURE_REGIONS):
    r, u, g = csv_paths(tmp_path)
    r.write_text(readings)
    u.write_text(users)
    g.write_text(regions)
    return r, u, g


def test_load_csv_three_user_fixture(tmp_path):
    ds = load_csv(*write_fixture(tmp_path))
    assert ds.user_ids == ["alice", "bob", "carol"]
    assert ds.region_ids == ["r0", "r1"]
    np.testing.assert_array_equal(ds.region_of, [0, 1, 0])
    np.testing.assert_array_equal(ds.readings,
                                  [[1.5, 2.5, 0.5], [1.25, 2.25, 0.75]])
    assert ds.timestamps == [datetime(2018, 1, 1, 0, 0), datetime(2018, 1, 1, 0, 30)]


def test_load_csv_negative_reading_names_row(tmp_path):
    bad = FIXTURE_READINGS.replace("2018-01-01T00:30:00,carol,0.75",
                                   "2018-01-01T00:30:00,carol,-0.75")
    paths = write_fixture(tmp_path, readings=bad)
    with pytest.raises(CsvFormatError, match=r"row 7.*negative"):
        load_csv(*paths)


def test_load_csv_duplicate_reading_names_row(tmp_path):
    dup = FIXTURE_READINGS + "2018-01-01T00:30:00,alice,9.0\n"
    paths = write_fixture(tmp_path, readings=dup)
    with pytest.raises(CsvFormatError, match=r"row 8.*duplicate"):
        load_csv(*paths)


def test_load_csv_unknown_user_rejected(tmp_path):
    bad = FIXTURE_READINGS.replace("carol,0.5", "mallory,0.5")
    paths = write_fixture(tmp_path, readings=bad)
    with pytest.raises(CsvFormatError, match="mallory"):
        load_csv(*paths)


def test_load_csv_bad_timestamp_names_row(tmp_path):
    bad = FIXTURE_READINGS.replace("2018-01-01T00:00:00,alice", "yesterday,alice")
    paths = write_fixture(tmp_path, readings=bad)
    with pytest.raises(CsvFormatError, match="row 2"):
        load_csv(*paths)


def test_load_csv_missing_reading_detected(tmp_path):
    missing = FIXTURE_READINGS.replace("2018-01-01T00:30:00,carol,0.75\n", "")
    paths = write_fixture(tmp_path, readings=missing)
    with pytest.raises(CsvFormatError, match="carol"):
        load_csv(*paths)


def test_load_csv_non_monotone_timestamp_rejected(tmp_path):
    swapped = ("timestamp,user_id,kwh\n"
               "2018-01-01T00:30:00,alice,1.0\n"
               "2018-01-01T00:00:00,alice,1.0\n")
    users = "user_id,x,y,region_id\nalice,0.1,0.2,r0\n"
    paths = write_fixture(tmp_path, readings=swapped, users=users)
    with pytest.raises(CsvFormatError, match="non-monotone"):
        load_csv(*paths)


def test_load_csv_missing_column_names_file(tmp_path):
    paths = write_fixture(tmp_path, regions="region_id,x\nr0,0.0\n")
    with pytest.raises(CsvFormatError, match="missing columns"):
        load_csv(*paths)


def test_load_csv_duplicate_user_rejected(tmp_path):
    dup_users = FIXTURE_USERS + "alice,0.0,0.0,r0\n"
    paths = write_fixture(tmp_path, users=dup_users)
    with pytest.raises(CsvFormatError, match=r"row 5.*duplicate user"):
        load_csv(*paths)


def test_load_csv_unknown_region_rejected(tmp_path):
    bad_users = FIXTURE_USERS.replace("carol,0.3,0.1,r0", "carol,0.3,0.1,r9")
    paths = write_fixture(tmp_path, users=bad_users)
    with pytest.raises(CsvFormatError, match="r9"):
        load_csv(*paths)


def test_load_csv_cadence_gap_rejected(tmp_path):
    gap = (FIXTURE_READINGS
           + "2018-01-01T02:00:00,alice,1.0\n"
           + "2018-01-01T02:00:00,bob,1.0\n"
           + "2018-01-01T02:00:00,carol,1.0\n")
    paths = write_fixture(tmp_path, readings=gap)
    with pytest.raises(CsvFormatError, match="gap"):
        load_csv(*paths)


# -- splits ---------------------------------------------------------------------------


def test_split_fractions_validation():
    with pytest.raises(ValueError):
        SplitFractions(0.5, 0.5, 0.5)
    with pytest.raises(ValueError):
        SplitFractions(1.0, 0.0, 0.0)
    SplitFractions()  # defaults are valid


def test_split_bounds_tile_the_series():
    for t in (10, 100, 673, 1344):
        (a0, a1), (b0, b1), (c0, c1) = split_bounds(t, SplitFractions())
        assert a0 == 0 and a1 == b0 and b1 == c0 and c1 == t
        assert a1 > a0 and b1 > b0 and c1 > c0


def test_split_bounds_default_proportions():
    (tr, ca, te) = split_bounds(1000, SplitFractions())
    assert tr == (0, 600)
    assert ca == (600, 800)
    assert te == (800, 1000)


# -- windows & baseline ------------------------------------------------------------


def two_week_dataset(seed=6):
    return generate_synthetic(SyntheticSpec(n_users=4, n_regions=2, days=14,
                                            steps_per_day=24, seed=seed))


def test_window_samples_contents():
    ds = two_week_dataset()
    samples = window_samples(ds, window=12, horizon=3, bounds=(0, 40))
    assert len(samples) == (40 - 3 + 1) - 12
    first = samples[0]
    assert first.first_target == 12
    np.testing.assert_array_equal(first.window, ds.readings[0:12])
    np.testing.assert_array_equal(first.target, ds.readings[12:15])
    assert first.last_ts == ds.timestamps[11]
    last = samples[-1]
    assert last.first_target + 3 == 40


def test_window_samples_inputs_reach_into_previous_split():
    ds = two_week_dataset()
    samples = window_samples(ds, window=12, horizon=2, bounds=(10, 30))
    assert samples[0].first_target == 12
    # the first sample's inputs start before the split boundary at 10
    np.testing.assert_array_equal(samples[0].window, ds.readings[0:12])
    for s in samples:
        assert s.first_target >= 10
        assert s.first_target + 2 <= 30


def test_window_samples_validation_and_empty():
    ds = two_week_dataset()
    with pytest.raises(ValueError):
        window_samples(ds, window=0, horizon=1, bounds=(0, 10))
    assert window_samples(ds, window=30, horizon=10, bounds=(0, 20)) == []


def test_persistence_uses_the_seasonal_lag():
    ds = two_week_dataset()
    samples = window_samples(ds, window=24, horizon=4, bounds=(24, 80))
    preds = persistence_forecast(ds, samples, season=24)
    assert preds.shape == (len(samples), 4, ds.n_users)
    for i, s in enumerate(samples):
        f = s.first_target
        np.testing.assert_array_equal(preds[i], ds.readings[f - 24:f - 20])


def test_persistence_rejects_unreachable_lag():
    ds = two_week_dataset()
    samples = [WindowSample(window=ds.readings[0:4], target=ds.readings[4:6],
                            last_ts=ds.timestamps[3], first_target=4)]
    with pytest.raises(ValueError):
        persistence_forecast(ds, samples, season=24)


def test_persistence_is_exact_on_noise_free_weekly_data():
    spec = SyntheticSpec(n_users=3, n_regions=1, days=9, steps_per_day=24,
                         noise=0.0, seed=9)
    ds = generate_synthetic(spec)
    season = 7 * 24
    samples = window_samples(ds, window=12, horizon=2, bounds=(season, ds.n_steps))
    preds = persistence_forecast(ds, samples, season=season)
    targets = np.stack([s.target for s in samples])
    np.testing.assert_array_equal(preds, targets)
