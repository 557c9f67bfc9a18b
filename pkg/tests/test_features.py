import numpy as np
import pytest
from scipy import stats

from core.dataset_io import GestureLabel
from core.errors import EmptyInput, EmptySeries, InvalidParams, InvalidPercent, SeriesTooShort, UnknownFeature
from core.features import (
    FEATURE_NAMES,
    FeatureMatrix,
    amplitude_features,
    build_feature_matrix,
    central_moment,
    dispersion_features,
    extract_all,
    extract_features,
    feature_block,
    feature_names,
    order_statistics,
    shape_features,
    sidecar_path,
    spectral_energy_features,
)
from core.preprocess import Window, windows_from_recordings

RNG = np.random.default_rng(123)
SIGNAL = RNG.standard_normal(257) * 3e-5 + 1e-6


def test_amplitude_features():
    f = amplitude_features([-3.0, 1.0, 2.0])
    assert f == {"mav": 2.0, "min": -3.0, "max": 2.0, "ptp": 5.0}


def test_amplitude_single_sample():
    assert amplitude_features([4.0])["ptp"] == 0.0


def test_dispersion_against_numpy():
    f = dispersion_features(SIGNAL)
    assert f["mean"] == pytest.approx(np.mean(SIGNAL))
    assert f["median"] == pytest.approx(np.median(SIGNAL))
    assert f["var_s"] == pytest.approx(np.var(SIGNAL, ddof=1))
    assert f["var_p"] == pytest.approx(np.var(SIGNAL))
    assert f["std_s"] == pytest.approx(np.std(SIGNAL, ddof=1))
    assert f["std_p"] == pytest.approx(np.std(SIGNAL))
    assert f["mad"] == pytest.approx(np.mean(np.abs(SIGNAL - SIGNAL.mean())))


def test_shape_against_scipy():
    f = shape_features(SIGNAL)
    assert f["skewness"] == pytest.approx(stats.skew(SIGNAL, bias=True))
    assert f["kurtosis"] == pytest.approx(stats.kurtosis(SIGNAL, fisher=False, bias=True))


def test_central_moment():
    x = [1.0, 2.0, 3.0, 4.0]
    assert central_moment(x, 2) == pytest.approx(1.25)
    assert central_moment(x, 3) == pytest.approx(0.0)
    assert central_moment(SIGNAL, 4) == pytest.approx(stats.moment(SIGNAL, moment=4))
    with pytest.raises(InvalidParams):
        central_moment(x, 5)


def test_order_statistics_weibull_ranks():
    f = order_statistics([4.0, 1.0, 3.0, 2.0], 50)
    assert f["percentile"] == pytest.approx(2.5)
    assert f["q1"] == pytest.approx(1.25)
    assert f["q3"] == pytest.approx(3.75)
    assert f["iqr"] == pytest.approx(2.5)


def test_order_statistics_rank_clamped():
    x = [10.0, 20.0, 30.0]
    assert order_statistics(x, 1)["percentile"] == 10.0
    assert order_statistics(x, 99)["percentile"] == 30.0


@pytest.mark.parametrize("p", [0, 100, -1, 150])
def test_order_statistics_invalid_percent(p):
    with pytest.raises(InvalidPercent):
        order_statistics([1.0, 2.0], p)


def test_energy_features():
    f = spectral_energy_features([3.0, -4.0])
    assert f["energy"] == 25.0
    assert f["power"] == 12.5
    assert f["rms"] == pytest.approx(np.sqrt(12.5))
    assert f["hjorth_activity"] == pytest.approx(np.var([3.0, -4.0]))


def test_constant_series_is_degenerate():
    f = shape_features(np.full(50, 2e-5))
    assert f == {"skewness": 0.0, "kurtosis": 0.0}
    assert dispersion_features(np.full(50, 2e-5))["var_s"] == pytest.approx(0.0, abs=1e-30)


def test_length_requirements():
    with pytest.raises(EmptySeries):
        amplitude_features([])
    with pytest.raises(SeriesTooShort):
        dispersion_features([1.0])
    with pytest.raises(SeriesTooShort):
        shape_features([1.0])


def test_shift_law():
    c = 5e-4
    base = feature_block(SIGNAL)[0]
    shifted = feature_block(SIGNAL + c)[0]
    idx = {name: i for i, name in enumerate(FEATURE_NAMES)}
    for name in ("mean", "median", "min", "max", "percentile", "q1"):
        assert shifted[idx[name]] == pytest.approx(base[idx[name]] + c)
    for name in ("var_s", "var_p", "std_s", "mad", "iqr", "ptp", "skewness", "kurtosis", "hjorth_activity"):
        assert shifted[idx[name]] == pytest.approx(base[idx[name]], rel=1e-6, abs=1e-18)


def test_scale_law():
    a = 7.0
    base = feature_block(SIGNAL)[0]
    scaled = feature_block(SIGNAL * a)[0]
    idx = {name: i for i, name in enumerate(FEATURE_NAMES)}
    for name in ("mav", "std_s", "std_p", "rms", "iqr", "mad"):
        assert scaled[idx[name]] == pytest.approx(a * base[idx[name]])
    for name in ("var_s", "energy", "power"):
        assert scaled[idx[name]] == pytest.approx(a * a * base[idx[name]])
    for name in ("skewness", "kurtosis"):
        assert scaled[idx[name]] == pytest.approx(base[idx[name]])


def test_block_matches_per_series_api():
    window = np.vstack([SIGNAL, SIGNAL[::-1] * 2])
    block = feature_block(window, p=30)
    expected = {
        **amplitude_features(window[1]),
        **dispersion_features(window[1]),
        **order_statistics(window[1], 30),
        **shape_features(window[1]),
        **spectral_energy_features(window[1]),
    }
    np.testing.assert_allclose(block[1], [expected[name] for name in FEATURE_NAMES])


def test_feature_names():
    names = feature_names("per_channel")
    assert len(names) == 160
    assert names[0] == "ch0_mav"
    assert names[20] == "ch1_mav"
    assert feature_names("channel_mean")[-1] == "chmean_hjorth_activity"


def _window(channels, label=2):
    return Window(subject_id=1, trial_id=1, label=GestureLabel(label), channels=channels, offset=0)


def test_extract_features_aggregations():
    channels = RNG.standard_normal((8, 200))
    per_channel = extract_features(_window(channels))
    assert per_channel.values.shape == (160,)
    assert per_channel.label is GestureLabel.GRASPED_HAND

    mean = extract_features(_window(channels), aggregation="channel_mean")
    np.testing.assert_allclose(mean.values, per_channel.values.reshape(8, 20).mean(axis=0))


def test_build_feature_matrix(recording):
    windows = windows_from_recordings([recording])
    m = build_feature_matrix(windows)
    assert m.X.shape == (12, 160)
    np.testing.assert_array_equal(m.labels, [1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 6])
    np.testing.assert_array_equal(m.groups, np.ones(12))
    np.testing.assert_array_equal(m.X[3], extract_features(windows[3]).values)


def test_parallel_extraction_keeps_order(recording, monkeypatch):
    monkeypatch.setenv("EMGKIT_THREADS", "2")
    windows = windows_from_recordings([recording] * 30, 200, 50)
    assert len(windows) > 256
    np.testing.assert_array_equal(extract_all(windows, n_jobs=2).X, build_feature_matrix(windows).X)


def test_build_feature_matrix_rejects_empty():
    with pytest.raises(EmptyInput):
        build_feature_matrix([])


def test_csv_round_trip(tmp_path, recording):
    m = build_feature_matrix(windows_from_recordings([recording]), aggregation="channel_mean")
    path = tmp_path / "features.csv"
    m.write_csv(path, metadata={"window_len": 200})

    loaded = FeatureMatrix.read_csv(path)
    assert loaded.names == m.names
    np.testing.assert_array_equal(loaded.labels, m.labels)
    np.testing.assert_array_equal(loaded.groups, m.groups)
    np.testing.assert_allclose(loaded.X, m.X, rtol=1e-12)
    assert loaded.metadata["window_len"] == 200
    assert loaded.metadata["aggregation"] == "channel_mean"
    assert sidecar_path(path).name == "features.csv.json"


def test_take_and_column_index(separable_matrix):
    sub = separable_matrix.take([5, 0])
    np.testing.assert_array_equal(sub.X[1], separable_matrix.X[0])
    assert separable_matrix.column_index("f03") == 3
    with pytest.raises(UnknownFeature):
        separable_matrix.column_index("nope")


def _brute_percentile(x, p):
    xs = sorted(x)
    n = len(xs)
    rank = min(max(p * (n + 1) / 100.0, 1.0), float(n))
    lo = int(rank)
    if lo == n:
        return xs[-1]
    return xs[lo - 1] + (rank - lo) * (xs[lo] - xs[lo - 1])


@pytest.mark.parametrize("x, p, key, expected", [
    ([1, 2, 3, 4, 5, 6, 7], 50, "q1", 2.0),
    ([1, 2, 3, 4, 5, 6, 7], 50, "q3", 6.0),
    ([1, 2, 3, 4, 5, 6, 7], 50, "iqr", 4.0),
    ([1, 2, 3], 50, "percentile", 2.0),
])
def test_order_statistics_examples(x, p, key, expected):
    assert order_statistics(x, p)[key] == pytest.approx(expected)


def test_order_statistics_match_interpolating_oracle():
    rng = np.random.default_rng(11)
    for _ in range(300):
        x = rng.standard_normal(int(rng.integers(2, 60))).tolist()
        p = float(rng.uniform(0.5, 99.5))
        f = order_statistics(x, p)
        assert f["percentile"] == pytest.approx(_brute_percentile(x, p), rel=1e-12, abs=1e-12)
        assert f["q3"] == pytest.approx(_brute_percentile(x, 75.0), rel=1e-12, abs=1e-12)


def _naive(x):
    n = len(x)
    mean = sum(x) / n
    dev = [v - mean for v in x]
    m2 = sum(d * d for d in dev) / n
    m3 = sum(d ** 3 for d in dev) / n
    m4 = sum(d ** 4 for d in dev) / n
    energy = sum(v * v for v in x)
    xs = sorted(x)
    median = _brute_percentile(x, 50.0)
    q1 = _brute_percentile(x, 25.0)
    # name -> (value, power of scale)
    return {
        "min": (xs[0], 1),
        "max": (xs[-1], 1),
        "ptp": (xs[-1] - xs[0], 1),
        "median": (xs[n // 2] if n % 2 else (xs[n // 2 - 1] + xs[n // 2]) / 2, 1),
        "percentile": (median, 1),
        "q1": (q1, 1),
        "iqr": (_brute_percentile(x, 75.0) - q1, 1),
        "std_s": ((m2 * n / (n - 1)) ** 0.5, 1),
        "std_p": (m2 ** 0.5, 1),
        "rms": ((energy / n) ** 0.5, 1),
        "mav": (sum(abs(v) for v in x) / n, 1),
        "mean": (mean, 1),
        "var_s": (m2 * n / (n - 1), 2),
        "var_p": (m2, 2),
        "mad": (sum(abs(d) for d in dev) / n, 1),
        "skewness": (m3 / m2 ** 1.5, 0),
        "kurtosis": (m4 / m2 ** 2, 0),
        "energy": (energy, 2),
        "power": (energy / n, 2),
        "hjorth_activity": (m2, 2),
    }


def test_kernels_match_naive_sums_on_random_series():
    rng = np.random.default_rng(2024)
    idx = {name: i for i, name in enumerate(FEATURE_NAMES)}
    for _ in range(1000):
        n = int(rng.integers(3, 300))
        scale = 10.0 ** rng.uniform(-3, 2)
        x = (rng.standard_normal(n) + rng.uniform(-3, 3)) * scale
        row = feature_block(x)[0]
        for name, (expected, power) in _naive(x.tolist()).items():
            tol = 1e-9 * scale ** power
            assert row[idx[name]] == pytest.approx(expected, rel=1e-9, abs=tol), name
