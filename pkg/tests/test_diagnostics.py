import numpy as np
import pytest
from scipy.signal import lfilter

from diagnostics import (METRIC_COLUMNS, DimensionMismatchError, RunLog, SeriesTooShortError, autocorrelation,
                         autocorrelation_time, error_map, false_color, read_metrics_csv, relative_error_map, rrmse)


def ar1(rho, n, seed):
    noise = np.random.default_rng(seed).standard_normal(n)
    return lfilter([1.0], [1.0, -rho], noise)


def test_rrmse_of_identical_images_is_zero():
    image = np.random.default_rng(0).random((8, 8, 3))
    report = rrmse(image, image)
    assert report.rrmse == 0.0
    assert report.error_map.shape == (8, 8)


def test_rrmse_of_a_uniform_relative_error():
    reference = np.ones((4, 4, 3))
    report = rrmse(1.1 * reference, reference, epsilon=0.0)
    assert report.rrmse == pytest.approx(0.1)


def test_rgb_error_uses_the_channel_rms():
    reference = np.ones((2, 2, 3))
    image = reference.copy()
    image[..., 0] = 2.0
    error = relative_error_map(image, reference, epsilon=0.0, use_luminance=False)
    assert np.allclose(error, np.sqrt(1.0 / 3.0))


def test_epsilon_guards_black_reference_pixels():
    reference = np.zeros((2, 2, 3))
    image = np.full((2, 2, 3), 0.01)
    assert np.isfinite(rrmse(image, reference).rrmse)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        rrmse(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


def test_false_color_map():
    error = np.array([[0.0, 0.5], [1.0, 7.0]])
    bgr = false_color(error)
    assert bgr.shape == (2, 2, 3)
    assert bgr.dtype == np.uint8
    assert np.array_equal(bgr[1, 0], bgr[1, 1])
    values, colored = error_map(np.ones((2, 2, 3)), np.ones((2, 2, 3)))
    assert not values.any()
    with pytest.raises(ValueError):
        false_color(error, vmax=0.0)


def test_autocorrelation_starts_at_one():
    rho = autocorrelation(ar1(0.5, 5000, 1))
    assert rho[0] == pytest.approx(1.0)
    assert rho[1] == pytest.approx(0.5, abs=0.05)


def test_white_noise_has_unit_autocorrelation_time():
    noise = np.random.default_rng(4).standard_normal(1_000_000)
    diagnostics = autocorrelation_time(noise)
    assert diagnostics.tau == pytest.approx(1.0, abs=0.05)
    assert diagnostics.n_eff == pytest.approx(1_000_000, rel=0.05)


def test_ar1_autocorrelation_time():
    # tau = (1 + rho) / (1 - rho) = 3
    diagnostics = autocorrelation_time(ar1(0.5, 1_000_000, 7))
    assert diagnostics.tau == pytest.approx(3.0, rel=0.1)
    assert diagnostics.variance > 0.0


def test_short_and_constant_series_are_rejected():
    with pytest.raises(SeriesTooShortError):
        autocorrelation_time(np.zeros(10))
    with pytest.raises(SeriesTooShortError):
        autocorrelation_time(np.ones(5000))
    with pytest.raises(ValueError):
        autocorrelation_time(np.full(2000, np.nan))


def test_run_log_is_monotone(tmp_path):
    log = RunLog()
    log.record(0.5, 100, 0.9, 0.4)
    log.record(1.0, 200, 0.7, 0.45)
    with pytest.raises(ValueError):
        log.record(2.0, 200, 0.6, 0.5)
    path = tmp_path / 'metrics.csv'
    log.write_csv(str(path))
    frame = read_metrics_csv(str(path), label='global')
    assert list(frame.columns) == METRIC_COLUMNS + ['label']
    assert frame['mutations'].tolist() == [100, 200]


def test_metrics_csv_needs_every_column(tmp_path):
    path = tmp_path / 'bad.csv'
    path.write_text("time_s,rrmse\n1,0.5\n")
    with pytest.raises(ValueError, match="mutations"):
        read_metrics_csv(str(path))
