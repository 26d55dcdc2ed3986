"""
Diagnostics
Relative RMSE and per-pixel error maps against a reference, chain
autocorrelation time / effective sample size, and the run log
"""

from dataclasses import dataclass
from typing import List, Optional

import cv2
import numpy as np
import pandas as pd

from render_config import DEFAULT_RRMSE_EPSILON

METRIC_COLUMNS = ['time_s', 'mutations', 'rrmse', 'mean_acceptance']
MIN_SERIES_LENGTH = 1000

# Rec.709 luminance weights
_LUMINANCE = np.array([0.2126, 0.7152, 0.0722])


class DimensionMismatchError(ValueError):
    """Image and reference differ in shape"""


class SeriesTooShortError(ValueError):
    """Series is too short or has no variance to estimate correlations from"""


@dataclass
class ErrorReport:
    rrmse: float
    error_map: np.ndarray


@dataclass
class ChainDiagnostics:
    tau: float
    n_eff: float
    variance: float
    n: int
    window: int


def luminance_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    return image @ _LUMINANCE


def _check_shapes(image: np.ndarray, reference: np.ndarray):
    if image.shape != reference.shape:
        raise DimensionMismatchError(f"image shape {image.shape} does not match reference {reference.shape}")


def relative_error_map(image: np.ndarray, reference: np.ndarray, epsilon: float = DEFAULT_RRMSE_EPSILON,
                       use_luminance: bool = True) -> np.ndarray:
    """|I - R| / (R + eps) per pixel; RGB mode takes the channel root-mean-square"""
    image = np.asarray(image, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    _check_shapes(image, reference)
    if not np.all(np.isfinite(reference)):
        raise ValueError("reference image contains non-finite values")
    if use_luminance:
        lum_i, lum_r = luminance_image(image), luminance_image(reference)
        return np.abs(lum_i - lum_r) / (lum_r + epsilon)
    relative = (image - reference) / (reference + epsilon)
    if relative.ndim == 2:
        return np.abs(relative)
    return np.sqrt(np.mean(relative ** 2, axis=-1))


def rrmse(image: np.ndarray, reference: np.ndarray, epsilon: float = DEFAULT_RRMSE_EPSILON,
          use_luminance: bool = True) -> ErrorReport:
    error = relative_error_map(image, reference, epsilon, use_luminance)
    return ErrorReport(float(np.sqrt(np.mean(error ** 2))), error)


def false_color(error: np.ndarray, vmax: float = 1.0) -> np.ndarray:
    """8-bit BGR rendering of an error map with OpenCV's VIRIDIS ramp over [0, vmax]"""
    if vmax <= 0:
        raise ValueError("vmax must be > 0")
    scaled = np.clip(np.nan_to_num(error, nan=vmax, posinf=vmax) / vmax, 0.0, 1.0)
    return cv2.applyColorMap(np.round(scaled * 255.0).astype(np.uint8), cv2.COLORMAP_VIRIDIS)


def error_map(image: np.ndarray, reference: np.ndarray, epsilon: float = DEFAULT_RRMSE_EPSILON,
              use_luminance: bool = True, vmax: float = 1.0):
    """Per-pixel relative error and its false-colour encoding"""
    error = relative_error_map(image, reference, epsilon, use_luminance)
    return error, false_color(error, vmax)


def autocorrelation(series: np.ndarray) -> np.ndarray:
    """Normalised autocorrelation at every lag, via a zero-padded FFT"""
    x = np.asarray(series, dtype=np.float64)
    x = x - x.mean()
    n = len(x)
    spectrum = np.fft.rfft(x, n=2 * n)
    autocovariance = np.fft.irfft(spectrum * np.conj(spectrum), n=2 * n)[:n] / n
    if autocovariance[0] <= 0.0:
        raise SeriesTooShortError("series has zero variance")
    return autocovariance / autocovariance[0]


def autocorrelation_time(series, min_length: int = MIN_SERIES_LENGTH) -> ChainDiagnostics:
    """tau = 1 + 2 sum(rho_k), truncated by Geyer's initial positive (monotone) sequence"""
    x = np.asarray(series, dtype=np.float64)
    n = len(x)
    if n < min_length:
        raise SeriesTooShortError(f"need at least {min_length} samples, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    rho = autocorrelation(x)

    pairs = n // 2
    gamma = rho[0:2 * pairs:2] + rho[1:2 * pairs:2]
    non_positive = np.flatnonzero(gamma <= 0.0)
    cutoff = int(non_positive[0]) if len(non_positive) else len(gamma)
    gamma = np.minimum.accumulate(gamma[:cutoff])

    tau = max(-1.0 + 2.0 * float(gamma.sum()), 1.0 / n)
    variance = float(np.var(x, ddof=1))
    return ChainDiagnostics(tau=tau, n_eff=n / tau, variance=tau / n * variance, n=n, window=2 * cutoff)


class RunLog:
    """Error-versus-time series for one render"""

    def __init__(self):
        self.rows: List[dict] = []

    def record(self, time_s: float, mutations: int, rrmse_value: float, mean_acceptance: float):
        if self.rows:
            last = self.rows[-1]
            if mutations <= last['mutations']:
                raise ValueError(f"mutations must increase: {mutations} after {last['mutations']}")
            if time_s < last['time_s']:
                raise ValueError("time must not decrease")
        self.rows.append({'time_s': float(time_s), 'mutations': int(mutations),
                          'rrmse': float(rrmse_value), 'mean_acceptance': float(mean_acceptance)})

    def __len__(self) -> int:
        return len(self.rows)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=METRIC_COLUMNS)

    def write_csv(self, path: str):
        self.to_frame().to_csv(path, index=False)


def read_metrics_csv(path: str, label: Optional[str] = None) -> pd.DataFrame:
    frame = pd.read_csv(path)
    missing = [c for c in METRIC_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"{path}: missing metrics column(s) {', '.join(missing)}")
    if label is not None:
        frame['label'] = label
    return frame
