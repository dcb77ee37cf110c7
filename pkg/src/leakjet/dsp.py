"""Windowing, per-window statistics, band energy and delay estimation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import Channel, FeatureBatch, SignalRecord

DEFAULT_BAND_HZ = (500.0, 4000.0)


@dataclass(frozen=True)
class BatchingPolicy:
    window_len_s: float = 1.0
    overlap_fraction: float = 0.25

    def __post_init__(self):
        if not self.window_len_s > 0:
            raise ValueError(f"window_len_s must be > 0, got {self.window_len_s}")
        if not 0 <= self.overlap_fraction <= 0.9:
            raise ValueError(f"overlap_fraction must lie in [0, 0.9], got {self.overlap_fraction}")

    def samples(self, sample_rate_hz: float) -> tuple[int, int]:
        """(window width, stride) in samples."""
        width = int(round(self.window_len_s * sample_rate_hz))
        stride = int(round(self.window_len_s * (1.0 - self.overlap_fraction) * sample_rate_hz))
        if width < 1 or stride < 1:
            raise ValueError("window shorter than one sample")
        return width, stride


def window_starts(n_samples: int, width: int, stride: int) -> np.ndarray:
    if n_samples < width:
        raise ValueError(f"record of {n_samples} samples shorter than one window ({width})")
    count = (n_samples - width) // stride + 1
    return np.arange(count, dtype=np.int64) * stride


def _band_mask(n: int, sample_rate_hz: float, f_lo: float, f_hi: float) -> np.ndarray:
    nyquist = sample_rate_hz / 2
    if not (0 <= f_lo < f_hi <= nyquist):
        raise ValueError(f"invalid band [{f_lo}, {f_hi}] Hz for sample rate {sample_rate_hz} Hz")
    freqs = np.arange(n // 2 + 1) * (sample_rate_hz / n)
    # Half-open so adjacent bands partition the bins; the top edge closes at Nyquist.
    mask = (freqs >= f_lo) & (freqs < f_hi)
    if f_hi == nyquist:
        mask |= freqs == nyquist
    return mask


def _onesided_power(spectrum: np.ndarray, n: int) -> np.ndarray:
    """Periodogram bins of an rfft, scaled so they sum to the mean square."""
    p = np.abs(spectrum) ** 2 / float(n) ** 2
    p[..., 1:] *= 2.0
    if n % 2 == 0:
        p[..., -1] /= 2.0
    return p


def band_energy(samples, sample_rate_hz: float, f_lo_hz: float, f_hi_hz: float) -> float:
    """Mean square of the ideal band-pass content in [f_lo, f_hi) Hz."""
    x = np.asarray(samples, dtype=np.float64)
    n = len(x)
    mask = _band_mask(n, sample_rate_hz, f_lo_hz, f_hi_hz)
    return float(_onesided_power(np.fft.rfft(x), n)[mask].sum())


def band_energies(windows: np.ndarray, sample_rate_hz: float, f_lo_hz: float, f_hi_hz: float) -> np.ndarray:
    """band_energy over each row of a 2-D window array."""
    n = windows.shape[1]
    mask = _band_mask(n, sample_rate_hz, f_lo_hz, f_hi_hz)
    return _onesided_power(np.fft.rfft(windows, axis=1), n)[:, mask].sum(axis=1)


def bandpass(samples, sample_rate_hz: float, f_lo_hz: float, f_hi_hz: float) -> np.ndarray:
    """Ideal (brick-wall) FFT band-pass over the whole array."""
    x = np.asarray(samples, dtype=np.float64)
    spec = np.fft.rfft(x)
    spec[~_band_mask(len(x), sample_rate_hz, f_lo_hz, f_hi_hz)] = 0.0
    return np.fft.irfft(spec, n=len(x))


def level_db(energy_kpa2: float) -> float:
    """Energy as dB re 1 kPa^2; -inf for zero energy."""
    with np.errstate(divide="ignore"):
        return float(10.0 * np.log10(energy_kpa2))


def batch(record: SignalRecord, policy: BatchingPolicy = BatchingPolicy(),
          band: tuple[float, float] = DEFAULT_BAND_HZ) -> list[FeatureBatch]:
    """Cut a record into overlapping windows and compute per-window features.

    A trailing partial window is dropped. Channels the station lacks leave
    their features as NaN.
    """
    fs = record.sample_rate_hz
    width, stride = policy.samples(fs)
    starts = window_starts(record.n_samples, width, stride)
    nw = len(starts)
    nan = np.full(nw, np.nan)
    cols = {}

    if Channel.STATIC_PRESSURE_BAR in record:
        mean, std, _ = kernels.window_stats(record[Channel.STATIC_PRESSURE_BAR], starts, width)
        cols["static_pressure_mean_bar"], cols["static_pressure_std_bar"] = mean, std
    if Channel.DYNAMIC_PRESSURE_KPA in record:
        x = np.asarray(record[Channel.DYNAMIC_PRESSURE_KPA], dtype=np.float64)
        _, std, mx = kernels.window_stats(x, starts, width)
        cols["dyn_pressure_std_kpa"], cols["dyn_pressure_max_kpa"] = std, mx
        windows = x[starts[:, None] + np.arange(width)]
        energy = band_energies(windows, fs, *band)
        cols["leak_band_energy_kpa2"] = energy
        with np.errstate(divide="ignore"):
            cols["leak_band_level_db"] = 10.0 * np.log10(energy)
    if Channel.ACCELERATION_M_S2 in record:
        _, std, _ = kernels.window_stats(record[Channel.ACCELERATION_M_S2], starts, width)
        cols["accel_std_m_s2"] = std
    if Channel.FLOW_M3_H in record:
        mean, _, _ = kernels.window_stats(record[Channel.FLOW_M3_H], starts, width)
        cols["flow_mean_m3_h"] = mean

    out = []
    for i, s in enumerate(starts):
        out.append(FeatureBatch(
            station_id=record.station_id,
            window_start_s=float(record.start_time_s + s / fs),
            window_len_s=width / fs,
            **{name: float(cols.get(name, nan)[i]) for name in (
                "static_pressure_mean_bar", "static_pressure_std_bar",
                "dyn_pressure_std_kpa", "dyn_pressure_max_kpa",
                "leak_band_energy_kpa2", "leak_band_level_db",
                "accel_std_m_s2", "flow_mean_m3_h")},
        ))
    return out


@dataclass(frozen=True)
class DelayEstimate:
    delay_s: float
    peak_correlation: float
    lag_samples: float


def normalized_xcorr(a, b, max_lag: int) -> np.ndarray:
    """Cross-correlation coefficients r[lag + max_lag] of b against a (means removed).

    Lag is positive when b lags a.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a = a - a.mean()
    b = b - b.mean()
    ea = float(np.dot(a, a))
    eb = float(np.dot(b, b))
    if ea == 0.0 or eb == 0.0:
        raise ValueError("degenerate input: zero-variance signal")
    return kernels.xcorr_direct(a, b, max_lag) / math.sqrt(ea * eb)


def estimate_delay(a, b, sample_rate_hz: float, max_lag_s: float) -> DelayEstimate:
    """Delay of `b` relative to `a` at the normalized cross-correlation peak.

    The integer peak is refined by a parabola through it and its two
    neighbours; peak_correlation is the sampled value at the integer peak.
    """
    if len(a) != len(b):
        raise ValueError(f"inputs differ in length: {len(a)} vs {len(b)}")
    max_lag = int(math.ceil(max_lag_s * sample_rate_hz))
    if not 0 <= max_lag < len(a):
        raise ValueError(f"max_lag {max_lag} samples outside [0, {len(a) - 1}]")
    r = normalized_xcorr(a, b, max_lag)
    i = int(np.argmax(r))
    frac = 0.0
    if 0 < i < len(r) - 1:
        ym, y0, yp = r[i - 1], r[i], r[i + 1]
        denom = ym - 2.0 * y0 + yp
        if denom < 0:
            frac = 0.5 * (ym - yp) / denom
    lag = float((i - max_lag) + frac)
    return DelayEstimate(delay_s=lag / sample_rate_hz, peak_correlation=float(r[i]), lag_samples=lag)
