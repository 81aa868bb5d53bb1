"""Post-processing of simulated traces: FFT spectra, peak picking, decay fits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.optimize
import scipy.signal

_DT_TOL_US = 1e-9


@dataclass
class TimeTrace:
    """Uniformly sampled signal: times in microseconds, dimensionless values."""

    t_us: np.ndarray
    signal: np.ndarray

    def __post_init__(self):
        self.t_us = np.asarray(self.t_us, dtype=float)
        self.signal = np.asarray(self.signal, dtype=float)
        if self.t_us.ndim != 1 or self.t_us.shape != self.signal.shape:
            raise ValueError("t_us and signal must be 1-d arrays of equal length")
        if len(self.t_us) >= 2:
            dt = np.diff(self.t_us)
            if np.any(dt <= 0):
                raise ValueError("times must be strictly increasing")
            if np.max(np.abs(dt - dt[0])) > _DT_TOL_US:
                raise ValueError("times must be uniformly spaced")

    @property
    def dt_us(self) -> float:
        return float(self.t_us[1] - self.t_us[0])

    def slice(self, t_min: float = None, t_max: float = None) -> "TimeTrace":
        mask = np.ones(len(self.t_us), dtype=bool)
        if t_min is not None:
            mask &= self.t_us >= t_min - _DT_TOL_US
        if t_max is not None:
            mask &= self.t_us <= t_max + _DT_TOL_US
        return TimeTrace(self.t_us[mask], self.signal[mask])


@dataclass
class PowerSpectrum:
    """One-sided power spectrum; frequencies in MHz.

    With no window the total power equals the energy of the mean-subtracted
    input samples (Parseval).  resolution_mhz is set by the record length,
    independent of zero padding.
    """

    freq_mhz: np.ndarray
    power: np.ndarray
    resolution_mhz: float


def fft_spectrum(
    trace: TimeTrace,
    window: str = "hann",
    t_range: tuple = None,
    zero_pad: int = 4,
) -> PowerSpectrum:
    """Power spectrum of a trace, mean-subtracted before transforming.

    window is "hann" or "none"; t_range restricts the transform to a time
    slice; zero_pad multiplies the record length (interpolates the spectrum,
    does not add resolution).  Hann windows are scaled to preserve total
    power on stationary signals.
    """
    if t_range is not None:
        trace = trace.slice(*t_range)
    n = len(trace.t_us)
    if n < 8:
        raise ValueError(f"need at least 8 samples in range, got {n}")
    dt = trace.dt_us
    x = trace.signal - trace.signal.mean()
    if window == "hann":
        w = np.hanning(n)
        x = x * w / np.sqrt(np.mean(w**2))
    elif window not in (None, "none"):
        raise ValueError(f"unknown window {window!r}")
    m = int(zero_pad) * n
    spec = np.fft.rfft(x, n=m)
    freq = np.fft.rfftfreq(m, d=dt)
    power = np.abs(spec) ** 2 / m
    # fold negative frequencies so the total equals the sample energy
    power[1:] *= 2.0
    if m % 2 == 0:
        power[-1] /= 2.0
    return PowerSpectrum(freq_mhz=freq, power=power, resolution_mhz=1.0 / (n * dt))


def find_peaks(ps: PowerSpectrum, min_prominence: float = 0.0):
    """Local maxima with at least the given prominence, strongest first.

    Peak frequencies are refined by a three-point parabola through the
    neighboring bins.  Returns a list of (freq_mhz, power) tuples.
    """
    if min_prominence < 0:
        raise ValueError("min_prominence must be >= 0")
    idx, _ = scipy.signal.find_peaks(ps.power, prominence=min_prominence or None)
    out = []
    df = ps.freq_mhz[1] - ps.freq_mhz[0] if len(ps.freq_mhz) > 1 else 0.0
    for i in idx:
        f, p = ps.freq_mhz[i], ps.power[i]
        if 0 < i < len(ps.power) - 1:
            ym, y0, yp = ps.power[i - 1], ps.power[i], ps.power[i + 1]
            denom = ym - 2 * y0 + yp
            if denom != 0:
                shift = 0.5 * (ym - yp) / denom
                if abs(shift) <= 1.0:
                    f = f + shift * df
        out.append((float(f), float(p)))
    out.sort(key=lambda fp: -fp[1])
    return out


class ExponentialFit(NamedTuple):
    amplitude: float
    rate_per_us: float
    rms_residual: float


def fit_exponential(t_us, amplitude) -> ExponentialFit:
    """Least-squares fit of a * exp(-r t).

    Initialized by a linear fit on log amplitudes, then refined on the
    nonlinear objective.  Amplitudes must be positive.
    """
    t = np.asarray(t_us, dtype=float)
    y = np.asarray(amplitude, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("t and amplitude must be 1-d arrays of equal length")
    if len(t) < 3:
        raise ValueError(f"need at least 3 points, got {len(t)}")
    if np.any(y <= 0):
        raise ValueError("amplitudes must be positive for an exponential fit")
    slope, intercept = np.polyfit(t, np.log(y), 1)
    x0 = np.array([np.exp(intercept), -slope])

    def residuals(params):
        a, r = params
        return a * np.exp(-r * t) - y

    result = scipy.optimize.least_squares(residuals, x0, method="lm")
    a, r = result.x
    rms = float(np.sqrt(np.mean(residuals(result.x) ** 2)))
    return ExponentialFit(float(a), float(r), rms)
