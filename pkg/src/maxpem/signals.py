"""Time-series containers, signal generators and causal filtering.

Signals are dense 1-D float64 arrays.  The sample stored at array index
``i`` corresponds to time ``t = i + 1``; everything before ``t = 1`` is
taken to be zero, so all recursions start from zero initial conditions.
For stable filters the resulting transient error decays after O(degree)
samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter


def as_signal(x) -> np.ndarray:
    """Validate and convert ``x`` to a finite 1-D float64 array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"signal must be 1-D, got shape {arr.shape}")
    if arr.size < 1:
        raise ValueError("signal must contain at least one sample")
    if not np.all(np.isfinite(arr)):
        raise ValueError("signal contains NaN or Inf")
    return arr


def as_poly(p) -> np.ndarray:
    """Validate polynomial coefficients [p_0, p_1, ..., p_m] in z^-1."""
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError("polynomial needs at least the constant coefficient")
    if not np.all(np.isfinite(arr)):
        raise ValueError("polynomial has non-finite coefficients")
    return arr


@dataclass(frozen=True)
class Dataset:
    """Paired input/output records ``(u(t), y(t)), t = 1..N``.

    When produced by the benchmark generator the true system is attached
    (truncated taps and the realized noise variance) so metrics can be
    computed against it.
    """

    u: np.ndarray
    y: np.ndarray
    b_true: np.ndarray | None = field(default=None)
    c_true: np.ndarray | None = field(default=None)
    sigma2_true: float | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "u", as_signal(self.u))
        object.__setattr__(self, "y", as_signal(self.y))
        if self.u.size != self.y.size:
            raise ValueError(
                f"u and y lengths differ: {self.u.size} vs {self.y.size}")

    @property
    def n(self) -> int:
        return self.y.size


def shift(x: np.ndarray, k: int) -> np.ndarray:
    """Delay ``x`` by ``k`` samples, padding the front with zeros."""
    if k == 0:
        return np.asarray(x, dtype=float)
    if k < 0:
        raise ValueError("only causal (non-negative) shifts are supported")
    out = np.zeros_like(x, dtype=float)
    if k < x.size:
        out[k:] = x[:-k]
    return out


def filter_poly(p, x) -> np.ndarray:
    """Causal FIR filter: out(t) = sum_k p_k x(t-k), zero pre-window."""
    p = as_poly(p)
    x = as_signal(x)
    return lfilter(p, [1.0], x)


def filter_rational(num, den, x) -> np.ndarray:
    """Causal IIR filter num/den with zero initial conditions.

    Implements the recursion
    ``out(t) = (1/d_0) * (sum_k n_k x(t-k) - sum_{k>=1} d_k out(t-k))``.
    """
    num = as_poly(num)
    den = as_poly(den)
    x = as_signal(x)
    if den[0] == 0.0:
        raise ValueError("den[0] = 0: the inverse filter is non-causal")
    return lfilter(num, den, x)


def square_wave(period: int, duty: float, lo: float, hi: float,
                n: int) -> np.ndarray:
    """Periodic square wave, ``hi`` for the first ceil(duty*period) samples
    of each period, ``lo`` for the rest."""
    if period < 2:
        raise ValueError("period must be >= 2")
    if not 0.0 < duty < 1.0:
        raise ValueError("duty must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be >= 1")
    n_hi = int(np.ceil(duty * period))
    phase = np.arange(n) % period
    return np.where(phase < n_hi, float(hi), float(lo))


def white_noise(variance: float, n: int, seed) -> np.ndarray:
    """i.i.d. Gaussian noise with the given variance, deterministic in
    ``seed`` (anything accepted by numpy's default_rng)."""
    if variance <= 0.0:
        raise ValueError("variance must be positive")
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, np.sqrt(variance), size=n)
