"""High-order MAX model: simulation, prediction-error recursion and
analytic derivatives.

The model is
    y(t) = sum_{k=0}^{T-1} b_k u(t-1-k) + e(t) + sum_{k=1}^{T} c_k e(t-k)
with monic noise polynomial C(z) = 1 + c_1 z^-1 + ... + c_T z^-T.  The
one-step prediction error is the recursion
    eps(t) = y(t) - sum_k b_k u(t-1-k) - sum_k c_k eps(t-k)
with zero initial conditions, equivalently eps = C^{-1} (y - B(z) u(t-1)).
All derivative formulas below follow from differentiating that identity;
shifts commute with the filters because of the zero pre-window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .signals import Dataset, as_signal, shift

# Roots of C with modulus >= this margin count as unstable; the Laplace
# Hessian degrades near the boundary.
STABILITY_MARGIN = 1.0 - 1e-6


@dataclass(frozen=True)
class Theta:
    """Stacked MAX coefficients: b_0..b_{T-1} and c_1..c_T (c_0 = 1)."""

    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        c = np.asarray(self.c, dtype=float)
        if b.ndim != 1 or c.ndim != 1:
            raise ValueError("b and c must be 1-D")
        if b.size != c.size:
            raise ValueError(f"b and c lengths differ: {b.size} vs {c.size}")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ValueError("theta has non-finite entries")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def T(self) -> int:
        return self.b.size

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.b, self.c])

    @classmethod
    def from_stacked(cls, vec: np.ndarray) -> "Theta":
        vec = np.asarray(vec, dtype=float)
        if vec.size % 2 != 0:
            raise ValueError("stacked theta must have even length")
        T = vec.size // 2
        return cls(vec[:T].copy(), vec[T:].copy())

    @classmethod
    def zeros(cls, T: int) -> "Theta":
        return cls(np.zeros(T), np.zeros(T))

    def c_poly(self) -> np.ndarray:
        """Coefficients of the monic C(z): [1, c_1, ..., c_T]."""
        return np.concatenate([[1.0], self.c])


@dataclass(frozen=True)
class MaxModel:
    theta: Theta
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0.0:
            raise ValueError("sigma2 must be positive")


def c_roots(theta_or_c) -> np.ndarray:
    """Roots of C(z) = 1 + c_1 z^-1 + ... + c_T z^-T in the z-plane."""
    c = theta_or_c.c if isinstance(theta_or_c, Theta) else \
        np.asarray(theta_or_c, dtype=float)
    poly = np.concatenate([[1.0], c])
    poly = np.trim_zeros(poly, "b")
    if poly.size <= 1:
        return np.zeros(0, dtype=complex)
    return np.roots(poly)


def c_stable(theta_or_c, margin: float = STABILITY_MARGIN):
    """Whether all roots of C lie strictly inside the margin circle.

    Returns (stable, root_moduli).
    """
    roots = c_roots(theta_or_c)
    moduli = np.abs(roots)
    return bool(np.all(moduli < margin)), moduli


def stable_poly(c, margin: float = STABILITY_MARGIN) -> bool:
    """Schur-Cohn test: True iff all roots of C lie inside the margin circle.

    Root-free O(T^2) reduction, so it is much cheaper than ``c_stable``
    inside the optimizer's trial-step loop.  The margin is absorbed by
    rescaling coefficient k with margin^-k, which maps the margin circle
    onto the unit circle.
    """
    c = np.asarray(c, dtype=float)
    a = np.concatenate([[1.0], c])
    a = np.trim_zeros(a, "b")  # trailing zeros are roots at the origin
    if a.size <= 1:
        return True
    # keep a[0] = 1 through the reduction so the root condition is just
    # |a_m| < 1 at every stage
    v = a * margin ** -np.arange(a.size, dtype=float)
    for m in range(v.size - 1, 0, -1):
        am = float(v[m])
        if not abs(am) < 1.0:  # also catches nan from a degenerate stage
            return False
        d = 1.0 - am * am
        if d <= 0.0 or not np.isfinite(d):
            return bool(c_stable(c, margin)[0])
        v = (v[:m] - am * v[m:0:-1]) / d
    return True


def reflect_stable(c: np.ndarray, margin: float = STABILITY_MARGIN
                   ) -> np.ndarray:
    """Sanitize a c vector by reflecting offending roots inside the circle.

    Only for user-supplied initial values; the optimizer itself never
    reflects because reflection changes the predictor.
    """
    c = np.asarray(c, dtype=float)
    stable, _ = c_stable(c, margin)
    if stable:
        return c.copy()
    roots = c_roots(c)
    target = 0.99 * margin
    fixed = []
    for r in roots:
        m = abs(r)
        if m >= margin:
            r = r / m ** 2  # reflect through the unit circle
            if abs(r) >= margin:
                r = r * target / abs(r)
        fixed.append(r)
    poly = np.real(np.poly(fixed))
    out = np.zeros_like(c)
    out[:poly.size - 1] = poly[1:]
    return out


def simulate(model_or_theta, u, e) -> np.ndarray:
    """Noise-driven simulation y = B(z) u(t-1) + C(z) e(t)."""
    theta = model_or_theta.theta if isinstance(model_or_theta, MaxModel) \
        else model_or_theta
    u = as_signal(u)
    e = as_signal(e)
    if u.size != e.size:
        raise ValueError(f"u and e lengths differ: {u.size} vs {e.size}")
    return lfilter(theta.b, [1.0], shift(u, 1)) \
        + lfilter(theta.c_poly(), [1.0], e)


def residuals(theta: Theta, data: Dataset, check_stability: bool = True
              ) -> np.ndarray:
    """One-step prediction errors eps(t), t = 1..N."""
    if check_stability:
        stable, moduli = c_stable(theta)
        if not stable:
            raise ValueError(
                f"C(z) is unstable (max root modulus {moduli.max():.6f})")
    w = data.y - lfilter(theta.b, [1.0], shift(data.u, 1))
    return lfilter([1.0], theta.c_poly(), w)


def predict_one_step(theta: Theta, data: Dataset) -> np.ndarray:
    """yhat(t | t-1) = y(t) - eps(t)."""
    return data.y - residuals(theta, data)


def v_n(theta: Theta, data: Dataset) -> float:
    """Average squared prediction error V_N = (1/N) sum eps^2."""
    eps = residuals(theta, data)
    return float(eps @ eps) / data.n


def _shifted_columns(s: np.ndarray, shifts) -> np.ndarray:
    cols = np.empty((s.size, len(shifts)))
    for i, k in enumerate(shifts):
        cols[:, i] = shift(s, k)
    return cols


def jacobian(theta: Theta, data: Dataset, eps: np.ndarray | None = None
             ) -> np.ndarray:
    """N x 2T matrix of d eps / d theta.

    d eps / d b_k (t) = -[C^{-1} u](t-1-k)
    d eps / d c_k (t) = -[C^{-1} eps](t-k)
    """
    if eps is None:
        eps = residuals(theta, data)
    cpoly = theta.c_poly()
    T = theta.T
    s = lfilter([1.0], cpoly, shift(data.u, 1))   # C^{-1} u(t-1)
    g = lfilter([1.0], cpoly, eps)                # C^{-1} eps
    Jb = -_shifted_columns(s, range(T))
    Jc = -_shifted_columns(g, range(1, T + 1))
    return np.hstack([Jb, Jc])


def hessian_terms(theta: Theta, data: Dataset,
                  eps: np.ndarray | None = None) -> np.ndarray:
    """Curvature correction sum_t eps(t) * d2 eps(t) / d theta d theta^T.

    Second derivatives of the residual:
        d2 eps / d b_j d b_k = 0                      (eps linear in b)
        d2 eps / d b_j d c_k (t) = [C^{-2} u](t-1-j-k)
        d2 eps / d c_j d c_k (t) = 2 [C^{-2} eps](t-j-k)
    The entries depend on j + k only, so each block is a Hankel matrix of
    lagged inner products with eps.
    """
    if eps is None:
        eps = residuals(theta, data)
    cpoly = theta.c_poly()
    T = theta.T
    n = data.n
    q = lfilter([1.0], cpoly,
                lfilter([1.0], cpoly, shift(data.u, 1)))  # C^{-2} u(t-1)
    r = lfilter([1.0], cpoly, lfilter([1.0], cpoly, eps))  # C^{-2} eps

    def lagged_dots(v, max_lag):
        out = np.zeros(max_lag + 1)
        for d in range(max_lag + 1):
            if d < n:
                out[d] = eps[d:] @ v[:n - d]
        return out

    mq = lagged_dots(q, 2 * T - 1)
    mr = lagged_dots(r, 2 * T)
    jj = np.arange(T)
    # bc block: rows j = 0..T-1 (tap b_j), cols k = 1..T (tap c_k), lag j+k
    Mbc = mq[np.add.outer(jj, jj + 1)]
    Mcc = 2.0 * mr[np.add.outer(jj + 1, jj + 1)]
    M = np.zeros((2 * T, 2 * T))
    M[:T, T:] = Mbc
    M[T:, :T] = Mbc.T
    M[T:, T:] = Mcc
    return M


def truncate_ir(num, den, T: int) -> np.ndarray:
    """First T impulse-response taps of num(z)/den(z) by long division."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    if den[0] == 0.0:
        raise ValueError("den[0] = 0: non-causal transfer function")
    roots = np.roots(np.trim_zeros(den, "b")) if \
        np.trim_zeros(den, "b").size > 1 else np.zeros(0)
    if roots.size and np.max(np.abs(roots)) >= 1.0:
        raise ValueError("den has roots on or outside the unit circle")
    x = np.zeros(T)
    x[0] = 1.0
    return lfilter(num, den, x)
