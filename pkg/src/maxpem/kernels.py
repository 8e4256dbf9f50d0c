"""TC and DC2 prior covariances and the block-diagonal kernel matrix.

The prior on the stacked tap vector ``theta = [b; c]`` is zero-mean
Gaussian with covariance ``K = blockdiag(lambda_b * K_b, lambda_c * K_c)``
where each block is a TC or DC2 kernel of size T x T.  Row ``r`` of a
block corresponds to the r-th element of the stacked vector (b_0..b_{T-1}
for the first block, c_1..c_T for the second).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular

TC = "tc"
DC2 = "dc2"

# Feasible box for the hyperparameter search; the open intervals of the
# prior are tightened so factorizations stay finite.
LAMBDA_BOUNDS = (1e-6, 1e6)
BETA_BOUNDS = (1e-3, 1.0 - 1e-3)
ALPHA_BOUNDS = (1e-3, 1.0 - 1e-3)


@dataclass(frozen=True)
class HyperParams:
    """Kernel kind plus scale/decay (and DC2 smoothness) hyperparameters."""

    kind: str
    lambda_b: float
    lambda_c: float
    beta_b: float
    beta_c: float
    alpha_b: float | None = None
    alpha_c: float | None = None

    def __post_init__(self):
        if self.kind not in (TC, DC2):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        for name in ("lambda_b", "lambda_c"):
            v = getattr(self, name)
            if not (0.0 < v < np.inf):
                raise ValueError(f"{name} must be in (0, inf), got {v}")
        for name in ("beta_b", "beta_c"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ValueError(f"{name} must be in (0, 1), got {v}")
        if self.kind == DC2:
            if self.alpha_b is None or self.alpha_c is None:
                raise ValueError("DC2 kernel requires alpha_b and alpha_c")
            for name in ("alpha_b", "alpha_c"):
                v = getattr(self, name)
                if not (0.0 <= v < 1.0):
                    raise ValueError(f"{name} must be in [0, 1), got {v}")

    @property
    def n_params(self) -> int:
        return 6 if self.kind == DC2 else 4

    def as_dict(self) -> dict:
        d = {"kind": self.kind, "lambda_b": self.lambda_b,
             "lambda_c": self.lambda_c, "beta_b": self.beta_b,
             "beta_c": self.beta_c}
        if self.kind == DC2:
            d["alpha_b"] = self.alpha_b
            d["alpha_c"] = self.alpha_c
        return d


def tc_kernel(beta: float, T: int) -> np.ndarray:
    """TC kernel: entry (i, j) = beta^max(i, j), 1-based indices."""
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must be in (0, 1), got {beta}")
    if T < 1:
        raise ValueError("T must be >= 1")
    idx = np.arange(1, T + 1)
    return beta ** np.maximum.outer(idx, idx)


def dc2_kernel(beta: float, alpha: float, T: int) -> np.ndarray:
    """Second-order diagonal-correlated kernel; collapses to TC at alpha=0.

    Entry (i, j) =
        beta^max(i,j) * (1 - (1-beta) * alpha^(|i-j|+1))
        - alpha^2 * beta^(max(i,j)+1)
    """
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must be in (0, 1), got {beta}")
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    if T < 1:
        raise ValueError("T must be >= 1")
    idx = np.arange(1, T + 1)
    mx = np.maximum.outer(idx, idx)
    gap = np.abs(np.subtract.outer(idx, idx))
    bmax = beta ** mx
    return bmax * (1.0 - (1.0 - beta) * alpha ** (gap + 1)) \
        - alpha ** 2 * beta * bmax


def _kernel_block(kind: str, beta: float, alpha, T: int) -> np.ndarray:
    if kind == TC:
        return tc_kernel(beta, T)
    return dc2_kernel(beta, alpha, T)


def _chol_with_jitter(block: np.ndarray, label: str):
    """Lower Cholesky factor with bounded jitter escalation.

    Starts at 1e-10 * mean diagonal scale and escalates x10 at most three
    times; near-singular kernels occur at beta -> 1 during the search.
    """
    base = 1e-10 * np.trace(block) / block.shape[0]
    jitter = 0.0
    for attempt in range(4):
        try:
            L = cholesky(block + jitter * np.eye(block.shape[0]), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            pass
        except Exception:
            pass
        jitter = base * 10.0 ** attempt if jitter == 0.0 else jitter * 10.0
    raise np.linalg.LinAlgError(
        f"Cholesky failed for kernel block {label!r} even with jitter "
        f"{jitter:.3e}")


class KernelMatrix:
    """Block-diagonal prior covariance with cached factorization.

    Attributes
    ----------
    K : (2T, 2T) ndarray
        The full covariance.
    chol : (2T, 2T) ndarray
        Lower-triangular factor, chol @ chol.T = K (up to jitter).
    logdet : float
        log |K| from the factor diagonal.
    """

    def __init__(self, eta: HyperParams, T: int):
        if T < 1:
            raise ValueError("T must be >= 1")
        self.eta = eta
        self.T = T
        Kb = eta.lambda_b * _kernel_block(eta.kind, eta.beta_b,
                                          eta.alpha_b, T)
        Kc = eta.lambda_c * _kernel_block(eta.kind, eta.beta_c,
                                          eta.alpha_c, T)
        Lb, jb = _chol_with_jitter(Kb, "b")
        Lc, jc = _chol_with_jitter(Kc, "c")
        self.K = np.block([[Kb, np.zeros((T, T))], [np.zeros((T, T)), Kc]])
        self.chol = np.block([[Lb, np.zeros((T, T))],
                              [np.zeros((T, T)), Lc]])
        self.logdet = 2.0 * np.sum(np.log(np.diag(self.chol)))
        self.jitter = max(jb, jc)
        self._inv = None

    @property
    def dim(self) -> int:
        return 2 * self.T

    def solve(self, v: np.ndarray) -> np.ndarray:
        """K^{-1} v via two triangular solves."""
        z = solve_triangular(self.chol, v, lower=True)
        return solve_triangular(self.chol.T, z, lower=False)

    def inverse(self) -> np.ndarray:
        """Dense K^{-1}, cached (needed by the Gauss-Newton system)."""
        if self._inv is None:
            self._inv = self.solve(np.eye(self.dim))
            self._inv = 0.5 * (self._inv + self._inv.T)
        return self._inv

    def quad_form(self, theta: np.ndarray) -> float:
        """theta^T K^{-1} theta, always >= 0."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(
                f"theta has shape {theta.shape}, expected ({self.dim},)")
        z = solve_triangular(self.chol, theta, lower=True)
        return float(z @ z)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` prior samples, shape (size, 2T)."""
        z = rng.standard_normal((size, self.dim))
        return z @ self.chol.T


def assemble_kernel(eta: HyperParams, T: int) -> KernelMatrix:
    """Build the 2T x 2T block-diagonal prior covariance for ``eta``."""
    return KernelMatrix(eta, T)


def clip_to_box(eta: HyperParams) -> HyperParams:
    """Project hyperparameters into the tightened feasible box."""
    def cl(v, lohi):
        return float(np.clip(v, *lohi))

    kw = dict(kind=eta.kind,
              lambda_b=cl(eta.lambda_b, LAMBDA_BOUNDS),
              lambda_c=cl(eta.lambda_c, LAMBDA_BOUNDS),
              beta_b=cl(eta.beta_b, BETA_BOUNDS),
              beta_c=cl(eta.beta_c, BETA_BOUNDS))
    if eta.kind == DC2:
        kw["alpha_b"] = cl(eta.alpha_b, ALPHA_BOUNDS)
        kw["alpha_c"] = cl(eta.alpha_c, ALPHA_BOUNDS)
    return HyperParams(**kw)


def in_box(eta: HyperParams) -> bool:
    """True if ``eta`` lies inside the tightened feasible box."""
    ok = (LAMBDA_BOUNDS[0] <= eta.lambda_b <= LAMBDA_BOUNDS[1]
          and LAMBDA_BOUNDS[0] <= eta.lambda_c <= LAMBDA_BOUNDS[1]
          and BETA_BOUNDS[0] <= eta.beta_b <= BETA_BOUNDS[1]
          and BETA_BOUNDS[0] <= eta.beta_c <= BETA_BOUNDS[1])
    if eta.kind == DC2:
        ok = ok and (ALPHA_BOUNDS[0] <= eta.alpha_b <= ALPHA_BOUNDS[1]
                     and ALPHA_BOUNDS[0] <= eta.alpha_c <= ALPHA_BOUNDS[1])
    return ok
