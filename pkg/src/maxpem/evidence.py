"""Laplace-approximated negative log-marginal likelihood of the
hyperparameters, plus brute-force oracles for tiny tap counts.

With h(theta) the per-sample negative log-posterior, the marginal
likelihood integral is approximated around its mode theta_tilde by

    nll = N/(2 sigma2) V_N(theta_tilde)
          + 1/2 ||theta_tilde||^2_{K^{-1}} + 1/2 log|K|
          + 1/2 log|H| + kappa

where H is the 2T x 2T Hessian of h at theta_tilde and
kappa = T log N + (N/2) log(2 pi sigma2) collects all eta-independent
terms.  Optimizers only need ``nll_relative`` (nll minus kappa).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky
from scipy.signal import lfilter
from scipy.special import logsumexp

from .estimator import (InnerSolveConfig, InnerSolveResult, map_estimate,
                        regressor_matrix)
from .kernels import HyperParams, KernelMatrix, assemble_kernel
from .model import Theta, hessian_terms, jacobian, residuals
from .signals import Dataset, shift


@dataclass
class EvidenceValue:
    nll: float
    nll_relative: float
    theta_tilde: Theta
    hessian_logdet: float
    converged: bool
    gauss_newton_fallback: bool


def kappa_const(T: int, n: int, sigma2: float) -> float:
    """The eta-independent Laplace constant."""
    return T * np.log(n) + 0.5 * n * np.log(2.0 * np.pi * sigma2)


def hessian_of_h(theta: Theta, eta: HyperParams, data: Dataset,
                 sigma2: float, kern: KernelMatrix | None = None,
                 exact: bool = True) -> np.ndarray:
    """Hessian of h at ``theta``:
    H = 1/(sigma2 N) [Psi^T Psi + sum_t eps d2eps] + (1/N) K^{-1}.

    ``exact=False`` drops the second-order residual terms (Gauss-Newton).
    """
    if kern is None:
        kern = assemble_kernel(eta, theta.T)
    n = data.n
    eps = residuals(theta, data)
    psi = jacobian(theta, data, eps)
    H = psi.T @ psi
    if exact:
        H = H + hessian_terms(theta, data, eps)
    H = H / (sigma2 * n) + kern.inverse() / n
    return 0.5 * (H + H.T)


def laplace_nll(eta: HyperParams, data: Dataset, sigma2: float, T: int,
                warm_start: Theta | None = None,
                cfg: InnerSolveConfig | None = None,
                exact_hessian: bool = True,
                solve_result: InnerSolveResult | None = None
                ) -> EvidenceValue:
    """Evaluate the approximate negative log-marginal likelihood at eta.

    The inner MAP problem is re-solved (warm-started when a previous mode
    is supplied).  An indefinite exact Hessian falls back to the always
    positive-definite Gauss-Newton form and flags the evaluation.
    """
    if sigma2 <= 0.0:
        raise ValueError("sigma2 must be positive")
    kern = assemble_kernel(eta, T)
    if solve_result is None:
        solve_result = map_estimate(data, eta, sigma2, T,
                                    init=warm_start, cfg=cfg)
    theta = solve_result.theta
    n = data.n

    gn_fallback = False
    H = hessian_of_h(theta, eta, data, sigma2, kern, exact=exact_hessian)
    try:
        L = cholesky(H, lower=True)
    except np.linalg.LinAlgError:
        gn_fallback = True
        H = hessian_of_h(theta, eta, data, sigma2, kern, exact=False)
        try:
            L = cholesky(H, lower=True)
        except np.linalg.LinAlgError:
            # GN form is PSD by construction; only severe conditioning
            # can break the factorization, so jitter is safe here
            bump = 1e-12 * np.trace(H) / H.shape[0]
            L = cholesky(H + bump * np.eye(H.shape[0]), lower=True)
    h_logdet = 2.0 * float(np.sum(np.log(np.diag(L))))

    eps = residuals(theta, data)
    vn = float(eps @ eps) / n
    rel = n / (2.0 * sigma2) * vn \
        + 0.5 * kern.quad_form(theta.stacked()) \
        + 0.5 * kern.logdet + 0.5 * h_logdet
    return EvidenceValue(nll=rel + kappa_const(T, n, sigma2),
                         nll_relative=rel,
                         theta_tilde=theta,
                         hessian_logdet=h_logdet,
                         converged=solve_result.converged,
                         gauss_newton_fallback=gn_fallback)


def _joint_neg_log_const(kern: KernelMatrix, n: int, sigma2: float) -> float:
    """theta-independent part of the joint negative log-density."""
    return 0.5 * kern.logdet + kern.T * np.log(2.0 * np.pi) \
        + 0.5 * n * np.log(2.0 * np.pi * sigma2)


def marginal_nll_bruteforce(eta: HyperParams, data: Dataset, sigma2: float,
                            T: int, nodes_per_dim: int = 48,
                            width_stds: float = 8.0) -> float:
    """-log of the evidence integral by tensor-product quadrature.

    Gauss-Legendre nodes per dimension on a box of +/- ``width_stds``
    posterior standard deviations around the MAP point.  Guarded to
    2T <= 4; the c dimensions are enumerated on the grid while the b
    dimensions (in which the residual is linear) are evaluated in a
    single matrix product per c point.
    """
    if 2 * T > 4:
        raise ValueError("brute-force evidence only supports 2T <= 4")
    if nodes_per_dim < 40:
        raise ValueError("use at least 40 quadrature nodes per dimension")
    kern = assemble_kernel(eta, T)
    ev = laplace_nll(eta, data, sigma2, T)
    center = ev.theta_tilde.stacked()
    H = hessian_of_h(ev.theta_tilde, eta, data, sigma2, kern)
    post_cov = np.linalg.inv(data.n * H)
    stds = np.sqrt(np.diag(post_cov))

    x01, w01 = np.polynomial.legendre.leggauss(nodes_per_dim)
    grids, weights = [], []
    for i in range(2 * T):
        half = width_stds * stds[i]
        grids.append(center[i] + half * x01)
        weights.append(half * w01)
    log_w = [np.log(w) for w in weights]

    n = data.n
    Kinv = kern.inverse()
    const = _joint_neg_log_const(kern, n, sigma2)
    phi = regressor_matrix(data.u, T)  # N x T delayed-input regressors

    # b grid as one (nodes^T, T) batch with its summed log-weights
    b_axes = np.meshgrid(*grids[:T], indexing="ij")
    b_batch = np.stack([a.ravel() for a in b_axes], axis=1)
    lwb_axes = np.meshgrid(*log_w[:T], indexing="ij")
    lw_b = np.sum([a.ravel() for a in lwb_axes], axis=0)

    c_axes = np.meshgrid(*grids[T:], indexing="ij")
    c_batch = np.stack([a.ravel() for a in c_axes], axis=1)
    lwc_axes = np.meshgrid(*log_w[T:], indexing="ij")
    lw_c = np.sum([a.ravel() for a in lwc_axes], axis=0)

    chunks = []
    for ci in range(c_batch.shape[0]):
        cpoly = np.concatenate([[1.0], c_batch[ci]])
        ry = lfilter([1.0], cpoly, data.y)
        ru = np.column_stack(
            [lfilter([1.0], cpoly, phi[:, k]) for k in range(T)])
        # residuals for every b node at this c: eps = ry - ru @ b
        eps = ry[None, :] - b_batch @ ru.T
        sq = np.einsum("ij,ij->i", eps, eps)
        theta_full = np.hstack(
            [b_batch, np.repeat(c_batch[ci][None, :], b_batch.shape[0], 0)])
        quad = np.einsum("ij,jk,ik->i", theta_full, Kinv, theta_full)
        log_joint = -(sq / (2.0 * sigma2) + 0.5 * quad + const)
        chunks.append(logsumexp(log_joint + lw_b + lw_c[ci]))
    return -float(logsumexp(chunks))


def marginal_nll_monte_carlo(eta: HyperParams, data: Dataset, sigma2: float,
                             T: int, n_draws: int = 10 ** 6,
                             seed: int = 0,
                             chunk: int = 100_000) -> float:
    """-log of the evidence by plain Monte Carlo over the prior.

    Cross-check for the quadrature oracle: the evidence is the prior
    expectation of the likelihood, estimated from ``n_draws`` samples of
    theta ~ N(0, K).  Guarded to 2T <= 4.
    """
    if 2 * T > 4:
        raise ValueError("Monte Carlo evidence only supports 2T <= 4")
    kern = assemble_kernel(eta, T)
    rng = np.random.default_rng(seed)
    n = data.n
    phi = regressor_matrix(data.u, T)
    log_terms = []
    remaining = n_draws
    while remaining > 0:
        m = min(chunk, remaining)
        remaining -= m
        draws = kern.sample(rng, m)
        b, c = draws[:, :T], draws[:, T:]
        w = data.y[None, :] - b @ phi.T
        eps = np.empty_like(w)
        for t in range(n):
            acc = w[:, t].copy()
            for k in range(1, T + 1):
                if t - k >= 0:
                    acc -= c[:, k - 1] * eps[:, t - k]
            eps[:, t] = acc
        with np.errstate(over="ignore"):
            sq = np.einsum("ij,ij->i", eps, eps)
        loglik = -0.5 * n * np.log(2.0 * np.pi * sigma2) \
            - np.minimum(sq, 1e300) / (2.0 * sigma2)
        log_terms.append(logsumexp(loglik))
    return -float(logsumexp(log_terms) - np.log(n_draws))
