"""Inner MAP solver: Levenberg-Marquardt on the regularized PEM objective.

Minimizes J(theta) = V_N(theta) + (sigma2/N) * theta^T K^{-1} theta over
the stability region of C(z).  Gauss-Newton curvature is used inside LM
(the exact residual Hessian is reserved for the evidence computation);
any trial step leaving the stability region is halved before rejection.
Passing ``eta=None`` drops the prior term entirely, which is the plain
(unregularized) PEM used by the benchmark baselines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import HyperParams, KernelMatrix, assemble_kernel
from .model import (STABILITY_MARGIN, Theta, c_stable, jacobian,
                    reflect_stable, residuals, stable_poly)
from .signals import Dataset, shift


@dataclass
class InnerSolveConfig:
    max_iters: int = 200
    grad_tol: float = 1e-8
    step_tol: float = 1e-10
    obj_tol: float = 1e-14
    lm_damping_init: float = 1e-3
    stability_margin: float = STABILITY_MARGIN
    max_halvings: int = 30
    max_damping: float = 1e14
    multi_start: int = 0          # extra starts with perturbed c
    multi_start_scale: float = 0.05
    multi_start_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.stability_margin < 1.0:
            raise ValueError("stability_margin must be in (0, 1)")
        for name in ("max_iters", "grad_tol", "step_tol", "lm_damping_init"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class InnerSolveResult:
    theta: Theta
    objective: float
    iterations: int
    converged: bool
    final_gradient_norm: float


def regressor_matrix(u: np.ndarray, T: int) -> np.ndarray:
    """Delayed-input regressor Phi with Phi[t-1, k] = u(t-1-k)."""
    cols = np.empty((u.size, T))
    for k in range(T):
        cols[:, k] = shift(u, 1 + k)
    return cols


def ridge_fir(data: Dataset, T: int, sigma2: float,
              Kb: np.ndarray | None) -> np.ndarray:
    """Closed-form b for the c = 0 (pure FIR) problem.

    Solves (Phi^T Phi + sigma2 * Kb^{-1}) b = Phi^T y; with ``Kb=None``
    this degenerates to least squares (tiny ridge for rank safety).
    """
    phi = regressor_matrix(data.u, T)
    A = phi.T @ phi
    if Kb is not None:
        A = A + sigma2 * np.linalg.inv(Kb)
    else:
        A = A + 1e-10 * np.eye(T) * max(np.trace(A) / T, 1.0)
    return np.linalg.solve(A, phi.T @ data.y)


def initialize_theta(data: Dataset, eta: HyperParams | None,
                     sigma2: float, T: int) -> Theta:
    """FIR-ridge initial b, c = 0 (always stable)."""
    Kb = None
    if eta is not None:
        Kb = assemble_kernel(eta, T).K[:T, :T]
    b = ridge_fir(data, T, sigma2, Kb)
    return Theta(b, np.zeros(T))


def objective_value(theta: Theta, data: Dataset, sigma2: float,
                    kern: KernelMatrix | None,
                    eps: np.ndarray | None = None) -> float:
    """J(theta) = V_N + (sigma2/N) ||theta||^2_{K^{-1}}."""
    if eps is None:
        eps = residuals(theta, data, check_stability=False)
    J = float(eps @ eps) / data.n
    if kern is not None:
        J += sigma2 / data.n * kern.quad_form(theta.stacked())
    return J


def objective_h(theta: Theta, eta: HyperParams, data: Dataset,
                sigma2: float, kern: KernelMatrix | None = None) -> float:
    """Per-sample negative log-posterior
    h = (1/2 sigma2) V_N + (1/2N) ||theta||^2_{K^{-1}} + (1/2N) log|K|.
    """
    if kern is None:
        kern = assemble_kernel(eta, theta.T)
    eps = residuals(theta, data)
    n = data.n
    return float(eps @ eps) / (2.0 * sigma2 * n) \
        + kern.quad_form(theta.stacked()) / (2.0 * n) \
        + kern.logdet / (2.0 * n)


def _lm_solve(data: Dataset, sigma2: float, T: int,
              kern: KernelMatrix | None, theta0: Theta,
              cfg: InnerSolveConfig,
              free_mask: np.ndarray | None = None) -> InnerSolveResult:
    n = data.n
    Kinv = kern.inverse() if kern is not None else None
    free = np.ones(2 * T, dtype=bool) if free_mask is None \
        else np.asarray(free_mask, dtype=bool)
    theta = theta0
    stable, _ = c_stable(theta, cfg.stability_margin)
    if not stable:
        raise ValueError("initial theta has unstable C(z)")

    eps = residuals(theta, data, check_stability=False)
    J = objective_value(theta, data, sigma2, kern, eps)
    mu = cfg.lm_damping_init
    grad_norm = np.inf
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        psi = jacobian(theta, data, eps)
        grad = 2.0 / n * (psi.T @ eps)
        A = 2.0 / n * (psi.T @ psi)
        if Kinv is not None:
            grad = grad + 2.0 * sigma2 / n * (Kinv @ theta.stacked())
            A = A + 2.0 * sigma2 / n * Kinv
        grad_norm = float(np.max(np.abs(grad[free])))
        if grad_norm <= cfg.grad_tol * max(1.0, abs(J)):
            converged = True
            break

        accepted = False
        Af = A[np.ix_(free, free)]
        gf = grad[free]
        while mu <= cfg.max_damping:
            try:
                df = np.linalg.solve(Af + mu * np.eye(Af.shape[0]), -gf)
            except np.linalg.LinAlgError:
                mu *= 2.0
                continue
            delta = np.zeros(2 * T)
            delta[free] = df
            step = delta
            scale = 1.0 + np.linalg.norm(theta.stacked())
            trial = None
            for _ in range(cfg.max_halvings + 1):
                cand = Theta.from_stacked(theta.stacked() + step)
                if stable_poly(cand.c, cfg.stability_margin):
                    trial = cand
                    break
                step = 0.5 * step
            if trial is None:
                if np.linalg.norm(step) / scale <= 1e-6:
                    # not even a tiny fraction of the step stays inside
                    # the stability region: the iterate is pinned on the
                    # boundary and no damping level will free it
                    converged = True
                    break
                # the halved step is still macroscopic (the undamped
                # proposal was huge); more damping may tame it
                mu *= 2.0
                continue
            rel_step = np.linalg.norm(step) / scale
            eps_t = residuals(trial, data, check_stability=False)
            J_t = objective_value(trial, data, sigma2, kern, eps_t)
            if np.isfinite(J_t) and J_t < J:
                gain = J - J_t
                theta, eps, J = trial, eps_t, J_t
                mu = max(mu / 3.0, 1e-12)
                accepted = True
                if rel_step <= cfg.step_tol or \
                        gain <= cfg.obj_tol * max(1.0, abs(J)):
                    converged = True
                break
            if rel_step <= cfg.step_tol:
                # the damped step is already below resolution and still
                # does not decrease J: numerical floor
                converged = True
                break
            mu *= 2.0
        if not accepted:
            break
        if converged:
            break

    return InnerSolveResult(theta=theta, objective=J, iterations=it,
                            converged=converged,
                            final_gradient_norm=grad_norm)


def map_estimate(data: Dataset, eta: HyperParams | None, sigma2: float,
                 T: int, init: Theta | None = None,
                 cfg: InnerSolveConfig | None = None,
                 free_mask: np.ndarray | None = None) -> InnerSolveResult:
    """MAP estimate of theta for fixed hyperparameters and noise variance.

    ``eta=None`` solves the unregularized PEM problem.  A user-supplied
    ``init`` with unstable C is sanitized by root reflection; the default
    start is the FIR-ridge initializer.  ``free_mask`` (length 2T) pins
    the masked-out stacked coordinates at their initial values, which is
    how the benchmark fits unequal b/c orders.
    """
    if sigma2 <= 0.0:
        raise ValueError("sigma2 must be positive")
    if data.n <= 4 * T:
        import warnings
        warnings.warn(f"N = {data.n} does not exceed 4T = {4 * T}; "
                      "transient error may dominate the fit")
    cfg = cfg or InnerSolveConfig()
    kern = assemble_kernel(eta, T) if eta is not None else None
    if init is not None:
        if init.T != T:
            raise ValueError(f"init has T = {init.T}, expected {T}")
        theta0 = Theta(init.b, reflect_stable(init.c, cfg.stability_margin))
    else:
        theta0 = initialize_theta(data, eta, sigma2, T)

    if free_mask is not None:
        masked = theta0.stacked()
        masked[~np.asarray(free_mask, dtype=bool)] = 0.0
        theta0 = Theta.from_stacked(masked)

    best = _lm_solve(data, sigma2, T, kern, theta0, cfg, free_mask)
    if cfg.multi_start > 0:
        rng = np.random.default_rng(cfg.multi_start_seed)
        for _ in range(cfg.multi_start):
            c_pert = reflect_stable(
                theta0.c + cfg.multi_start_scale * rng.standard_normal(T),
                cfg.stability_margin)
            res = _lm_solve(data, sigma2, T, kern,
                            Theta(theta0.b, c_pert), cfg, free_mask)
            if res.objective < best.objective:
                best = res
    return best
