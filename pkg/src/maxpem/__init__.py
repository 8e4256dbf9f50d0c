"""Kernel-based PEM estimation of high-order MAX forward models."""

__version__ = "0.1.0"

from .benchmark import (BenchmarkConfig, TrueSystem, air, air_single,
                        baseline_pem, cod, desk_config, make_dataset,
                        monte_carlo, paper_config, prior_correlation_demo,
                        random_system)
from .estimator import (InnerSolveConfig, InnerSolveResult,
                        initialize_theta, map_estimate, objective_h)
from .evidence import (EvidenceValue, hessian_of_h, laplace_nll,
                       marginal_nll_bruteforce, marginal_nll_monte_carlo)
from .kernels import (DC2, TC, HyperParams, KernelMatrix, assemble_kernel,
                      dc2_kernel, tc_kernel)
from .model import (MaxModel, Theta, c_stable, hessian_terms, jacobian,
                    residuals, simulate, truncate_ir, v_n)
from .pipeline import (FitResult, SearchConfig, estimate_sigma2, fit,
                       optimize_eta)
from .signals import (Dataset, filter_poly, filter_rational, square_wave,
                      white_noise)

__all__ = [
    "BenchmarkConfig", "Dataset", "DC2", "EvidenceValue", "FitResult",
    "HyperParams", "InnerSolveConfig", "InnerSolveResult", "KernelMatrix",
    "MaxModel", "SearchConfig", "TC", "Theta", "TrueSystem",
    "air", "air_single", "assemble_kernel", "baseline_pem", "c_stable",
    "cod", "dc2_kernel", "desk_config", "estimate_sigma2", "filter_poly",
    "filter_rational", "fit", "hessian_of_h", "hessian_terms",
    "initialize_theta", "jacobian", "laplace_nll", "make_dataset",
    "map_estimate", "marginal_nll_bruteforce", "marginal_nll_monte_carlo",
    "monte_carlo", "objective_h", "optimize_eta", "paper_config",
    "prior_correlation_demo", "random_system", "residuals", "simulate",
    "square_wave", "tc_kernel", "truncate_ir", "v_n", "white_noise",
]
