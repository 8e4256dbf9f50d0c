"""Command-line interface.

Subcommands: ``simulate`` (synthetic datasets), ``fit`` (full estimation
on a CSV dataset), ``evaluate`` (evidence surface over a hyperparameter
grid), ``benchmark`` (Monte Carlo estimator comparison) and ``metrics``
(AIR/COD between truth and estimate files).

Every command writes a flat key=value manifest next to its outputs with
the fully resolved configuration and seeds, sufficient to reproduce the
run.  Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import itertools
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, benchmark, kernels, pipeline, storage
from .evidence import laplace_nll
from .kernels import DC2, TC, HyperParams
from .model import residuals
from .signals import white_noise
from .storage import DataError, fmt

USAGE_ERROR = 1
DATA_ERROR = 2
NUMERICAL_ERROR = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _manifest_base(cmd: str, args_dict: dict) -> dict:
    entries = {"command": cmd, "version": __version__,
               "start_time": time.strftime("%Y-%m-%dT%H:%M:%S")}
    for key, v in sorted(args_dict.items()):
        if v is None:
            continue
        if isinstance(v, float):
            v = fmt(v)
        entries[f"arg.{key}"] = v
    return entries


def _finish_manifest(entries: dict, outputs: list, path):
    entries["end_time"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    entries["outputs"] = ";".join(str(p) for p in outputs)
    storage.write_manifest(path, entries)


def _parse_snr(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return np.inf
    v = float(text)
    if v <= 0:
        raise UsageError(f"snr must be positive or 'inf', got {text}")
    return v


def cmd_simulate(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lo, _, hi = args.poles.partition(":")
    pole_range = (float(lo), float(hi))
    snr = _parse_snr(args.snr)

    sys_true = benchmark.random_system(args.order, pole_range, args.T,
                                       args.seed)
    u_train = benchmark.square_wave(args.period, args.duty, args.lo,
                                    args.hi, args.N)
    train = benchmark.make_dataset(sys_true, u_train, snr,
                                   args.seed + 1_000_003)
    u_val = white_noise(1.0, args.Nv, args.seed + 2_000_003)
    val = benchmark.make_dataset(sys_true, u_val, snr,
                                 args.seed + 3_000_003)

    train_path = out / "train.csv"
    val_path = out / "validation.csv"
    truth_path = out / "truth.model"
    storage.write_timeseries_csv(train_path, train.u, train.y)
    storage.write_timeseries_csv(val_path, val.u, val.y)
    storage.write_model_text(truth_path, sys_true.theta(),
                             train.sigma2_true)

    entries = _manifest_base("simulate", vars(args))
    entries["sigma2_true"] = fmt(train.sigma2_true)
    _finish_manifest(entries, [train_path, val_path, truth_path],
                     out / "manifest.txt")
    return 0


def cmd_fit(args) -> int:
    data = storage.read_timeseries_csv(args.data)
    if data.n <= 4 * args.T:
        raise DataError(f"N = {data.n} must exceed 4T = {4 * args.T}")
    search = pipeline.SearchConfig(max_evals=args.max_evals)
    result = pipeline.fit(data, kind=args.kernel, T=args.T,
                          sigma2=args.sigma2, arx_order=args.arx_order,
                          search_cfg=search)

    out = Path(args.out_prefix)
    out.parent.mkdir(parents=True, exist_ok=True)
    model_path = Path(str(out) + ".model")
    trace_path = Path(str(out) + ".trace.csv")
    storage.write_model_text(model_path, result.theta_hat,
                             result.sigma2_hat)

    eta_names = ["lambda_b", "lambda_c", "beta_b", "beta_c"]
    if args.kernel == DC2:
        eta_names += ["alpha_b", "alpha_c"]
    rows = []
    for i, (eta, nll, conv) in enumerate(result.search_trace):
        row = {"eval": i, "nll_relative": nll, "converged": conv}
        row.update({k: getattr(eta, k) for k in eta_names})
        rows.append(row)
    storage.write_csv(trace_path,
                      ["eval"] + eta_names + ["nll_relative", "converged"],
                      rows)

    entries = _manifest_base("fit", vars(args))
    entries["sigma2_hat"] = fmt(result.sigma2_hat)
    entries["sigma2_overridden"] = "1" if result.sigma2_overridden else "0"
    for k in eta_names:
        entries[f"eta.{k}"] = fmt(getattr(result.eta_hat, k))
    entries["nll_relative"] = fmt(result.evidence.nll_relative)
    for stage, secs in result.timings.items():
        entries[f"seconds.{stage}"] = fmt(secs)
    _finish_manifest(entries, [model_path, trace_path],
                     Path(str(out) + ".manifest.txt"))
    return 0


def _grid_values(text: str) -> list:
    return [float(v) for v in text.split(",")]


def cmd_evaluate(args) -> int:
    data = storage.read_timeseries_csv(args.data)
    sigma2 = args.sigma2
    if sigma2 is None:
        sigma2 = pipeline.estimate_sigma2(data, args.arx_order)
    names = ["lambda_b", "lambda_c", "beta_b", "beta_c"]
    grids = [_grid_values(args.lambda_b), _grid_values(args.lambda_c),
             _grid_values(args.beta_b), _grid_values(args.beta_c)]
    if args.kernel == DC2:
        names += ["alpha_b", "alpha_c"]
        grids += [_grid_values(args.alpha_b), _grid_values(args.alpha_c)]

    rows = []
    warm = None
    for idx, combo in enumerate(itertools.product(*grids)):
        try:
            eta = HyperParams(kind=args.kernel, **dict(zip(names, combo)))
            inside = kernels.in_box(eta)
        except ValueError:
            inside = False
        if not inside:
            raise UsageError(
                f"grid point {idx} lies outside the feasible box: {combo}")
        ev = laplace_nll(eta, data, sigma2, args.T, warm_start=warm)
        warm = ev.theta_tilde
        row = dict(zip(names, combo))
        row.update({"nll": ev.nll, "nll_relative": ev.nll_relative,
                    "converged": ev.converged,
                    "gauss_newton_fallback": ev.gauss_newton_fallback})
        rows.append(row)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    storage.write_csv(out, names + ["nll", "nll_relative", "converged",
                                    "gauss_newton_fallback"], rows)
    entries = _manifest_base("evaluate", vars(args))
    entries["sigma2"] = fmt(sigma2)
    entries["n_points"] = str(len(rows))
    _finish_manifest(entries, [out], out.with_suffix(".manifest.txt"))
    return 0


def _load_benchmark_config(args) -> benchmark.BenchmarkConfig:
    base: dict = {}
    if args.preset == "desk":
        base = dict(n_runs=20, order=20)
    elif args.preset == "paper":
        base = {}
    if args.config:
        file_kv = storage.read_manifest(args.config)
        casts = {"n_runs": int, "order": int, "T": int, "N": int,
                 "N_v": int, "snr": float, "input_period": int,
                 "input_duty": float, "input_lo": float,
                 "input_hi": float, "baseline_max_order": int,
                 "master_seed": int, "max_evals": int, "workers": int}
        for key, v in file_kv.items():
            if key == "pole_range":
                lo, _, hi = v.partition(":")
                base[key] = (float(lo), float(hi))
            elif key == "estimators":
                base[key] = tuple(v.split(","))
            elif key in casts:
                base[key] = casts[key](v)
            else:
                raise UsageError(f"unknown config key {key!r}")
    overrides = {"n_runs": args.runs, "order": args.order, "T": args.T,
                 "N": args.N, "N_v": args.Nv, "master_seed": args.seed,
                 "workers": args.workers, "max_evals": args.max_evals,
                 "baseline_max_order": args.baseline_max_order}
    if args.snr is not None:
        overrides["snr"] = _parse_snr(args.snr)
    if args.poles is not None:
        lo, _, hi = args.poles.partition(":")
        overrides["pole_range"] = (float(lo), float(hi))
    if args.estimators is not None:
        overrides["estimators"] = tuple(args.estimators.split(","))
    base.update({k: v for k, v in overrides.items() if v is not None})
    return benchmark.BenchmarkConfig(**base)


def cmd_benchmark(args) -> int:
    cfg = _load_benchmark_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    rows = benchmark.monte_carlo(cfg)
    # wall-clock goes into a separate file so results.csv is reproducible
    # byte-for-byte from the master seed
    results_path = out / "results.csv"
    storage.write_csv(results_path,
                      ["run", "estimator", "air", "cod", "converged"],
                      rows)
    timings_path = out / "timings.csv"
    storage.write_csv(timings_path,
                      ["run", "estimator", "fit_seconds"], rows)
    summary_paths = []
    for metric in ("air", "cod"):
        summary = benchmark.boxplot_summary(rows, metric)
        p = out / f"boxplot_{metric}.csv"
        storage.write_csv(p, ["estimator", "metric", "median", "q1", "q3",
                              "lo_whisker", "hi_whisker", "n_outliers",
                              "n"], summary)
        summary_paths.append(p)

    entries = _manifest_base("benchmark", vars(args))
    for key, v in sorted(vars(cfg).items()):
        if key == "pole_range":
            v = f"{v[0]}:{v[1]}"
        elif key == "estimators":
            v = ",".join(v)
        elif isinstance(v, float):
            v = fmt(v)
        entries[f"config.{key}"] = v
    n_failed = sum(1 for r in rows if r.get("failed"))
    entries["n_failed"] = str(n_failed)
    _finish_manifest(entries, [results_path, timings_path, *summary_paths],
                     out / "manifest.txt")
    if rows and n_failed == len(rows):
        print("error: all benchmark runs failed", file=sys.stderr)
        return NUMERICAL_ERROR
    return 0


def cmd_metrics(args) -> int:
    theta_true, _ = storage.read_model_text(args.truth)
    theta_hat, _ = storage.read_model_text(args.estimate)
    if theta_true.T != theta_hat.T:
        raise DataError(f"tap-length mismatch: truth T = {theta_true.T}, "
                        f"estimate T = {theta_hat.T}")
    air_b = benchmark.air_single(theta_true.b, theta_hat.b)
    air_c = benchmark.air_single(theta_true.c, theta_hat.c)
    rows = [("AIR_b", air_b), ("AIR_c", air_c),
            ("AIR", 0.5 * (air_b + air_c))]
    if args.validation:
        val = storage.read_timeseries_csv(args.validation)
        yhat = val.y - residuals(theta_hat, val, check_stability=False)
        rows.append(("COD", benchmark.cod(val.y, yhat)))
    for name, v in rows:
        print(f"{name}={fmt(v)}")
    if args.out:
        storage.write_csv(args.out, ["metric", "value"],
                          [{"metric": n, "value": v} for n, v in rows])
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="maxpem",
                     description="Kernel-based PEM estimation of "
                                 "high-order MAX forward models")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--order", type=int, default=40)
    p.add_argument("--poles", default="0.8:0.9",
                   help="dominant pole modulus range lo:hi")
    p.add_argument("--T", type=int, default=50)
    p.add_argument("--N", type=int, default=2000)
    p.add_argument("--Nv", type=int, default=1000)
    p.add_argument("--snr", default="1")
    p.add_argument("--period", type=int, default=650)
    p.add_argument("--duty", type=float, default=0.5)
    p.add_argument("--lo", type=float, default=-0.5)
    p.add_argument("--hi", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="simulated")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the full estimation pipeline")
    p.add_argument("--data", required=True)
    p.add_argument("--kernel", choices=[TC, DC2], default=TC)
    p.add_argument("--T", type=int, default=50)
    p.add_argument("--sigma2", type=float, default=None,
                   help="skip the ARX noise-variance stage")
    p.add_argument("--arx-order", type=int, default=60)
    p.add_argument("--max-evals", type=int, default=300)
    p.add_argument("--out-prefix", default="fit")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate",
                       help="evidence surface over a hyperparameter grid")
    p.add_argument("--data", required=True)
    p.add_argument("--kernel", choices=[TC, DC2], default=TC)
    p.add_argument("--T", type=int, default=50)
    p.add_argument("--sigma2", type=float, default=None)
    p.add_argument("--arx-order", type=int, default=60)
    p.add_argument("--lambda-b", default="1")
    p.add_argument("--lambda-c", default="1")
    p.add_argument("--beta-b", default="0.8")
    p.add_argument("--beta-c", default="0.8")
    p.add_argument("--alpha-b", default="0.5")
    p.add_argument("--alpha-c", default="0.5")
    p.add_argument("--out", default="evidence.csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="Monte Carlo estimator sweep")
    p.add_argument("--preset", choices=["desk", "paper"], default=None)
    p.add_argument("--config", default=None,
                   help="flat key=value config file (flags win)")
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--T", type=int, default=None)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--Nv", type=int, default=None)
    p.add_argument("--snr", default=None)
    p.add_argument("--poles", default=None)
    p.add_argument("--estimators", default=None,
                   help="comma list from tc,dc2,bic,oracle")
    p.add_argument("--baseline-max-order", type=int, default=None)
    p.add_argument("--max-evals", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out-dir", default="benchmark_out")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("metrics", help="AIR/COD between truth and estimate")
    p.add_argument("--truth", required=True)
    p.add_argument("--estimate", required=True)
    p.add_argument("--validation", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except (RuntimeError, ValueError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
