"""Command-line driver: CSV in, estimates or simulation summaries out.

Exit codes: 0 success, 1 malformed input or flags, 2 estimation
failure (the underlying error message is printed verbatim).
"""

from __future__ import annotations

import argparse
import json
import sys

import pandas as pd

from .model import (
    EstimandSpec,
    EstimationConfig,
    EstimationError,
    InputError,
    PanelSample,
)
from .pipeline import RunReport, estimate_atet
from .simulation import METHODS, monte_carlo, replication_seed, simulate_panel, simulate_rcs

_PS_FLAGS = {"linear": "linear_normal", "loglinear": "loglinear_normal"}


class _Parser(argparse.ArgumentParser):
    """argparse with flag errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_sample_csv(sample, path) -> None:
    """Emit a dataset in the column schema the estimate command reads."""
    lag_cols = [f"d_lag{j}" for j in sample.history_lags]
    x_cols = [f"x{j}" for j in range(1, sample.x.shape[1] + 1)]
    panel = isinstance(sample, PanelSample)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if panel:
            fh.write(",".join(["y_pre", "y_post", "d", *lag_cols, *x_cols]) + "\n")
            for i in range(sample.n):
                cells = [_fmt(sample.y_pre[i]), _fmt(sample.y_post[i]), _fmt(sample.d[i])]
                cells += [_fmt(v) for v in sample.history[i]]
                cells += [_fmt(v) for v in sample.x[i]]
                fh.write(",".join(cells) + "\n")
        else:
            fh.write(",".join(["y", "d", "t", *lag_cols, *x_cols]) + "\n")
            for i in range(sample.n):
                cells = [_fmt(sample.y[i]), _fmt(sample.d[i]), str(int(sample.period[i]))]
                cells += [_fmt(v) for v in sample.history[i]]
                cells += [_fmt(v) for v in sample.x[i]]
                fh.write(",".join(cells) + "\n")


def build_parser() -> _Parser:
    parser = _Parser(prog="didcont", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate an ATET dose contrast from a CSV")
    est.add_argument("--data", required=True, help="input CSV path")
    est.add_argument("--design", required=True, choices=["rcs", "panel"])
    est.add_argument("--d", required=True, type=float, help="treated dose")
    est.add_argument("--dprime", required=True, type=float, help="control dose")
    est.add_argument("--t", type=int, default=1, help="outcome period label")
    est.add_argument("--lag", type=int, default=0)
    est.add_argument("--bandwidth", type=float, default=None)
    est.add_argument("--undersmooth", type=float, default=1.0)
    est.add_argument("--kernel", default="epanechnikov", choices=["epanechnikov", "gaussian"])
    est.add_argument("--folds", type=int, default=3)
    est.add_argument("--trim", type=float, default=0.1)
    est.add_argument("--ps-model", default="linear", choices=sorted(_PS_FLAGS))
    est.add_argument("--bootstrap", type=int, default=0, metavar="B")
    est.add_argument("--alpha", type=float, default=0.05)
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--out", default="table", choices=["table", "json", "csv"])

    sim = sub.add_parser("simulate", help="Monte Carlo summary over synthetic replications")
    sim.add_argument("--design", required=True, choices=["rcs", "panel"])
    sim.add_argument("--n", required=True, type=int)
    sim.add_argument("--p", required=True, type=int)
    sim.add_argument("--reps", required=True, type=int)
    sim.add_argument(
        "--method",
        required=True,
        action="append",
        choices=sorted(METHODS),
        help="repeat for several rows",
    )
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", default="table", choices=["table", "json", "csv"])
    sim.add_argument("--emit-data", default=None, metavar="PATH")
    return parser


_REPORT_COLS = (
    "schema_version",
    "design",
    "d",
    "dprime",
    "t",
    "lag",
    "n",
    "alpha",
    "folds",
    "kernel",
    "bandwidth",
    "undersmooth",
    "trim",
    "ps_model",
    "seed",
    "delta_hat",
    "se",
    "ci_low",
    "ci_high",
    "h_used",
    "n_trimmed_per_group",
    "n_effective",
    "bootstrap_b",
    "boot_ci_low",
    "boot_ci_high",
)


def _report_row(report: RunReport) -> dict:
    est, cfg, target = report.estimate, report.config, report.estimand
    return {
        "schema_version": str(report.schema_version),
        "design": report.design,
        "d": _fmt(target.d_treat),
        "dprime": _fmt(target.d_control),
        "t": str(target.t),
        "lag": str(target.lag),
        "n": str(report.n),
        "alpha": _fmt(report.alpha),
        "folds": str(cfg.folds),
        "kernel": cfg.kernel,
        "bandwidth": "" if cfg.bandwidth is None else _fmt(cfg.bandwidth),
        "undersmooth": _fmt(cfg.undersmooth_factor),
        "trim": _fmt(cfg.trim_threshold),
        "ps_model": cfg.ps_family,
        "seed": str(cfg.seed),
        "delta_hat": _fmt(est.delta_hat),
        "se": _fmt(est.se),
        "ci_low": _fmt(est.ci_low),
        "ci_high": _fmt(est.ci_high),
        "h_used": _fmt(est.h_used),
        "n_trimmed_per_group": ";".join(str(k) for k in est.n_trimmed_per_group),
        "n_effective": str(est.n_effective),
        "bootstrap_b": str(report.bootstrap_b),
        "boot_ci_low": "" if report.boot_ci_low is None else _fmt(report.boot_ci_low),
        "boot_ci_high": "" if report.boot_ci_high is None else _fmt(report.boot_ci_high),
    }


def _print_estimate(report: RunReport, out: str) -> None:
    if out == "json":
        print(json.dumps(report.to_record(), sort_keys=True))
        return
    if out == "csv":
        row = _report_row(report)
        print(",".join(_REPORT_COLS))
        print(",".join(row[c] for c in _REPORT_COLS))
        return
    est, target = report.estimate, report.estimand
    level = 100.0 * (1.0 - report.alpha)
    print(f"ATET contrast d={target.d_treat:g} vs d'={target.d_control:g} at t={target.t}")
    print(f"  design={report.design}  n={report.n}  folds={report.config.folds}")
    print(f"  kernel={report.config.kernel}  h={est.h_used:.6g}")
    print(f"  estimate  {est.delta_hat:.6f}")
    print(f"  se        {est.se:.6f}")
    print(f"  {level:g}% CI asymptotic  [{est.ci_low:.6f}, {est.ci_high:.6f}]")
    if report.bootstrap_b:
        print(
            f"  {level:g}% CI bootstrap   [{report.boot_ci_low:.6f}, "
            f"{report.boot_ci_high:.6f}]  (B={report.bootstrap_b})"
        )
    trims = " ".join(
        f"g{i + 1}={k}" for i, k in enumerate(est.n_trimmed_per_group)
    )
    print(f"  trimmed per group: {trims}  (n_effective={est.n_effective})")
    if report.duration_s is not None:
        print(f"  duration: {report.duration_s:.2f}s")


_SUMMARY_COLS = ("method", "n", "reps", "bias", "std", "rmse", "avse", "cover", "failures")


def _print_summaries(rows, out: str) -> None:
    if out == "json":
        for row in rows:
            rec = {
                "method": row.method,
                "n": row.n,
                "reps": row.reps,
                "bias": row.bias,
                "std": row.std,
                "rmse": row.rmse,
                "avse": row.avse,
                "cover": row.cover,
                "failures": row.failures,
            }
            print(json.dumps(rec, sort_keys=True))
        return
    if out == "csv":
        print(",".join(_SUMMARY_COLS))
        for row in rows:
            print(
                ",".join(
                    [
                        row.method,
                        str(row.n),
                        str(row.reps),
                        _fmt(row.bias),
                        _fmt(row.std),
                        _fmt(row.rmse),
                        _fmt(row.avse),
                        _fmt(row.cover),
                        str(row.failures),
                    ]
                )
            )
        return
    header = f"{'method':<10}{'n':>8}{'reps':>6}{'bias':>10}{'std':>10}{'rmse':>10}{'avse':>10}{'cover':>8}{'fail':>6}"
    print(header)
    for row in rows:
        print(
            f"{row.method:<10}{row.n:>8}{row.reps:>6}"
            f"{row.bias:>10.3f}{row.std:>10.3f}{row.rmse:>10.3f}{row.avse:>10.3f}"
            f"{row.cover:>8.3f}{row.failures:>6}"
        )


def _cmd_estimate(args) -> int:
    try:
        # exact float parsing so emitted 17-digit values round-trip
        frame = pd.read_csv(args.data, float_precision="round_trip")
    except FileNotFoundError:
        print(f"didcont: error: no such file: {args.data}", file=sys.stderr)
        return 1
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as err:
        print(f"didcont: error: could not parse {args.data}: {err}", file=sys.stderr)
        return 1
    try:
        estimand = EstimandSpec(args.d, args.dprime, t=args.t, lag=args.lag)
        config = EstimationConfig(
            folds=args.folds,
            kernel=args.kernel,
            bandwidth=args.bandwidth,
            undersmooth_factor=args.undersmooth,
            trim_threshold=args.trim,
            ps_family=_PS_FLAGS[args.ps_model],
            seed=args.seed,
        )
        report = estimate_atet(
            frame,
            args.design,
            estimand,
            config,
            bootstrap=args.bootstrap,
            alpha=args.alpha,
        )
    except InputError as err:
        print(f"didcont: error: {err}", file=sys.stderr)
        return 1
    except EstimationError as err:
        print(str(err), file=sys.stderr)
        return 2
    _print_estimate(report, args.out)
    return 0


def _cmd_simulate(args) -> int:
    try:
        if args.reps < 2:
            raise InputError("reps ≥ 2")
        methods = list(dict.fromkeys(args.method))
        if args.emit_data:
            gen = simulate_panel if args.design == "panel" else simulate_rcs
            write_sample_csv(gen(args.n, args.p, replication_seed(args.seed, 0)), args.emit_data)
        rows = [
            monte_carlo(args.design, args.n, args.p, args.reps, m, seed=args.seed)
            for m in methods
        ]
    except InputError as err:
        print(f"didcont: error: {err}", file=sys.stderr)
        return 1
    except EstimationError as err:
        print(str(err), file=sys.stderr)
        return 2
    _print_summaries(rows, args.out)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "estimate":
        return _cmd_estimate(args)
    return _cmd_simulate(args)


def run(argv=None) -> int:
    """main() with argparse's SystemExit folded into the return code."""
    try:
        return main(argv)
    except SystemExit as exc:
        code = exc.code
        if code is None:
            return 0
        return code if isinstance(code, int) else 1


def entrypoint() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    entrypoint()
