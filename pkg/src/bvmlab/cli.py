"""Command line entry point.

    bvmlab experiment --config FILE --out DIR [--workers N]
    bvmlab divergence --kind KIND [pair flags]
    bvmlab tails --p P --lambda L [--grid default|v1,v2,...] [--calibrate]
    bvmlab selftest

Exit codes: 0 success, 1 validation/usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import chisq
from .divergence import (
    DensityPair,
    GaussianSpec,
    StudentTSpec,
    hellinger_sq_gaussian,
    hellinger_sq_gprior_pair,
    hellinger_sq_mc,
    hellinger_sq_t_vs_gaussian,
    kl_mc,
    renyi_alpha_mc,
    tv_mc,
)
from .errors import NumericalError, ValidationError

DIVERGENCE_KINDS = ("hellinger_gaussian", "hellinger_gprior_pair", "hellinger_t_gaussian", "hellinger_mc", "renyi", "tv", "kl")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(f"{self.prog}: {message}")


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()], dtype=float)
    except ValueError:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}") from None


def _gaussian(mean, var, dim=None):
    mu = _floats(mean)
    if dim is not None and mu.size != dim:
        raise ValidationError(f"mean has {mu.size} entries, expected {dim}")
    return GaussianSpec.from_cov(mu, np.eye(mu.size), float(var))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bvmlab", description="Numerical checks of Bernstein-von Mises limits for g-prior and pMoM regression.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ex = sub.add_parser("experiment", help="run a replicated convergence experiment")
    ex.add_argument("--config", required=True)
    ex.add_argument("--out", required=True)
    ex.add_argument("--workers", type=int, default=None, help="worker processes (default: BVM_THREADS or CPU count)")

    dv = sub.add_parser("divergence", help="closed-form or Monte Carlo divergence between two distributions")
    dv.add_argument("--kind", required=True, choices=DIVERGENCE_KINDS)
    dv.add_argument("--mean1", default="0", help="comma-separated mean of the first distribution")
    dv.add_argument("--mean2", default="0", help="comma-separated mean of the second (sampling) distribution")
    dv.add_argument("--var1", type=float, default=1.0, help="isotropic variance (t: scale) of the first")
    dv.add_argument("--var2", type=float, default=1.0, help="isotropic variance of the second")
    dv.add_argument("--df", type=float, default=5.0, help="t degrees of freedom")
    dv.add_argument("--alpha", type=float, default=0.5)
    dv.add_argument("--omega", type=float, default=0.5)
    dv.add_argument("--q-over-sigma2", type=float, default=0.0)
    dv.add_argument("--p", type=int, default=1)
    dv.add_argument("--method", choices=("mc", "quadrature_1d"), default="mc")
    dv.add_argument("--m", type=int, default=100_000)
    dv.add_argument("--seed", type=int, default=0)

    tl = sub.add_parser("tails", help="chi-squared tail bounds against exact probabilities (CSV)")
    tl.add_argument("--p", type=float, required=True)
    tl.add_argument("--lambda", dest="lam", type=float, required=True)
    tl.add_argument("--grid", default="default", help="'default' or comma-separated a/c values")
    tl.add_argument("--calibrate", action="store_true", help="emit the c1 calibration table instead")

    sub.add_parser("selftest", help="run the brute-force oracle suite")
    return parser


def _emit_csv(rows, columns, out):
    from .harness.report import render_csv

    out.write(render_csv(rows, columns))


def _cmd_experiment(args, out):
    from .harness import load_config, run_experiment, write_outputs

    cfg = load_config(args.config)
    if args.workers is not None and args.workers < 1:
        raise ValidationError("--workers must be >= 1")
    report = run_experiment(cfg, workers=args.workers)
    paths = write_outputs(report, args.out)
    out.write(f"wrote {len(report.rows)} rows ({report.n_failed} failed) to {paths['report']}\n")
    return 0


def _cmd_divergence(args, out):
    kind = args.kind
    columns = ("kind", "value", "std_error", "n_samples")
    if kind == "hellinger_gprior_pair":
        value = hellinger_sq_gprior_pair(args.omega, args.q_over_sigma2, args.p)
        _emit_csv([{"kind": kind, "value": value, "std_error": 0.0, "n_samples": 0}], columns, out)
        return 0
    g2 = _gaussian(args.mean2, args.var2)
    if kind == "hellinger_t_gaussian":
        t = StudentTSpec.from_scale(args.df, _floats(args.mean1), np.eye(g2.dim), args.var1)
        est = hellinger_sq_t_vs_gaussian(t, g2, method=args.method, m=args.m, seed=args.seed)
    else:
        g1 = _gaussian(args.mean1, args.var1, g2.dim)
        if kind == "hellinger_gaussian":
            value = hellinger_sq_gaussian(g1, g2)
            _emit_csv([{"kind": kind, "value": value, "std_error": 0.0, "n_samples": 0}], columns, out)
            return 0
        pair = DensityPair.from_specs(g1, g2)
        if kind == "hellinger_mc":
            est = hellinger_sq_mc(pair, args.m, args.seed)
        elif kind == "renyi":
            est = renyi_alpha_mc(pair, args.alpha, args.m, args.seed)
        elif kind == "tv":
            est = tv_mc(pair, args.m, args.seed)
        else:
            est = kl_mc(pair, args.m, args.seed)
    _emit_csv([{"kind": kind, "value": est.value, "std_error": est.std_error, "n_samples": est.n_samples}], columns, out)
    return 0


def _cmd_tails(args, out):
    if args.calibrate:
        rows = chisq.calibrate_fraction_constant()
        _emit_csv(rows, ("p", "lambda", "w", "exact", "c1_min"), out)
        return 0
    chisq.ChiSqParams(args.p, args.lam)
    grid = chisq.DEFAULT_GRID if args.grid == "default" else tuple(_floats(args.grid))
    if not grid:
        raise ValidationError("empty grid")
    _emit_csv(chisq.tail_rows(args.p, args.lam, grid), chisq.TAIL_COLUMNS, out)
    return 0


def _cmd_selftest(args, out):
    from .selftest import run_selftest

    results = run_selftest()
    for r in results:
        out.write(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}\n")
    failed = [r for r in results if not r.passed]
    out.write(f"{len(results) - len(failed)}/{len(results)} checks passed\n")
    return 2 if failed else 0


_COMMANDS = {"experiment": _cmd_experiment, "divergence": _cmd_divergence, "tails": _cmd_tails, "selftest": _cmd_selftest}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args, out)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        # --help exits through argparse
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
