"""Command-line interface."""

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import harness, io
from .core import decompose
from .errors import ConfigError, ConvergenceError, TransposableError
from .fdr import PROCEDURES, bh_stepup, by_stepup, run_procedures
from .sphere import central_match, filter_rows, sphere
from .stats import p_values, row_t_stats
from .trcm import cross_validate_lambda, fit_trcm

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_IO = 0, 2, 3, 4


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default,
                        help="base random seed (default: the scenario's, else 0)")
    parser.add_argument("--threads", type=int, default=default if suppress else 1,
                        help="worker processes for replicates (default 1)")
    parser.add_argument("--out", default=default if suppress else ".",
                        help="output directory (default: current directory)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="transposable",
        description="Two-sample inference on matrices with correlated rows and columns.")
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        _global_flags(p, suppress=True)
        return p

    p = add("simulate", "draw one replicate of a scenario")
    p.add_argument("config", help="scenario file (key = value lines)")
    p.add_argument("--rep", type=int, default=0, help="replicate index")

    p = add("estimate", "fit row/column covariances to labeled data")
    p.add_argument("data")
    p.add_argument("--lambda", dest="lam", type=float,
                   help="penalty; chosen by cross-validation when omitted")
    p.add_argument("--folds", type=int, default=5)

    p = add("sphere", "de-correlate data with a fitted covariance pair")
    p.add_argument("data")
    p.add_argument("fit", help="directory written by 'estimate'")

    p = add("test", "row-wise two-sample statistics and p-values")
    p.add_argument("data")
    p.add_argument("--sphered", action="store_true",
                   help="sphere first, then scale by the central portion")
    p.add_argument("--fit", help="fit directory to sphere with (default: estimate one)")
    p.add_argument("--pi0", type=float, default=0.8,
                   help="central proportion used for scaling (default 0.8)")
    p.add_argument("--filter", type=int, metavar="K",
                   help="keep only the K rows with largest un-sphered |T|")
    p.add_argument("--folds", type=int, default=5)

    p = add("fdr", "FDR curves for ranked statistics")
    p.add_argument("stats", help="statistics file written by 'test'")
    p.add_argument("--data", help="data matrix, needed for permutations")
    p.add_argument("--truth", help="non-null row indices, one per line")
    p.add_argument("--methods", default=",".join(PROCEDURES),
                   help="comma-separated subset of " + ",".join(PROCEDURES))
    p.add_argument("--perms", type=int, default=1000)
    p.add_argument("--q", type=float, default=0.05,
                   help="level for the step-up rejection counts")
    p.add_argument("--df", type=int, help="degrees of freedom when no metadata file")

    p = add("study", "run every replicate of a scenario and write tables")
    p.add_argument("config")

    p = add("report", "rebuild tables and plots from a study directory")
    p.add_argument("run_dir")
    return parser


def _read_labeled(path):
    x = io.read_data(path)
    if not x.labeled:
        raise ConfigError(f"{path}: data need a class header row")
    return x


def _estimate(x, lam, folds, seed):
    noise = decompose(x).noise
    if lam is None:
        lam, _ = cross_validate_lambda(noise, folds=folds, seed=seed)
    return fit_trcm(noise, lam)


def cmd_simulate(args, out):
    scn = harness.read_config(args.config)
    if args.seed is not None:
        scn = scn.replace(seed=args.seed)
    x = harness.generate(scn, args.rep)
    io.write_data(out / "data.csv", x)
    io.write_truth(out / "truth.csv", scn.truth)
    print(f"wrote {out / 'data.csv'} ({x.shape[0]}x{x.shape[1]})")


def cmd_estimate(args, out):
    x = _read_labeled(args.data)
    fit = _estimate(x, args.lam, args.folds, args.seed or 0)
    io.write_fit(out / "fit", fit)
    print(f"lambda={fit.lambda_:.6g} iterations={fit.iterations} "
          f"converged={str(fit.converged).lower()}")


def cmd_sphere(args, out):
    x = _read_labeled(args.data)
    sp = sphere(x, io.read_fit(args.fit))
    io.write_data(out / "sphered.csv", sp.data)
    print(f"wrote {out / 'sphered.csv'}")


def cmd_test(args, out):
    x = _read_labeled(args.data)
    rows = np.arange(x.shape[0])
    if args.filter:
        x, rows = filter_rows(x, args.filter)
    if args.sphered:
        fit = io.read_fit(args.fit) if args.fit else _estimate(x, None, args.folds,
                                                                args.seed or 0)
        sp = sphere(x, fit)
        io.write_data(out / "sphered.csv", sp.data)
        stats = central_match(row_t_stats(sp.data, kind="t_sphered"), args.pi0).scaledStats
    else:
        stats = row_t_stats(x)
    p = p_values(stats)
    io.write_stats(out / "stats.csv", stats, p)
    io.write_stats_meta(out / "stats.meta", stats)
    if args.filter:
        io.write_truth(out / "kept_rows.csv", rows)
    print(f"wrote {out / 'stats.csv'} ({len(stats)} rows, kind {stats.kind})")


def cmd_fdr(args, out):
    meta = Path(args.stats).with_suffix(".meta")
    if meta.exists():
        kind, df, c_n = io.read_stats_meta(meta)
    elif args.df:
        kind, df, c_n = "t", args.df, 1.0
    else:
        raise ConfigError("no statistics metadata found; pass --df")
    stats, p = io.read_stats(args.stats, kind, df, c_n)
    if p is None:
        p = p_values(stats)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    bad = [m for m in methods if m not in PROCEDURES]
    if bad or not methods:
        raise ConfigError(f"--methods must be a subset of {','.join(PROCEDURES)}")
    data = None
    if "perm" in methods:
        if not args.data:
            raise ConfigError("the perm method needs --data")
        data = _read_labeled(args.data)
    truth = io.read_truth(args.truth) if args.truth else None
    report = run_procedures(stats, p, data, methods, args.perms, args.seed or 0,
                            truth=truth)
    io.write_curve(out / "fdr_curve.csv", report)
    k = np.arange(1, report.m + 1)
    curves = dict(report.perProcedure)
    if report.trueFdp is not None:
        curves = {"true_fdp": report.trueFdp, **curves}
    io.plot_curves(out / "fdr_curve.svg", {c: (k, v) for c, v in curves.items()})
    counts = {"q": args.q, "bh_rejections": int(bh_stepup(p, args.q).size),
              "by_rejections": int(by_stepup(p, args.q).size)}
    io.write_kv(out / "rejections", counts)
    print(f"BH rejects {counts['bh_rejections']}, BY rejects "
          f"{counts['by_rejections']} at q={args.q:g}")


def cmd_study(args, out):
    scn = harness.read_config(args.config)
    if args.seed is not None:
        scn = scn.replace(seed=args.seed)
    result = harness.run_scenario(scn, threads=args.threads or 1)
    if not result.perRep:
        errors = set(result.failures.values())
        msg = f"all {scn.reps} replicates failed: " + "; ".join(sorted(errors))
        if all(e.startswith("ConvergenceError") for e in errors):
            raise ConvergenceError(msg)
        raise ConfigError(msg)
    harness.emit_tables(result, out)
    for rep, err in result.failures.items():
        print(f"replicate {rep} failed: {err}", file=sys.stderr)
    mean, se = result.summary["true_fdp"]
    print(f"{scn.name}: {len(result.perRep)}/{scn.reps} replicates; "
          f"true FDP at {harness.K_GRID[2]} = {mean[2]:.4g} ({se[2]:.2g})")


def cmd_report(args, out):
    target = harness.report_from_dir(args.run_dir,
                                     out if args.out_given else None)
    print(f"wrote {target / 'summary.csv'}")


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "sphere": cmd_sphere,
            "test": cmd_test, "fdr": cmd_fdr, "study": cmd_study, "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    args.out_given = any(a == "--out" or a.startswith("--out=") for a in argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
        out = io.ensure_dir(args.out)
        COMMANDS[args.command](args, out)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (io.DataIOError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TransposableError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
