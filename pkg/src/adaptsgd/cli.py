"""Command-line entry point.

Exit codes: 0 success, 1 a verification failed, 2 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import sys

from .errors import AdaptSGDError, ConfigError, DatasetParseError
from .harness.experiment import format_float, run_experiment
from .harness.config import ExperimentConfig
from .lowerbounds import verdict_suite
from .schedules import ScheduleSpec, alpha_sequence, partial_sums, step_sequence
from .selftest import run_selftest

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _print_verdicts(verdicts, out):
    width = max(len(v.name) for v in verdicts)
    for v in verdicts:
        print(f"{v.name:<{width}}  {'PASS' if v.passed else 'FAIL'}  {v.detail}", file=out)
    n_ok = sum(v.passed for v in verdicts)
    print(f"{n_ok}/{len(verdicts)} checks passed", file=out)
    return EXIT_OK if n_ok == len(verdicts) else EXIT_FAILED


def _cmd_run(args, out):
    cfg = ExperimentConfig.from_file(args.config)
    res = run_experiment(cfg, out_dir=args.out, threads=args.threads)
    for g in res.groups:
        mark = "*" if g is res.best else " "
        print(f"{mark} {g.label:<28} final mean grad norm {format_float(g.final_mean_grad_norm)}"
              f"  diverged {int(g.n_diverged[-1])}/{cfg.seeds}", file=out)
    print(f"wrote {len(res.files)} files under {args.out or cfg.output}", file=out)
    return EXIT_OK


def _cmd_verify(args, out):
    verdicts = verdict_suite(mc_seeds=args.seeds)
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["check", "passed", "detail"])
            w.writerows([v.name, int(v.passed), v.detail] for v in verdicts)
    return _print_verdicts(verdicts, out)


def _cmd_selftest(args, out):
    return _print_verdicts(run_selftest(), out)


def _cmd_inspect(args, out):
    kind = args.schedule
    T = args.T
    if kind == "constant":
        spec = ScheduleSpec.constant()
    elif kind == "poly":
        spec = ScheduleSpec.polynomial(args.delta)
    elif kind == "exp":
        spec = ScheduleSpec.exponential(args.beta, T)
    else:
        if args.L is None or args.mu is None:
            raise ConfigError("kr20 needs --L and --mu")
        spec = ScheduleSpec.kr20_schedule(args.L, args.mu, args.rho, T)
    print(f"# {spec.describe()}", file=out)
    if kind == "kr20":
        print("k,step", file=out)
        for k, v in enumerate(step_sequence(spec, 0, T - 1)):
            print(f"{k},{format_float(v)}", file=out)
    else:
        print("k,alpha", file=out)
        for k, v in enumerate(alpha_sequence(spec, 0, T)):
            print(f"{k},{format_float(v)}", file=out)
    s1, s2 = partial_sums(spec, T)
    print(f"# sum = {format_float(s1)}", file=out)
    print(f"# sum_sq = {format_float(s2)}", file=out)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="adaptsgd", description="Step-size schedules and SGD benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config and write CSVs")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None)
    run.add_argument("--threads", type=int, default=None)
    run.set_defaults(func=_cmd_run)

    ver = sub.add_parser("verify-lowerbounds", help="run every lower-bound certificate")
    ver.add_argument("--seeds", type=int, default=10_000, help="Monte-Carlo runs for the neighbourhood check")
    ver.add_argument("--csv", default=None, help="also write the verdict table as CSV")
    ver.set_defaults(func=_cmd_verify)

    st = sub.add_parser("selftest", help="quick property checks of the library")
    st.set_defaults(func=_cmd_selftest)

    ins = sub.add_parser("inspect-schedule", help="print a schedule table and its partial sums")
    ins.add_argument("--schedule", choices=["constant", "poly", "exp", "kr20"], required=True)
    ins.add_argument("--T", type=int, required=True)
    ins.add_argument("--beta", type=float, default=1.0)
    ins.add_argument("--delta", type=float, default=0.5)
    ins.add_argument("--L", type=float, default=None)
    ins.add_argument("--mu", type=float, default=None)
    ins.add_argument("--rho", type=float, default=1.0)
    ins.set_defaults(func=_cmd_inspect)
    return parser


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except (ConfigError, DatasetParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AdaptSGDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(exc, ValueError) else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
