"""Compare step-size strategies on an ill-conditioned logistic regression.

Every method gets the same problem, the same five seeds, batch size 1 and
``T = 10 n`` steps. Methods that need the growth constant ``rho`` are run
once per value of the grid 10, 100, 1000 and the best value is reported.
CSV files land under ``results/logistic_benchmark/<method>``.

The expected picture: the exponential schedule with known L beats the
constant-then-decay schedule, and the line-search variant, which never sees
L, comes close to the exponential schedule.

Run with ``python demos/logistic_benchmark.py [--threads N]``.
"""

import argparse
from pathlib import Path

from adaptsgd.harness import ExperimentConfig, run_experiment

CONFIG = Path(__file__).with_name("configs") / "logistic_benchmark.cfg"
METHODS = ["K_CNST", "K_EXP", "KR20", "ACC_K_EXP", "SLS_EXP", "SLS_ONLINE"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--out", default="results/logistic_benchmark")
    args = ap.parse_args()

    base = ExperimentConfig.from_file(CONFIG)
    print(f"{'method':<12} {'best rho':>9} {'final mean grad norm':>22} {'gradient evals':>15}")
    for name in METHODS:
        cfg = base.with_overrides(method=name)
        res = run_experiment(cfg, out_dir=Path(args.out) / name, threads=args.threads)
        best = res.best
        rho = "-" if best.rho is None else f"{best.rho:g}"
        print(f"{name:<12} {rho:>9} {best.final_mean_grad_norm:>22.4e} {int(best.grad_evals[-1]):>15}")


if __name__ == "__main__":
    main()
