"""Empirical signed-support recovery rate as the sample size grows.

Example::

    python scripts/recovery_trend.py --n 100 200 400 800 --trials 50
"""
import argparse

from exclasso.consistency import TrendConfig, recovery_trend


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[100, 200, 400, 800])
    ap.add_argument("--p", type=int, default=20)
    ap.add_argument("--groups", type=int, default=2)
    ap.add_argument("--actives-per-group", type=int, default=2)
    ap.add_argument("--sigma2", type=float, default=1.0)
    ap.add_argument("--lam-scale", type=float, default=1.0)
    ap.add_argument("--lam-exponent", type=float, default=0.25)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--gaussian", action="store_true", help="plain Gaussian design, not orthogonalized")
    args = ap.parse_args()

    cfg = TrendConfig(tuple(args.n), args.p, args.groups, args.actives_per_group, args.sigma2,
                      args.lam_scale, args.lam_exponent, args.trials, args.seed,
                      orthogonal=not args.gaussian)
    print(f"{'n':>6} {'lambda':>10} {'recovery':>9} {'mean gamma':>11}")
    for row in recovery_trend(cfg):
        print(f"{row.n:>6d} {row.lam:>10.4f} {row.recovery:>9.2f} {row.mean_gamma:>11.4f}")


if __name__ == "__main__":
    main()
