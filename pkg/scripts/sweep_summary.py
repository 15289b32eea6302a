"""Run the recovery benchmark and print mean errors per grid value.

Example::

    python scripts/sweep_summary.py --spec scripts/default.spec --out sweep.csv
    python scripts/sweep_summary.py --spec scripts/default.spec --n 110 --sigma2 1
"""
import argparse
import time

from exclasso import bench


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--spec", default=None)
    ap.add_argument("--out", default=None, help="CSV with per-trial and mean rows")
    ap.add_argument("--n", type=int)
    ap.add_argument("--sigma2", type=float)
    ap.add_argument("--trials", type=int)
    ap.add_argument("--algorithms", help="comma-separated subset")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    spec = bench.read_spec(args.spec) if args.spec else bench.ExperimentSpec()
    algs = tuple(a.strip() for a in args.algorithms.split(",")) if args.algorithms else None
    spec = bench.with_overrides(spec, n=args.n, sigma2=args.sigma2, trials=args.trials,
                                algorithms=algs)
    spec.validate()

    t0 = time.perf_counter()
    rows = bench.run_sweep(spec, args.out, threads=args.threads)
    elapsed = time.perf_counter() - t0

    means = [r for r in rows if r.trial == "mean"]
    grid = sorted({r.lam for r in means})
    print("value     " + "".join(f"{a:>22s}" for a in spec.algorithms))
    for lam in grid:
        cells = {r.algorithm: r.errors for r in means if r.lam == lam}
        print(f"{lam:<10.4g}" + "".join(f"{cells[a]:>22.2f}" for a in spec.algorithms))
    for a in spec.algorithms:
        lam, err = bench.best_mean_errors(rows, a)
        print(f"best {a}: {err:.2f} errors at {lam:.4g}")
    print(f"{spec.trials} trials in {elapsed:.1f}s")


if __name__ == "__main__":
    main()
