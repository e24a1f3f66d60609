"""Median fit time against sample size for EIGEN (fixed K) and the full ALL solve.

    python scripts/run_timing.py --out timing.csv
"""
import argparse
from pathlib import Path

from eigenspline.eigensys import precompute_cache
from eigenspline.kernels import CUBIC
from eigenspline.simbench import timing_csv, timing_sweep


def ints(text):
    return [int(v) for v in text.split(",")]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=ints, default=[2000, 5000, 10000, 20000, 40000, 80000])
    ap.add_argument("--n-all", type=ints, default=[500, 1000, 2000, 4000])
    ap.add_argument("-K", type=int, default=30)
    ap.add_argument("-N", type=int, default=100)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--out", default="timing.csv")
    args = ap.parse_args()

    cache = precompute_cache(CUBIC, args.N)
    rows = timing_sweep("EIGEN", args.n, K=args.K, repeats=args.repeats, cache=cache)
    rows += timing_sweep("ALL", args.n_all, K=None, repeats=args.repeats)
    for r in rows:
        print(f"{r.method:6s} n={r.n:6d} {r.seconds:8.4f}s")
    by_n = {r.n: r.seconds for r in rows if r.method == "EIGEN"}
    if 20000 in by_n and 80000 in by_n:
        print(f"EIGEN t(80000)/t(20000) = {by_n[80000] / by_n[20000]:.2f}")
    Path(args.out).write_text(timing_csv(rows))


if __name__ == "__main__":
    main()
