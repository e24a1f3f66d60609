"""Run the desk-scale MSE grid (ALL, RSR, EIGEN and Nystrom over five ranks).

    python scripts/run_table1.py --scenario scenarios/desk_table1.json --out results/table1.csv
"""
import argparse
import json
import time
from pathlib import Path

from eigenspline.eigensys import precompute_cache
from eigenspline.kernels import Kernel
from eigenspline.simbench import load_scenarios, rows_csv, run_grid, run_manifest

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default=str(ROOT / "scenarios" / "desk_table1.json"))
    ap.add_argument("--out", default="table1.csv")
    ap.add_argument("--manifest", default=None, help="defaults to <out>.manifest.json")
    ap.add_argument("--replicates", type=int, default=None)
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()

    scenarios = load_scenarios(json.loads(Path(args.scenario).read_text()))
    if args.replicates:
        from dataclasses import replace

        scenarios = [replace(s, replicates=args.replicates) for s in scenarios]

    caches, rows, timings = {}, [], {}
    for scen in scenarios:
        key = (scen.kernel, scen.N)
        if key not in caches:
            t0 = time.perf_counter()
            caches[key] = precompute_cache(Kernel(scen.kernel), scen.N)
            timings[f"precompute_{scen.kernel}_{scen.N}"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        got = run_grid(scen, caches[key], threads=args.threads)
        print(f"{scen.function} sigma={scen.sigma}: {time.perf_counter() - t0:.1f}s")
        for r in got:
            shown = "failed: " + r.error if r.error else f"mse={r.mse * 1e4:10.4f}e-4  {r.seconds:.4f}s"
            print(f"  {r.method:6s} {shown}")
        rows.extend(got)

    Path(args.out).write_text(rows_csv(rows))
    failures = [{"case": r.case, "method": r.method, "error": r.error} for r in rows if r.error]
    manifest = run_manifest(scenarios, {"precompute_seconds": timings, "failures": failures})
    Path(args.manifest or args.out + ".manifest.json").write_text(json.dumps(manifest, indent=2))


if __name__ == "__main__":
    main()
