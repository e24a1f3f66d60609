"""``eigenspline`` command line: precompute, fit, predict, bounds, simulate, bench.

Exit codes: 0 success, 1 usage or argument error, 2 IO failure, 3 solver
failure. Nonzero exits print one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from threadpoolctl import threadpool_limits

from .bounds import theorem1_bounds, theorem2_bounds
from .eigensys import (
    EigenSystemCache,
    analytic_eigensystem,
    cached_eigenbasis,
    eigenvalues_csv,
    feature_matrix,
    precompute_cache,
    read_cache,
    save_cache,
)
from .errors import (
    ArgumentError,
    CacheFormatError,
    InvalidFitError,
    UnsupportedKernelError,
)
from .kernels import KERNEL_KINDS, DataSet, Kernel, gram_sigma, null_matrix
from .simbench import load_scenarios, rows_csv, run_grid, run_manifest, timing_csv, timing_sweep
from .solvers import GmlGrid, fit_exact, fit_from_dict, fit_method, fit_to_dict, gml_select, predict, qr_factors, rsr_size

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_SOLVER = 0, 1, 2, 3
THREADS_ENV = "EIGENSPLINE_THREADS"


class CsvError(ArgumentError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass
class CliConfig:
    subcommand: str
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    kernel: str = "cubic"
    method: Optional[str] = None
    K: Optional[int] = None
    N: Optional[int] = None
    lam: Union[str, float] = "gml"
    seed: int = 0
    grid: GmlGrid = field(default_factory=GmlGrid)
    threads: Optional[int] = None

    def validate_paths(self):
        for name, path in self.inputs.items():
            if path is not None and not Path(path).is_file():
                raise FileNotFoundError(f"{name}: no such file {path!r}")
        for name, path in self.outputs.items():
            if path is None:
                continue
            parent = Path(path).resolve().parent
            if not parent.is_dir() or not os.access(parent, os.W_OK):
                raise PermissionError(f"{name}: cannot write to directory {str(parent)!r}")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for IO here
    def error(self, message):
        raise ArgumentError(message)


# --- parsing helpers ----------------------------------------------------------


def parse_lambda(text: str) -> Union[str, float]:
    if text.strip().lower() == "gml":
        return "gml"
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number or 'gml', got {text!r}") from None
    if not (np.isfinite(val) and val > 0):
        raise argparse.ArgumentTypeError(f"lambda must be positive, got {text!r}")
    return val


def _positive_int(text: str) -> int:
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if val < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {val}")
    return val


def _int_list(text: str) -> list[int]:
    return [_positive_int(t) for t in text.split(",") if t.strip()]


def read_data_csv(path) -> DataSet:
    """Read a CSV with header ``x,y``; errors carry the offending line number."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvError("empty file", 1)
    header = [h.strip().lower() for h in rows[0]]
    if header != ["x", "y"]:
        raise CsvError(f"expected header 'x,y', got {','.join(rows[0])!r}", 1)
    xs, ys = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise CsvError(f"expected 2 fields, got {len(row)}", lineno)
        try:
            x, y = float(row[0]), float(row[1])
        except ValueError:
            raise CsvError(f"non-numeric value in {','.join(row)!r}", lineno) from None
        if not np.isfinite(y):
            raise CsvError("y must be finite", lineno)
        if not (0.0 <= x <= 1.0):
            raise CsvError(f"x = {x} outside [0, 1]", lineno)
        xs.append(x)
        ys.append(y)
    if not xs:
        raise CsvError("no data rows", 2)
    return DataSet(np.array(xs), np.array(ys))


def read_points_csv(path) -> np.ndarray:
    """Prediction points: a CSV with an ``x`` column (other columns ignored)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip().lower() for h in next(reader, [])]
        if "x" not in header:
            raise CsvError("expected an 'x' column in the header", 1)
        col = header.index("x")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                out.append(float(row[col]))
            except (ValueError, IndexError):
                raise CsvError("missing or non-numeric x", lineno) from None
            if not 0.0 <= out[-1] <= 1.0:
                raise CsvError(f"x = {out[-1]} outside [0, 1]", lineno)
    return np.array(out)


def atomic_write(path, data: Union[str, bytes]) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.resolve().parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ArgumentError(f"{path}: invalid JSON ({exc})") from None


def _grid_from(args) -> GmlGrid:
    return GmlGrid(args.grid_min, args.grid_max, args.grid_points)


def _load_cache(path, kernel: Optional[str] = None) -> EigenSystemCache:
    cache = read_cache(path)
    if kernel is not None and cache.kernel_kind != kernel:
        raise ArgumentError(f"cache {path!r} was built for kernel {cache.kernel_kind!r}, not {kernel!r}")
    return cache


# --- subcommands --------------------------------------------------------------


def cmd_precompute(cfg: CliConfig, args) -> int:
    cache = precompute_cache(Kernel(cfg.kernel), cfg.N)
    atomic_write(cfg.outputs["out"], save_cache(cache))
    if args.eigenvalues_csv:
        atomic_write(args.eigenvalues_csv, eigenvalues_csv(cache))
    print(f"kernel={cache.kernel_kind} N={cache.N} positive={cache.n_positive}")
    for k, v in enumerate(cache.delta[:10], start=1):
        print(f"{k:3d} {v:.10e}")
    return EXIT_OK


def cmd_fit(cfg: CliConfig, args) -> int:
    data = read_data_csv(cfg.inputs["data"])
    kernel = Kernel(cfg.kernel)
    source = None
    if cfg.method == "EIGEN":
        if cfg.inputs.get("cache"):
            source = _load_cache(cfg.inputs["cache"], cfg.kernel)
        elif not args.analytic:
            raise ArgumentError("--method eigen needs --cache (or --analytic for the periodic kernel)")
        elif kernel.kind != "periodic":
            raise ArgumentError("--analytic is only available for the periodic kernel")
    K = rsr_size(data.n) if cfg.method == "RSR" and cfg.K is None else cfg.K
    fit = fit_method(
        data, kernel, cfg.method, lam=cfg.lam, K=K, source=source, seed=cfg.seed, grid=cfg.grid,
        cache_file=cfg.inputs.get("cache"),
    )
    out = fit_to_dict(fit)
    out["lambda_source"] = "gml" if cfg.lam == "gml" else "fixed"
    out["seed"] = cfg.seed
    atomic_write(cfg.outputs["out"], _dump_json(out))
    print(f"method={fit.method} lambda={fit.lam:.6e} ({out['lambda_source']})")
    return EXIT_OK


def cmd_predict(cfg: CliConfig, args) -> int:
    obj = _load_json(cfg.inputs["fit"])
    if not isinstance(obj, dict):
        raise InvalidFitError("fit JSON must be an object")
    cache = _load_cache(cfg.inputs["cache"]) if cfg.inputs.get("cache") else None
    if cache is None and isinstance(obj.get("basis"), dict) and obj["basis"].get("type") == "cache":
        raise ArgumentError("this EIGEN fit was built from a cache; pass it with --cache")
    fit = fit_from_dict(obj, cache)
    if cfg.inputs.get("points"):
        xs = read_points_csv(cfg.inputs["points"])
    else:
        xs = np.linspace(0.0, 1.0, args.grid)
    fhat = predict(fit, xs)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("x", "fhat"))
    w.writerows((repr(float(a)), repr(float(b))) for a, b in zip(xs, fhat))
    atomic_write(cfg.outputs["out"], buf.getvalue())
    return EXIT_OK


def cmd_bounds(cfg: CliConfig, args) -> int:
    data = read_data_csv(cfg.inputs["data"])
    kernel = Kernel(cfg.kernel)
    cache = _load_cache(cfg.inputs["cache"], cfg.kernel) if cfg.inputs.get("cache") else None
    K = cfg.K
    sigma = gram_sigma(kernel, data.x)
    qr = qr_factors(null_matrix(kernel, data.x))
    lam = cfg.lam
    if lam == "gml":
        lam = gml_select(data.y, qr.Q1 @ qr.R, sigma=sigma, grid=cfg.grid, qr=qr).lam
    exact = fit_exact(data, kernel, lam, sigma=sigma, qr=qr)

    if args.theorem == 2:
        if kernel.kind != "periodic" or cache is None:
            raise ArgumentError("--theorem 2 needs the periodic kernel and --cache")
        basis = analytic_eigensystem(kernel, K)
        trunc = fit_method(data, kernel, "EIGEN", lam=lam, K=K, source=basis)
        chk = fit_method(data, kernel, "EIGEN", lam=lam, K=K, source=cache)
        Zt, Zc = feature_matrix(basis, data.x, K), feature_matrix(cache, data.x, K)
        rep = theorem2_bounds(trunc, chk, basis, cache, Zt @ Zt.T, Zc @ Zc.T, qr, data,
                              exact=exact, sigma=sigma, points=args.points)
    else:
        if cache is not None:
            basis = cached_eigenbasis(cache, K)
            src = cache
        elif kernel.kind == "periodic":
            basis = src = analytic_eigensystem(kernel, K)
        else:
            raise UnsupportedKernelError("the cubic kernel has no analytic eigensystem; pass --cache")
        trunc = fit_method(data, kernel, "EIGEN", lam=lam, K=K, source=src)
        Z = feature_matrix(src, data.x, K)
        rep = theorem1_bounds(exact, trunc, basis, sigma, Z @ Z.T, qr, data, points=args.points)

    out = rep.to_dict()
    atomic_write(cfg.outputs["out"], _dump_json(out))
    print(f"{rep.kind} K={rep.K} lambda={rep.lam:.6e}: {'VALID' if rep.valid else 'VIOLATED'}")
    return EXIT_OK


def cmd_simulate(cfg: CliConfig, args) -> int:
    scenarios = load_scenarios(_load_json(cfg.inputs["scenario"]))
    if args.replicates is not None:
        from dataclasses import replace

        scenarios = [replace(s, replicates=args.replicates) for s in scenarios]
    cache = _load_cache(cfg.inputs["cache"]) if cfg.inputs.get("cache") else None
    rows, failures = [], []
    for scen in scenarios:
        c = cache if cache is not None and cache.kernel_kind == scen.kernel and cache.N == scen.N else None
        got = run_grid(scen, c, threads=cfg.threads or 1, grid=cfg.grid)
        rows.extend(got)
        failures.extend({"case": r.case, "method": r.method, "error": r.error} for r in got if r.error)
    atomic_write(cfg.outputs["out"], rows_csv(rows))
    if cfg.outputs.get("manifest"):
        atomic_write(cfg.outputs["manifest"], _dump_json(run_manifest(scenarios, {"failures": failures})))
    print(f"{len(rows)} rows, {len(failures)} failed cells")
    return EXIT_OK


def cmd_bench(cfg: CliConfig, args) -> int:
    cache = _load_cache(cfg.inputs["cache"], cfg.kernel) if cfg.inputs.get("cache") else None
    rows = []
    for method in args.methods:
        n_list = args.n_all if method == "ALL" and args.n_all else args.n
        rows.extend(timing_sweep(
            method, n_list, None if method == "ALL" else cfg.K, args.repeats,
            seed=cfg.seed, cache=cache, N=cfg.N or 100, kernel=Kernel(cfg.kernel),
        ))
    atomic_write(cfg.outputs["out"], timing_csv(rows))
    for r in rows:
        print(f"{r.method:8s} n={r.n:7d} {r.seconds:.4f}s")
    return EXIT_OK


COMMANDS = {
    "precompute": cmd_precompute,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "bounds": cmd_bounds,
    "simulate": cmd_simulate,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eigenspline", description="Smoothing splines via eigensystem truncation.")
    parser.add_argument("--threads", type=_positive_int, default=None,
                        help=f"cap on worker/BLAS threads (default: ${THREADS_ENV})")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def kernel_arg(p):
        p.add_argument("--kernel", choices=KERNEL_KINDS, default="cubic")

    def grid_args(p):
        g = GmlGrid()
        p.add_argument("--grid-min", type=float, default=g.log10_min, help="log10 lower end of the GML grid")
        p.add_argument("--grid-max", type=float, default=g.log10_max)
        p.add_argument("--grid-points", type=_positive_int, default=g.points)

    p = sub.add_parser("precompute", help="eigendecompose the kernel on a uniform grid")
    kernel_arg(p)
    p.add_argument("--n-points", "-N", type=int, required=True, dest="N")
    p.add_argument("--out", required=True)
    p.add_argument("--eigenvalues-csv", default=None)

    p = sub.add_parser("fit", help="fit a smoothing spline to x,y data")
    kernel_arg(p)
    p.add_argument("--data", required=True)
    p.add_argument("--method", required=True, type=str.upper, choices=("ALL", "EIGEN", "NYSTROM", "RSR"))
    p.add_argument("--cache", default=None)
    p.add_argument("--analytic", action="store_true", help="closed-form eigensystem (periodic kernel only)")
    rank = p.add_mutually_exclusive_group()
    rank.add_argument("--rank", "-K", type=_positive_int, default=None, dest="K")
    rank.add_argument("--q", type=_positive_int, default=None, help="subset size for RSR")
    p.add_argument("--lambda", type=parse_lambda, default="gml", dest="lam")
    p.add_argument("--seed", type=int, default=0)
    grid_args(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict", help="evaluate a fitted spline")
    p.add_argument("--fit", required=True)
    p.add_argument("--cache", default=None)
    pts = p.add_mutually_exclusive_group()
    pts.add_argument("--points", default=None, help="CSV with an x column")
    pts.add_argument("--grid", type=_positive_int, default=101, help="uniform grid size on [0, 1]")
    p.add_argument("--out", required=True)

    p = sub.add_parser("bounds", help="evaluate error bounds on a data set")
    kernel_arg(p)
    p.add_argument("--data", required=True)
    p.add_argument("--rank", "-K", type=_positive_int, required=True, dest="K")
    p.add_argument("--cache", default=None)
    p.add_argument("--theorem", type=int, choices=(1, 2), default=1)
    p.add_argument("--lambda", type=parse_lambda, default="gml", dest="lam")
    p.add_argument("--points", type=_positive_int, default=10_001, help="quadrature nodes for L2 norms")
    grid_args(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="run a simulation scenario grid")
    p.add_argument("--scenario", required=True)
    p.add_argument("--cache", default=None)
    p.add_argument("--replicates", type=_positive_int, default=None, help="override the scenario count")
    grid_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None)

    p = sub.add_parser("bench", help="time fits over sample sizes")
    kernel_arg(p)
    p.add_argument("--methods", type=lambda s: [m.strip().upper() for m in s.split(",")], default=["EIGEN"])
    p.add_argument("--n", type=_int_list, default=[2000, 5000, 10000, 20000, 40000, 80000])
    p.add_argument("--n-all", type=_int_list, default=None, help="sample sizes for ALL (defaults to --n)")
    p.add_argument("--rank", "-K", type=_positive_int, default=30, dest="K")
    p.add_argument("--n-points", "-N", type=_positive_int, default=100, dest="N")
    p.add_argument("--cache", default=None)
    p.add_argument("--repeats", type=_positive_int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def config_from_args(args) -> CliConfig:
    cmd = args.subcommand
    threads = args.threads
    if threads is None and os.environ.get(THREADS_ENV):
        try:
            threads = _positive_int(os.environ[THREADS_ENV])
        except argparse.ArgumentTypeError as exc:
            raise ArgumentError(f"{THREADS_ENV}: {exc}") from None
    cfg = CliConfig(subcommand=cmd, threads=threads, kernel=getattr(args, "kernel", "cubic"))
    if hasattr(args, "grid_points"):
        if not args.grid_min < args.grid_max:
            raise ArgumentError("--grid-min must be below --grid-max")
        cfg.grid = _grid_from(args)
    cfg.lam = getattr(args, "lam", "gml")
    cfg.seed = getattr(args, "seed", 0)
    cfg.K = getattr(args, "K", None)
    cfg.N = getattr(args, "N", None)
    cfg.outputs["out"] = args.out
    if cmd == "precompute":
        if cfg.N < 2:
            raise ArgumentError(f"--n-points must be at least 2, got {cfg.N}")
        cfg.outputs["eigenvalues_csv"] = args.eigenvalues_csv
    elif cmd == "fit":
        cfg.method = args.method
        cfg.inputs.update(data=args.data, cache=args.cache)
        if args.q is not None:
            if cfg.method != "RSR":
                raise ArgumentError("--q applies to --method rsr only")
            cfg.K = args.q
        if cfg.method in ("EIGEN", "NYSTROM") and cfg.K is None:
            raise ArgumentError(f"--method {cfg.method.lower()} needs --rank")
        if cfg.method == "EIGEN" and args.cache is None and not args.analytic:
            raise ArgumentError("--method eigen needs --cache (or --analytic for the periodic kernel)")
    elif cmd == "predict":
        cfg.inputs.update(fit=args.fit, cache=args.cache, points=args.points)
    elif cmd == "bounds":
        cfg.inputs.update(data=args.data, cache=args.cache)
    elif cmd == "simulate":
        cfg.inputs.update(scenario=args.scenario, cache=args.cache)
        cfg.outputs["manifest"] = args.manifest
    elif cmd == "bench":
        cfg.inputs.update(cache=args.cache)
        bad = [m for m in args.methods if m not in ("ALL", "EIGEN", "NYSTROM", "RSR")]
        if bad:
            raise ArgumentError(f"unknown method(s) {bad}")
    return cfg


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ArgumentError, InvalidFitError, UnsupportedKernelError)):
        return EXIT_USAGE
    if isinstance(exc, (OSError, CacheFormatError)):
        return EXIT_IO
    # solver failures and anything unexpected
    return EXIT_SOLVER


def _report(exc: BaseException, code: int) -> None:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    line = getattr(exc, "line", None)
    if line is not None:
        err["line"] = line
    print(json.dumps(err), file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = config_from_args(args)
        cfg.validate_paths()
        limits = threadpool_limits(limits=cfg.threads) if cfg.threads else contextlib.nullcontext()
        with limits:
            return COMMANDS[cfg.subcommand](cfg, args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:
        code = _exit_code(exc)
        _report(exc, code)
        return code


if __name__ == "__main__":
    sys.exit(main())
