"""Simulation harness: test functions, data generation, method grids, timings.

MSE, squared bias and variance are computed at the design points against
the true function and averaged over design points; CSV output reports them
in units of 1e-4.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import scipy
from scipy.special import gammaln

from .eigensys import EigenSystemCache, precompute_cache
from .errors import ArgumentError
from .kernels import CUBIC, DataSet, Kernel, _check_unit_interval
from .solvers import GmlGrid, fit_method, predict, rsr_size

TEST_FUNCTIONS = ("case1", "case2", "case3")
OUTPUT_SCALE = 1e4
CSV_HEADER = ("method", "case", "sigma", "bias2", "var", "mse", "seconds")
RNG_NAME = "philox4x64"


def beta_density(x, a: float, b: float):
    x = np.asarray(x, dtype=float)
    lognorm = gammaln(a + b) - gammaln(a) - gammaln(b)
    with np.errstate(divide="ignore"):
        out = np.exp(lognorm + (a - 1) * np.log(x) + (b - 1) * np.log1p(-x))
    return np.where((x > 0) & (x < 1), out, 0.0)


def eval_test_function(fid: str, x):
    """Case 1: two bumps; Case 2: three bumps; Case 3: 16-period oscillation plus a parabola."""
    arr = _check_unit_interval(x)
    if fid == "case1":
        out = 0.6 * beta_density(arr, 30, 17) + 0.4 * beta_density(arr, 3, 11)
    elif fid == "case2":
        out = (beta_density(arr, 20, 5) + beta_density(arr, 12, 12) + beta_density(arr, 7, 30)) / 3.0
    elif fid == "case3":
        out = np.sin(32 * np.pi * arr) - 8.0 * (arr - 0.5) ** 2
    else:
        raise ArgumentError(f"unknown test function {fid!r}; expected one of {TEST_FUNCTIONS}")
    return float(out) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class MethodSpec:
    """One method of the grid; ``ranks`` are K (EIGEN/NYSTROM) or q (RSR)."""

    name: str
    ranks: tuple = ()

    def cells(self):
        """(label, method, rank) triples, e.g. ("E30", "EIGEN", 30)."""
        name = self.name.upper()
        if name == "ALL":
            return [("ALL", "ALL", None)]
        if name == "RSR":
            if not self.ranks:
                return [("RSR", "RSR", None)]
            return [(f"RSR{k}", "RSR", k) for k in self.ranks]
        if name not in ("EIGEN", "NYSTROM"):
            raise ArgumentError(f"unknown method {self.name!r}")
        return [(f"{name[0]}{k}", name, k) for k in self.ranks]


@dataclass(frozen=True)
class SimScenario:
    function: str = "case1"
    n: int = 2000
    sigma: float = 0.1
    replicates: int = 20
    seed: int = 0
    methods: tuple = (
        MethodSpec("ALL"),
        MethodSpec("RSR"),
        MethodSpec("EIGEN", (50, 40, 30, 20, 10)),
        MethodSpec("NYSTROM", (50, 40, 30, 20, 10)),
    )
    N: int = 100
    lam: Union[str, float] = "gml"
    kernel: str = "cubic"

    def __post_init__(self):
        if self.function not in TEST_FUNCTIONS:
            raise ArgumentError(f"unknown test function {self.function!r}")
        if self.n <= 2 or self.replicates < 1:
            raise ArgumentError("need n > 2 and at least one replicate")
        if not self.sigma >= 0:
            raise ArgumentError("sigma must be non-negative")

    @property
    def x(self) -> np.ndarray:
        return np.arange(1, self.n + 1) / self.n

    def to_dict(self) -> dict:
        out = asdict(self)
        out["methods"] = [{"name": m.name, "ranks": list(m.ranks)} for m in self.methods]
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "SimScenario":
        obj = dict(obj)
        if "methods" in obj:
            obj["methods"] = tuple(MethodSpec(m["name"].upper(), tuple(m.get("ranks", ()))) for m in obj["methods"])
        return cls(**obj)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Independent counter-based stream per (seed, replicate)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replicate)])))


def generate_data(scenario: SimScenario, replicate: int) -> DataSet:
    x = scenario.x
    f = eval_test_function(scenario.function, x)
    if scenario.sigma == 0:
        return DataSet(x, f)
    eps = replicate_rng(scenario.seed, replicate).standard_normal(scenario.n)
    return DataSet(x, f + scenario.sigma * eps)


@dataclass
class MetricRow:
    method: str
    case: str
    sigma: float
    bias2: float
    var: float
    mse: float
    seconds: float
    error: Optional[str] = None

    def scaled(self) -> list:
        if self.error is not None:
            return [self.method, self.case, self.sigma, "nan", "nan", "nan", "nan"]
        return [
            self.method,
            self.case,
            self.sigma,
            f"{self.bias2 * OUTPUT_SCALE:.6f}",
            f"{self.var * OUTPUT_SCALE:.6f}",
            f"{self.mse * OUTPUT_SCALE:.6f}",
            f"{self.seconds:.6f}",
        ]


def decompose(fits: np.ndarray, truth: np.ndarray):
    """Per-point (mse, bias2, var) of replicate fits (rows) against the truth."""
    mean = fits.mean(axis=0)
    mse = np.mean((fits - truth) ** 2, axis=0)
    bias2 = (mean - truth) ** 2
    var = np.mean((fits - mean) ** 2, axis=0)
    return mse, bias2, var


def _cell_seed(seed: int, replicate: int, label: str) -> int:
    h = hashlib.sha256(f"{seed}:{replicate}:{label}".encode()).digest()
    return int.from_bytes(h[:8], "little")


def _run_cell(scenario, kernel, cache, label, name, K, data, replicate, grid):
    if name == "RSR" and K is None:
        K = rsr_size(scenario.n)
    t0 = time.perf_counter()
    fit = fit_method(
        data, kernel, name, lam=scenario.lam, K=K, source=cache if name == "EIGEN" else None,
        seed=_cell_seed(scenario.seed, replicate, label), grid=grid,
    )
    fitted = predict(fit, data.x)
    return fitted, time.perf_counter() - t0


def run_grid(
    scenario: SimScenario,
    cache: Optional[EigenSystemCache] = None,
    *,
    threads: int = 1,
    grid: Optional[GmlGrid] = None,
    return_fits: bool = False,
):
    """Run every (method, rank) cell over all replicates and aggregate metrics.

    A failing cell is recorded with its error message instead of aborting
    the grid.
    """
    kernel = Kernel(scenario.kernel)
    cells = [cell for m in scenario.methods for cell in m.cells()]
    needs_eigen = any(name == "EIGEN" for _, name, _ in cells)
    if needs_eigen and cache is None and kernel.kind == "cubic":
        cache = precompute_cache(kernel, scenario.N)
    truth = eval_test_function(scenario.function, scenario.x)

    def one_replicate(r):
        data = generate_data(scenario, r)
        out = {}
        for label, name, K in cells:
            try:
                out[label] = _run_cell(scenario, kernel, cache, label, name, K, data, r, grid)
            except Exception as exc:  # recorded per cell
                out[label] = exc
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one_replicate, range(scenario.replicates)))
    else:
        results = [one_replicate(r) for r in range(scenario.replicates)]

    rows, fits_by_label = [], {}
    for label, _, _ in cells:
        per_rep = [res[label] for res in results]
        failed = next((e for e in per_rep if isinstance(e, Exception)), None)
        if failed is not None:
            rows.append(MetricRow(label, scenario.function, scenario.sigma, np.nan, np.nan, np.nan, np.nan,
                                  error=f"{type(failed).__name__}: {failed}"))
            continue
        fits = np.vstack([f for f, _ in per_rep])
        mse, bias2, var = decompose(fits, truth)
        seconds = float(np.mean([t for _, t in per_rep]))
        rows.append(MetricRow(label, scenario.function, scenario.sigma,
                              float(np.mean(bias2)), float(np.mean(var)), float(np.mean(mse)), seconds))
        fits_by_label[label] = fits
    return (rows, fits_by_label) if return_fits else rows


def rows_csv(rows: Sequence[MetricRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.scaled())
    return buf.getvalue()


def run_manifest(scenarios: Sequence[SimScenario], extra: Optional[dict] = None) -> dict:
    from . import __version__

    manifest = {
        "config_hash": hashlib.sha256(
            json.dumps([s.to_dict() for s in scenarios], sort_keys=True).encode()
        ).hexdigest(),
        "scenarios": [s.to_dict() for s in scenarios],
        "seeds": [s.seed for s in scenarios],
        "rng": RNG_NAME,
        "versions": {
            "eigenspline": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    if extra:
        manifest.update(extra)
    return manifest


def load_scenarios(obj) -> list[SimScenario]:
    """Scenario JSON: a single object, a list, or ``{"scenarios": [...]}``.

    A ``"function"`` or ``"sigma"`` value may be a list, expanding to one
    scenario per combination.
    """
    if isinstance(obj, dict) and "scenarios" in obj:
        obj = obj["scenarios"]
    items = obj if isinstance(obj, list) else [obj]
    out = []
    for item in items:
        funcs = item.get("function", "case1")
        sigmas = item.get("sigma", 0.1)
        for fid in funcs if isinstance(funcs, list) else [funcs]:
            for sg in sigmas if isinstance(sigmas, list) else [sigmas]:
                out.append(SimScenario.from_dict({**item, "function": fid, "sigma": sg}))
    return out


# --- timing -----------------------------------------------------------------


@dataclass
class TimingRow:
    method: str
    n: int
    K: Optional[int]
    seconds: float
    repeats: int = field(default=0)


def timing_sweep(
    method: str,
    n_list: Sequence[int],
    K: Optional[int] = 30,
    repeats: int = 5,
    *,
    function: str = "case3",
    sigma: float = 0.1,
    seed: int = 0,
    cache: Optional[EigenSystemCache] = None,
    N: int = 100,
    kernel: Kernel = CUBIC,
) -> list[TimingRow]:
    """Median wall time of a full fit (GML selection included) per sample size.

    Cache precomputation is excluded; one warm-up fit precedes the timed runs.
    """
    method = method.upper()
    if method == "EIGEN" and cache is None:
        cache = precompute_cache(kernel, N)
    rows = []
    for n in n_list:
        scen = SimScenario(function=function, n=int(n), sigma=sigma, replicates=1, seed=seed)
        data = generate_data(scen, 0)

        def run():
            t0 = time.perf_counter()
            fit_method(data, kernel, method, lam="gml", K=K, source=cache if method == "EIGEN" else None, seed=seed)
            return time.perf_counter() - t0

        run()
        times = [run() for _ in range(repeats)]
        rows.append(TimingRow(method, int(n), K, statistics.median(times), repeats))
    return rows


def timing_csv(rows: Sequence[TimingRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("method", "n", "K", "seconds"))
    for r in rows:
        w.writerow([r.method, r.n, "" if r.K is None else r.K, f"{r.seconds:.6f}"])
    return buf.getvalue()
