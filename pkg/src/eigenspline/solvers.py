"""Exact and low-rank smoothing-spline fits, prediction, and GML selection.

All methods minimize a penalized least squares criterion with penalty
weight ``n * lam``, so ``lam`` is comparable across methods:

* ALL      exact fit over all n representers (QR route, O(n^3)).
* EIGEN    ridge problem on a truncated eigen-feature matrix Z.
* NYSTROM  ridge problem on ``C W^{-1/2}`` from K random Gram columns.
* RSR      fit over a random subset of q representers.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

import numpy as np
from scipy import linalg

from .eigensys import (
    EigenSystemCache,
    TruncatedEigenBasis,
    analytic_eigensystem,
    cache_feature_matrix,
    feature_matrix,
)
from .errors import (
    ArgumentError,
    DegenerateDesignError,
    InvalidFitError,
    NumericalError,
    SelectionError,
)
from .kernels import DataSet, Kernel, _check_unit_interval, gram_sigma, null_matrix

METHODS = ("ALL", "EIGEN", "NYSTROM", "RSR")
NYSTROM_FLOOR = 1e-10
RIDGE_COND_LIMIT = 1e8


@dataclass(frozen=True, eq=False)
class QRFactors:
    """``T = Q1 R``; the complement ``Q2`` (n x (n - p)) is built on first access."""

    T: np.ndarray
    Q1: np.ndarray
    R: np.ndarray

    @cached_property
    def Q2(self) -> np.ndarray:
        Q = linalg.qr(self.T, mode="full")[0]
        return Q[:, self.T.shape[1]:]


def qr_factors(T: np.ndarray) -> QRFactors:
    """Thin QR of the null-space matrix."""
    n, p = T.shape
    if n <= p:
        raise DegenerateDesignError(f"need n > p, got n={n}, p={p}")
    Q1, R = linalg.qr(T, mode="economic")
    if np.min(np.abs(np.diag(R))) <= n * np.finfo(float).eps * np.max(np.abs(R)):
        raise DegenerateDesignError("null-space matrix T is not of full column rank")
    return QRFactors(T, Q1, R)


# --- bases used for prediction ---------------------------------------------


@dataclass(frozen=True, eq=False)
class RepresenterBasis:
    """Kernel sections ``R1(., x_j)`` at a set of knots (ALL and RSR fits)."""

    kernel: Kernel
    knots: np.ndarray
    indices: Optional[np.ndarray] = None

    def features(self, xs) -> np.ndarray:
        return self.kernel.rk_matrix(xs, self.knots)

    def to_dict(self) -> dict:
        return {
            "type": "representers",
            "knots": self.knots.tolist(),
            "indices": None if self.indices is None else self.indices.tolist(),
        }


@dataclass(frozen=True, eq=False)
class AnalyticBasis:
    basis: TruncatedEigenBasis
    K: int

    def features(self, xs) -> np.ndarray:
        return feature_matrix(self.basis, xs, self.K)

    def to_dict(self) -> dict:
        return {"type": "analytic", "K": self.K}


@dataclass(frozen=True, eq=False)
class CachedBasis:
    cache: EigenSystemCache
    K: int
    cache_file: Optional[str] = None

    def features(self, xs) -> np.ndarray:
        return cache_feature_matrix(self.cache, xs, self.K)

    def to_dict(self) -> dict:
        return {
            "type": "cache",
            "K": self.K,
            "N": self.cache.N,
            "cache_file": self.cache_file,
            "cache_crc32": self.cache.checksum(),
        }


@dataclass(frozen=True, eq=False)
class NystromBasis:
    kernel: Kernel
    knots: np.ndarray
    indices: np.ndarray
    w_inv_sqrt: np.ndarray

    def features(self, xs) -> np.ndarray:
        return self.kernel.rk_matrix(xs, self.knots) @ self.w_inv_sqrt

    def to_dict(self) -> dict:
        return {"type": "nystrom", "knots": self.knots.tolist(), "indices": self.indices.tolist()}


Basis = Union[RepresenterBasis, AnalyticBasis, CachedBasis, NystromBasis]


@dataclass(frozen=True, eq=False)
class FitResult:
    """Everything needed to predict from a fit.

    ``coef`` holds the representer coefficients ``c`` for ALL/RSR and the
    feature coefficients ``b`` for EIGEN/NYSTROM.
    """

    method: str
    kernel_kind: str
    lam: float
    d: np.ndarray
    coef: np.ndarray
    basis: Optional[Basis]
    n: int
    K: int
    data_id: str = ""
    gml: Optional["GmlResult"] = field(default=None, repr=False)

    @property
    def c(self) -> np.ndarray:
        if self.method not in ("ALL", "RSR"):
            raise InvalidFitError(f"{self.method} fit has feature coefficients b, not c")
        return self.coef

    @property
    def b(self) -> np.ndarray:
        if self.method not in ("EIGEN", "NYSTROM"):
            raise InvalidFitError(f"{self.method} fit has representer coefficients c, not b")
        return self.coef

    @property
    def kernel(self) -> Kernel:
        return Kernel(self.kernel_kind)


def data_fingerprint(data: DataSet) -> str:
    h = hashlib.sha1(np.ascontiguousarray(data.x).tobytes())
    h.update(np.ascontiguousarray(data.y).tobytes())
    return h.hexdigest()[:16]


def _check_lambda(lam) -> float:
    lam = float(lam)
    if not np.isfinite(lam) or lam <= 0:
        raise ArgumentError(f"lambda must be a positive finite number, got {lam}")
    return lam


# --- exact fit --------------------------------------------------------------


def fit_exact(
    data: DataSet,
    kernel: Kernel,
    lam: float,
    *,
    sigma: Optional[np.ndarray] = None,
    qr: Optional[QRFactors] = None,
) -> FitResult:
    """Exact smoothing spline via the QR route.

    ``c = Q2 (Q2^T (Sigma + n lam I) Q2)^{-1} Q2^T y`` and
    ``d = R^{-1} Q1^T (y - (Sigma + n lam I) c)``.
    """
    lam = _check_lambda(lam)
    n = data.n
    if sigma is None:
        sigma = gram_sigma(kernel, data.x)
    if qr is None:
        qr = qr_factors(null_matrix(kernel, data.x))
    Q2 = qr.Q2
    G = Q2.T @ (sigma @ Q2)
    G = 0.5 * (G + G.T)
    G[np.diag_indices_from(G)] += n * lam
    try:
        factor = linalg.cho_factor(G, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"inner system not positive definite at lambda={lam:.3e}") from exc
    c = Q2 @ linalg.cho_solve(factor, Q2.T @ data.y)
    resid = data.y - sigma @ c - n * lam * c
    d = linalg.solve_triangular(qr.R, qr.Q1.T @ resid)
    return FitResult(
        "ALL", kernel.kind, lam, d, c, RepresenterBasis(kernel, data.x.copy()), n, n, data_fingerprint(data)
    )


# --- low-rank fits ----------------------------------------------------------


def ridge_solve(T: np.ndarray, Z: np.ndarray, y: np.ndarray, penalty: float):
    """Minimize ``||y - T d - Z b||^2 + penalty ||b||^2`` over (d, b)."""
    p, K = T.shape[1], Z.shape[1]
    X = np.hstack([T, Z])
    A = X.T @ X
    A[p + np.arange(K), p + np.arange(K)] += penalty
    rhs = X.T @ y
    coef = None
    if np.linalg.cond(A) <= RIDGE_COND_LIMIT:
        try:
            coef = linalg.cho_solve(linalg.cho_factor(A), rhs)
        except linalg.LinAlgError:
            coef = None
    if coef is None:
        aug = np.vstack([X, np.hstack([np.zeros((K, p)), np.sqrt(penalty) * np.eye(K)])])
        q, r = np.linalg.qr(aug)
        if np.min(np.abs(np.diag(r))) <= aug.shape[0] * np.finfo(float).eps * np.max(np.abs(r)):
            raise NumericalError("augmented ridge system is singular")
        coef = linalg.solve_triangular(r, q.T @ np.concatenate([y, np.zeros(K)]))
    return coef[:p], coef[p:]


def fit_lowrank(
    data: DataSet,
    T: np.ndarray,
    Z: np.ndarray,
    lam: float,
    *,
    basis: Optional[Basis] = None,
    method: str = "EIGEN",
    kernel_kind: str = "cubic",
) -> FitResult:
    """Minimize ``||y - T d - Z b||^2 + n lam ||b||^2``."""
    lam = _check_lambda(lam)
    Z = np.asarray(Z, dtype=float).reshape(data.n, -1)
    if T.shape[0] != data.n:
        raise ArgumentError("T and data have different numbers of rows")
    d, b = ridge_solve(T, Z, data.y, data.n * lam)
    return FitResult(method, kernel_kind, lam, d, b, basis, data.n, Z.shape[1], data_fingerprint(data))


def fit_eigen(data: DataSet, kernel: Kernel, source, K: int, lam: float, *, cache_file=None) -> FitResult:
    """EIGEN fit from an analytic basis or a precomputed cache."""
    if isinstance(source, EigenSystemCache):
        if source.kernel_kind != kernel.kind:
            raise ArgumentError(f"cache built for {source.kernel_kind!r}, kernel is {kernel.kind!r}")
        basis = CachedBasis(source, K, cache_file)
    else:
        basis = AnalyticBasis(source, K)
    Z = basis.features(data.x)
    T = null_matrix(kernel, data.x)
    return fit_lowrank(data, T, Z, lam, basis=basis, method="EIGEN", kernel_kind=kernel.kind)


def _inv_sqrt_psd(W: np.ndarray, floor: float = NYSTROM_FLOOR) -> np.ndarray:
    """Pseudo-inverse square root; eigenvalues below ``floor * max`` are dropped."""
    w, E = linalg.eigh(0.5 * (W + W.T))
    keep = w > floor * w.max()
    return (E[:, keep] / np.sqrt(w[keep])) @ E[:, keep].T


def select_indices(n: int, K: int, seed: int) -> np.ndarray:
    if not 1 <= K <= n:
        raise ArgumentError(f"K must satisfy 1 <= K <= n={n}, got {K}")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    return np.sort(rng.choice(n, size=K, replace=False))


def nystrom_features(data: DataSet, kernel: Kernel, K: int, seed: int):
    """``Z_N = C W^{-1/2}`` from K random columns; returns (Z_N, indices, W^{-1/2})."""
    sel = select_indices(data.n, K, seed)
    C = kernel.rk_matrix(data.x, data.x[sel])
    W = gram_sigma(kernel, data.x[sel])
    w_is = _inv_sqrt_psd(W)
    return C @ w_is, sel, w_is


def fit_nystrom(data: DataSet, kernel: Kernel, K: int, lam: float, seed: int) -> FitResult:
    Z, sel, w_is = nystrom_features(data, kernel, K, seed)
    basis = NystromBasis(kernel, data.x[sel].copy(), sel, w_is)
    T = null_matrix(kernel, data.x)
    return fit_lowrank(data, T, Z, lam, basis=basis, method="NYSTROM", kernel_kind=kernel.kind)


def rsr_size(n: int) -> int:
    """Default subset size ``max(30, ceil(10 n^{2/9}))``, capped at n."""
    return int(min(n, max(30, np.ceil(10.0 * n ** (2.0 / 9.0)))))


def _rsr_inv_sqrt(Sqq: np.ndarray) -> np.ndarray:
    jitter = 0.0
    for _ in range(2):
        try:
            return _inv_sqrt_psd(Sqq + jitter * np.eye(Sqq.shape[0]))
        except (linalg.LinAlgError, ValueError):
            jitter = 1e-10 * np.trace(Sqq) / Sqq.shape[0]
    raise NumericalError("representer subset system is singular after jitter")


def fit_rsr(data: DataSet, kernel: Kernel, q: int, lam: float, seed: int) -> FitResult:
    """Spline over q random representers.

    Minimizes ``||y - T d - S c||^2 + n lam c^T Sqq c`` with ``S = {R1(x_i, x_j)}_{j in subset}``.
    Well-conditioned problems use the normal equations directly; otherwise
    the problem is solved in whitened coordinates ``b = Sqq^{1/2} c``.
    """
    lam = _check_lambda(lam)
    T = null_matrix(kernel, data.x)
    if not T.shape[1] < q <= data.n:
        raise ArgumentError(f"q must satisfy p < q <= n, got q={q}")
    sel = select_indices(data.n, q, seed)
    S = kernel.rk_matrix(data.x, data.x[sel])
    Sqq = gram_sigma(kernel, data.x[sel])
    p, nl = T.shape[1], data.n * lam
    X = np.hstack([T, S])
    A = X.T @ X
    A[p:, p:] += nl * Sqq
    coef = None
    if np.linalg.cond(A) <= RIDGE_COND_LIMIT:
        try:
            coef = linalg.cho_solve(linalg.cho_factor(A), X.T @ data.y)
            d, c = coef[:p], coef[p:]
        except linalg.LinAlgError:
            coef = None
    if coef is None:
        w_is = _rsr_inv_sqrt(Sqq)
        d, b = ridge_solve(T, S @ w_is, data.y, nl)
        c = w_is @ b
    basis = RepresenterBasis(kernel, data.x[sel].copy(), sel)
    return FitResult("RSR", kernel.kind, lam, d, c, basis, data.n, q, data_fingerprint(data))


# --- prediction -------------------------------------------------------------


def predict(fit: FitResult, xs) -> np.ndarray:
    """Evaluate the fitted function at ``xs``."""
    if fit.basis is None:
        raise InvalidFitError("fit has no basis handle; cannot predict")
    xs = _check_unit_interval(xs, "xs").reshape(-1)
    f0 = fit.kernel.null_eval(xs) @ fit.d
    return f0 + fit.basis.features(xs) @ fit.coef


def predict_components(fit: FitResult, xs):
    """Null-space and penalized parts ``(f0(xs), f1(xs))`` separately."""
    if fit.basis is None:
        raise InvalidFitError("fit has no basis handle; cannot predict")
    xs = _check_unit_interval(xs, "xs").reshape(-1)
    return fit.kernel.null_eval(xs) @ fit.d, fit.basis.features(xs) @ fit.coef


# --- GML selection ----------------------------------------------------------


@dataclass(frozen=True)
class GmlGrid:
    log10_min: float = -12.0
    log10_max: float = 0.0
    points: int = 61
    refine_rtol: float = 1e-3

    def values(self) -> np.ndarray:
        if self.points < 2 or not self.log10_min < self.log10_max:
            raise ArgumentError("GML grid needs >= 2 points and log10_min < log10_max")
        return np.linspace(self.log10_min, self.log10_max, self.points)


@dataclass(frozen=True, eq=False)
class GmlResult:
    lam: float
    log10_grid: np.ndarray
    criterion: np.ndarray
    refined: bool

    def summary(self) -> dict:
        i = int(np.nanargmin(self.criterion))
        return {
            "lambda": self.lam,
            "grid_log10_min": float(self.log10_grid[0]),
            "grid_log10_max": float(self.log10_grid[-1]),
            "grid_points": int(self.log10_grid.size),
            "grid_argmin_lambda": float(10.0 ** self.log10_grid[i]),
            "grid_min_log_gml": float(self.criterion[i]),
            "refined": self.refined,
        }


class GmlCriterion:
    """``log GML(lam)`` from a spectral decomposition of ``Q2^T Sigma Q2``.

    ``mu`` are the eigenvalues on the non-null part, ``h`` the coordinates of
    ``z = Q2^T y`` on the corresponding eigenvectors, ``rss`` the squared norm
    of ``z`` orthogonal to them (eigenvalue zero).
    """

    def __init__(self, mu, h, rss, n, p):
        self.mu = np.maximum(np.asarray(mu, dtype=float), 0.0)
        self.h2 = np.asarray(h, dtype=float) ** 2
        self.rss = float(rss)
        self.n, self.p = n, p
        self.n_zero = (n - p) - self.mu.size

    def __call__(self, lam: float) -> float:
        nl = self.n * lam
        quad = np.sum(self.h2 / (self.mu + nl)) + (self.rss / nl if self.n_zero > 0 or self.rss > 0 else 0.0)
        logdet = np.sum(np.log(self.mu + nl)) + self.n_zero * np.log(nl)
        with np.errstate(divide="ignore"):  # z = 0 gives -inf, rejected by the caller
            return float(np.log(quad) + logdet / (self.n - self.p))

    def value(self, lam: float) -> float:
        return float(np.exp(self(lam)))


def gml_criterion(y, T, *, sigma=None, Z=None, qr: Optional[QRFactors] = None) -> GmlCriterion:
    """Build the GML criterion for a dense Gram ``sigma`` or low-rank features ``Z``."""
    y = np.asarray(y, dtype=float)
    n, p = T.shape
    if (sigma is None) == (Z is None):
        raise ArgumentError("pass exactly one of sigma or Z")
    if qr is None:
        qr = qr_factors(T)
    if sigma is not None:
        G = qr.Q2.T @ (sigma @ qr.Q2)
        mu, F = linalg.eigh(0.5 * (G + G.T))
        return GmlCriterion(mu, F.T @ (qr.Q2.T @ y), 0.0, n, p)
    Z = np.asarray(Z, dtype=float).reshape(n, -1)
    r = y - qr.Q1 @ (qr.Q1.T @ y)
    if Z.shape[1] == 0:
        return GmlCriterion(np.empty(0), np.empty(0), r @ r, n, p)
    Zr = Z - qr.Q1 @ (qr.Q1.T @ Z)
    mu, W = linalg.eigh(Zr.T @ Zr)
    keep = mu > 1e-12 * max(mu.max(), 0.0) if mu.max() > 0 else np.zeros(mu.size, bool)
    U = (Zr @ W[:, keep]) / np.sqrt(mu[keep])
    h = U.T @ r
    e = r - U @ h
    return GmlCriterion(mu[keep], h, e @ e, n, p)


def _golden(f, lo, hi, rtol):
    g = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while np.exp(b - a) - 1.0 > rtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def gml_select(y, T, *, sigma=None, Z=None, grid: Optional[GmlGrid] = None, qr=None) -> GmlResult:
    """Grid search of the GML criterion followed by golden-section refinement in log(lam)."""
    grid = grid or GmlGrid()
    crit = gml_criterion(y, T, sigma=sigma, Z=Z, qr=qr)
    lg = grid.values()
    vals = np.array([crit(10.0**t) for t in lg])
    vals[~np.isfinite(vals)] = np.nan
    if np.all(np.isnan(vals)):
        raise SelectionError("GML criterion is non-finite at every grid point")
    i = int(np.nanargmin(vals))
    ln10 = np.log(10.0)
    lo, hi = lg[max(i - 1, 0)] * ln10, lg[min(i + 1, lg.size - 1)] * ln10

    def f(t):
        v = crit(np.exp(t))
        return v if np.isfinite(v) else np.inf

    t_best, v_best = _golden(f, lo, hi, grid.refine_rtol)
    refined = v_best <= vals[i]
    lam = float(np.exp(t_best)) if refined else float(10.0 ** lg[i])
    return GmlResult(lam, lg, vals, bool(refined))


# --- one-call fitting used by the harness and CLI ---------------------------


def fit_method(
    data: DataSet,
    kernel: Kernel,
    method: str,
    *,
    lam: Union[float, str] = "gml",
    K: Optional[int] = None,
    source=None,
    seed: int = 0,
    grid: Optional[GmlGrid] = None,
    cache_file: Optional[str] = None,
) -> FitResult:
    """Fit any method, selecting ``lam`` by GML when ``lam == "gml"``.

    ``source`` is the eigen source for EIGEN (cache or analytic basis); for the
    periodic kernel it defaults to the analytic eigensystem.
    """
    method = method.upper()
    if method not in METHODS:
        raise ArgumentError(f"unknown method {method!r}; expected one of {METHODS}")
    use_gml = isinstance(lam, str)
    if use_gml and lam.lower() != "gml":
        raise ArgumentError(f"lambda must be a positive number or 'gml', got {lam!r}")
    T = null_matrix(kernel, data.x)
    qr = qr_factors(T)

    if method == "ALL":
        sigma = gram_sigma(kernel, data.x)
        gml = gml_select(data.y, T, sigma=sigma, grid=grid, qr=qr) if use_gml else None
        fit = fit_exact(data, kernel, gml.lam if gml else lam, sigma=sigma, qr=qr)
        return _with_gml(fit, gml)

    if K is None:
        raise ArgumentError(f"{method} needs a rank K (or subset size q)")
    if method == "EIGEN":
        if source is None:
            source = analytic_eigensystem(kernel, K)
        if isinstance(source, EigenSystemCache):
            if source.kernel_kind != kernel.kind:
                raise ArgumentError(f"cache built for {source.kernel_kind!r}, kernel is {kernel.kind!r}")
            basis: Basis = CachedBasis(source, K, cache_file)
        else:
            basis = AnalyticBasis(source, K)
        Z = basis.features(data.x)
    elif method == "NYSTROM":
        Z, sel, w_is = nystrom_features(data, kernel, K, seed)
        basis = NystromBasis(kernel, data.x[sel].copy(), sel, w_is)
    else:
        if use_gml:
            sel = select_indices(data.n, K, seed)
            Z = kernel.rk_matrix(data.x, data.x[sel]) @ _inv_sqrt_psd(gram_sigma(kernel, data.x[sel]))
            gml = gml_select(data.y, T, Z=Z, grid=grid, qr=qr)
            return _with_gml(fit_rsr(data, kernel, K, gml.lam, seed), gml)
        return fit_rsr(data, kernel, K, lam, seed)

    gml = gml_select(data.y, T, Z=Z, grid=grid, qr=qr) if use_gml else None
    fit = fit_lowrank(data, T, Z, gml.lam if gml else lam, basis=basis, method=method, kernel_kind=kernel.kind)
    return _with_gml(fit, gml)


def _with_gml(fit: FitResult, gml: Optional[GmlResult]) -> FitResult:
    if gml is None:
        return fit
    return FitResult(
        fit.method, fit.kernel_kind, fit.lam, fit.d, fit.coef, fit.basis, fit.n, fit.K, fit.data_id, gml
    )


def representer_coefficients(fit: FitResult, data: DataSet) -> np.ndarray:
    """Length-n coefficients ``c`` with ``T d + (Sigma_fit + n lam I) c = y``.

    For low-rank fits ``c = (y - T d - Z b) / (n lam)``; these satisfy
    ``Z^T c = b`` and ``T^T c = 0``.
    """
    if fit.data_id and fit.data_id != data_fingerprint(data):
        raise ArgumentError("fit was computed on different data")
    if fit.method == "ALL":
        return fit.coef
    resid = data.y - predict(fit, data.x)
    return resid / (data.n * fit.lam)


# --- JSON -------------------------------------------------------------------


def fit_to_dict(fit: FitResult) -> dict:
    out = {
        "method": fit.method,
        "kernel": fit.kernel_kind,
        "lambda": fit.lam,
        "n": fit.n,
        "K": fit.K,
        "d": fit.d.tolist(),
        "c" if fit.method in ("ALL", "RSR") else "b": fit.coef.tolist(),
        "basis": None if fit.basis is None else fit.basis.to_dict(),
        "data_id": fit.data_id,
    }
    if fit.gml is not None:
        out["gml"] = fit.gml.summary()
    return out


def fit_from_dict(obj: dict, cache: Optional[EigenSystemCache] = None) -> FitResult:
    """Rebuild a FitResult; EIGEN-from-cache fits need the matching ``cache``."""
    try:
        method = obj["method"]
        kernel = Kernel(obj["kernel"])
        coef = np.asarray(obj["c"] if method in ("ALL", "RSR") else obj["b"], dtype=float)
        meta = obj["basis"]
        d = np.asarray(obj["d"], dtype=float)
        lam = float(obj["lambda"])
    except KeyError as exc:
        raise InvalidFitError(f"fit JSON missing field {exc}") from exc
    basis: Optional[Basis] = None
    kind = meta and meta.get("type")
    if kind == "representers":
        idx = meta.get("indices")
        basis = RepresenterBasis(kernel, np.asarray(meta["knots"], float), None if idx is None else np.asarray(idx))
    elif kind == "nystrom":
        knots = np.asarray(meta["knots"], float)
        basis = NystromBasis(kernel, knots, np.asarray(meta["indices"]), _inv_sqrt_psd(gram_sigma(kernel, knots)))
    elif kind == "analytic":
        basis = AnalyticBasis(analytic_eigensystem(kernel, int(meta["K"])), int(meta["K"]))
    elif kind == "cache":
        if cache is None:
            raise InvalidFitError("EIGEN fit needs its eigensystem cache to predict")
        if cache.kernel_kind != kernel.kind:
            raise InvalidFitError(f"cache kernel {cache.kernel_kind!r} does not match fit kernel {kernel.kind!r}")
        if meta.get("cache_crc32") is not None and meta["cache_crc32"] != cache.checksum():
            raise InvalidFitError("cache does not match the one used for the fit (checksum differs)")
        basis = CachedBasis(cache, int(meta["K"]), meta.get("cache_file"))
    elif kind is not None:
        raise InvalidFitError(f"unknown basis type {kind!r}")
    return FitResult(method, kernel.kind, lam, d, coef, basis, int(obj["n"]), int(obj["K"]), obj.get("data_id", ""))
