"""Computable error bounds for truncated and grid-approximated eigen fits.

Notation follows the fitting code: ``f_hat`` is the exact spline, ``f_tilde``
the fit on the true top-K eigenspace and ``f_check`` the fit on the
grid-approximated top-K eigenspace.

The inverse-eigenvalue sums B are evaluated in their regularized form
``sum_k (lambda_k + n lam)^-2``. The unregularized sums ``sum_k lambda_k^-2``
are infinite whenever the truncated Gram is rank deficient (always, for
K < n - p); they are reported as ``*_literal`` for reference only.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy import linalg

from .eigensys import (
    EigenSystemCache,
    TruncatedEigenBasis,
    analytic_eigensystem,
    approx_eigenfunctions,
    eigen_clusters,
    feature_matrix,
)
from .errors import ArgumentError, UnsupportedKernelError
from .kernels import PERIODIC, DataSet, gram_sigma, null_matrix
from .solvers import (
    FitResult,
    QRFactors,
    fit_eigen,
    fit_exact,
    gml_select,
    predict_components,
    qr_factors,
    representer_coefficients,
)

DEFAULT_QUADRATURE_POINTS = 10_001
EPS = float(np.finfo(float).eps)


def quadrature_grid(points: int = DEFAULT_QUADRATURE_POINTS):
    """Composite trapezoid nodes and weights on [0, 1]."""
    x = np.linspace(0.0, 1.0, points)
    w = np.full(points, 1.0 / (points - 1))
    w[[0, -1]] *= 0.5
    return x, w


def periodic_truth(x):
    """Smooth periodic test function used by the bound sweeps."""
    x = np.asarray(x, dtype=float)
    return np.sin(2 * np.pi * x) + 0.5 * np.cos(6 * np.pi * x)


@dataclass
class ObservedErrors:
    f: float
    f0: float
    f1: float
    d: float
    c: Optional[float] = None


def observed_errors(fit_a: FitResult, fit_b: FitResult, points: int = DEFAULT_QUADRATURE_POINTS, data=None):
    """Squared L2 distances on [0, 1] between two fits, overall and per component.

    ``c`` (squared distance of length-n representer coefficients) is filled
    when ``data`` is given.
    """
    if fit_a.data_id != fit_b.data_id or fit_a.n != fit_b.n:
        raise ArgumentError("fits were computed on different data")
    x, w = quadrature_grid(points)
    a0, a1 = predict_components(fit_a, x)
    b0, b1 = predict_components(fit_b, x)
    d0, d1 = a0 - b0, a1 - b1
    dc = None
    if data is not None:
        diff = representer_coefficients(fit_a, data) - representer_coefficients(fit_b, data)
        dc = float(diff @ diff)
    return ObservedErrors(
        f=float(w @ (d0 + d1) ** 2),
        f0=float(w @ d0**2),
        f1=float(w @ d1**2),
        d=float(np.sum((fit_a.d - fit_b.d) ** 2)),
        c=dc,
    )


def _projected_eigs(qr: QRFactors, S: np.ndarray) -> np.ndarray:
    G = qr.Q2.T @ (S @ qr.Q2)
    return linalg.eigvalsh(0.5 * (G + G.T))


def _b_sums(eigs: np.ndarray, n: int, lam: float):
    regularized = float(np.sum((eigs + n * lam) ** -2.0))
    literal = float(np.sum(eigs**-2.0)) if np.all(eigs > 0) else math.inf
    return regularized, literal


def lambda_max_A(qr: QRFactors) -> float:
    """Largest eigenvalue of ``T (T^T T)^-2 T^T``, i.e. ``1 / sigma_min(T)^2``."""
    return float(1.0 / linalg.svdvals(qr.R).min() ** 2)


@dataclass
class BoundReport:
    kind: str
    n: int
    p: int
    K: int
    lam: float
    zeta1: float = 0.0
    lambda_max_A: float = 0.0
    c_norm_sq: float = 0.0
    frob_diff_sq: float = 0.0
    frob_approx_sq: float = 0.0
    kappa: float = 0.0
    kappa_empirical: bool = False
    C_K: float = 0.0
    # truncation quantities
    zeta2: Optional[float] = None
    zeta3: Optional[float] = None
    B: Optional[float] = None
    B_tilde: Optional[float] = None
    B_literal: Optional[float] = None
    B_tilde_literal: Optional[float] = None
    D_K: Optional[float] = None
    # grid-approximation quantities
    zeta2_prime: Optional[float] = None
    zeta3_prime: Optional[float] = None
    zeta4: Optional[float] = None
    B_check: Optional[float] = None
    B_check_literal: Optional[float] = None
    C_K_prime: Optional[float] = None
    kappa_prime: Optional[float] = None
    c_tilde_norm_sq: Optional[float] = None
    c_check_norm_sq: Optional[float] = None
    eigenfunction_diff_sq: Optional[float] = None
    pointwise_diff_sq: Optional[float] = None
    eigenvalue_diff_sq: Optional[float] = None
    subspace_distances: list = field(default_factory=list)
    degenerate_clusters: list = field(default_factory=list)
    # spectra of Q2^T S Q2
    eigs_exact: Optional[np.ndarray] = None
    eigs_approx: Optional[np.ndarray] = None
    # bounds and observed values
    bound_c: Optional[float] = None
    bound_d: Optional[float] = None
    bound_f0: float = 0.0
    bound_f1: float = 0.0
    bound_f: float = 0.0
    observed_c: Optional[float] = None
    observed_d: Optional[float] = None
    observed_f0: Optional[float] = None
    observed_f1: Optional[float] = None
    observed_f: Optional[float] = None
    combined_bound: Optional[float] = None
    observed_combined: Optional[float] = None
    caveats: list = field(default_factory=list)
    # squared-error level indistinguishable from zero, per compared quantity
    roundoff: dict = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        pairs = [
            ("f0", self.observed_f0, self.bound_f0),
            ("f1", self.observed_f1, self.bound_f1),
            ("f", self.observed_f, self.bound_f),
            ("c", self.observed_c, self.bound_c),
            ("d", self.observed_d, self.bound_d),
            ("f", self.observed_combined, self.combined_bound),
        ]
        return all(o <= b + self.roundoff.get(k, 0.0) for k, o, b in pairs if o is not None and b is not None)

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            if isinstance(v, np.ndarray):
                v = v.tolist()
            if isinstance(v, float) and not math.isfinite(v):
                v = None
            out[k] = v
        out["valid"] = self.valid
        return out


def _common(exact_like: FitResult, approx: FitResult, qr: QRFactors, data: DataSet):
    if exact_like.data_id != approx.data_id:
        raise ArgumentError("fits were computed on different data")
    if not math.isclose(exact_like.lam, approx.lam, rel_tol=1e-12):
        raise ArgumentError(f"fits use different lambda ({exact_like.lam} vs {approx.lam})")
    n, p = qr.Q1.shape
    z = qr.Q2.T @ data.y
    # ||Q2||_F^2 = n - p for orthonormal columns
    zeta1 = float((n - p) ** 3 * (z @ z))
    return n, p, zeta1


def _roundoff_floors(n: int, fit: FitResult, data: DataSet, c: np.ndarray, sigma) -> dict:
    scale_f = float(np.max(np.abs(predict_components(fit, data.x)[0]))) + float(np.max(np.abs(data.y)))
    f = (n * EPS * scale_f) ** 2
    # forward error of c is driven by the conditioning of Sigma + n lam I
    nl = n * fit.lam
    cond = (float(np.linalg.norm(sigma, 2)) + nl) / nl
    return {"f0": f, "f1": f, "f": f, "d": f, "c": (n * EPS * cond * float(np.linalg.norm(c))) ** 2}


def lemma1_bounds(exact: FitResult, trunc: FitResult, sigma, sigma_t, qr: QRFactors, data: DataSet) -> BoundReport:
    """Coefficient error bounds for a truncated fit against the exact fit."""
    n, p, zeta1 = _common(exact, trunc, qr, data)
    lam = exact.lam
    eigs = _projected_eigs(qr, sigma)
    eigs_t = _projected_eigs(qr, sigma_t)
    B, B_lit = _b_sums(eigs, n, lam)
    Bt, Bt_lit = _b_sums(eigs_t, n, lam)
    frob = float(np.sum((sigma_t - sigma) ** 2))
    caveats = []
    # Sigma_tilde rebuilt from a complete eigensystem differs from Sigma only by round-off
    if math.sqrt(frob) <= n * EPS * float(np.linalg.norm(sigma)):
        frob = 0.0
        caveats.append("approximate Gram equals the exact Gram to working precision")
    c = exact.c
    lam_a = lambda_max_A(qr)
    zeta2 = 2.0 * lam_a * (zeta1 * B * Bt * float(np.sum(sigma_t**2)) + float(c @ c))
    c_t = representer_coefficients(trunc, data)
    return BoundReport(
        kind="lemma1",
        n=n,
        p=p,
        K=trunc.K,
        lam=lam,
        zeta1=zeta1,
        lambda_max_A=lam_a,
        c_norm_sq=float(c @ c),
        frob_diff_sq=frob,
        frob_approx_sq=float(np.sum(sigma_t**2)),
        zeta2=zeta2,
        B=B,
        B_tilde=Bt,
        B_literal=B_lit,
        B_tilde_literal=Bt_lit,
        eigs_exact=eigs,
        eigs_approx=eigs_t,
        bound_c=zeta1 * B * Bt * frob,
        bound_d=zeta2 * frob,
        observed_c=float(np.sum((c_t - c) ** 2)),
        observed_d=float(np.sum((trunc.d - exact.d) ** 2)),
        roundoff=_roundoff_floors(n, exact, data, c, sigma),
        caveats=caveats,
    )


def _envelope(basis: TruncatedEigenBasis, x) -> tuple[float, bool]:
    if basis.envelope is not None:
        return basis.envelope, False
    return float(np.max(np.abs(basis.evaluate(x)))), True


def theorem1_bounds(
    exact: FitResult,
    trunc: FitResult,
    basis: TruncatedEigenBasis,
    sigma,
    sigma_t,
    qr: QRFactors,
    data: DataSet,
    points: int = DEFAULT_QUADRATURE_POINTS,
) -> BoundReport:
    """Function-space bounds for the truncated-eigenspace fit against the exact fit."""
    if basis.tail is None:
        raise UnsupportedKernelError("eigenbasis has no tail rule for D_K")
    rep = lemma1_bounds(exact, trunc, sigma, sigma_t, qr, data)
    K, n = trunc.K, rep.n
    delta = basis.delta[:K]
    C_K = float(np.sum(delta**2))
    D_K = float(basis.tail(K))
    kappa, empirical = _envelope(basis, data.x)
    kB = rep.zeta1 * rep.B * rep.B_tilde
    zeta3 = n * kappa**2 * C_K * kB
    tail_term = n * kappa**2 * rep.c_norm_sq * D_K
    rep.kind = "theorem1"
    rep.C_K, rep.D_K, rep.kappa, rep.kappa_empirical = C_K, D_K, kappa, empirical
    rep.zeta3 = zeta3
    rep.bound_f0 = rep.zeta2 * rep.frob_diff_sq
    rep.bound_f1 = zeta3 * rep.frob_diff_sq + tail_term
    rep.bound_f = 2.0 * (rep.zeta2 + zeta3) * rep.frob_diff_sq + 2.0 * tail_term
    obs = observed_errors(trunc, exact, points)
    rep.observed_f0, rep.observed_f1, rep.observed_f = obs.f0, obs.f1, obs.f
    if empirical:
        rep.caveats.append("kappa is the empirical max over computed modes at the design points")
    if basis.kernel_kind != "periodic":
        rep.caveats.append("null basis is not L2-orthonormal; f0 bound assumes orthonormality")
        rep.caveats.append("D_K is an extrapolated estimate")
    return rep


def _align_cluster(target, source, w):
    """Orthogonal R minimizing ||target R - source||_w for same-cluster function columns."""
    M = target.T @ (w[:, None] * source)
    U, _, Vt = linalg.svd(M)
    return U @ Vt


def _subspace_distance(A, B, w):
    sw = np.sqrt(w)[:, None]
    qa, _ = np.linalg.qr(sw * A)
    qb, _ = np.linalg.qr(sw * B)
    s = linalg.svdvals(qa.T @ qb)
    return float(np.sqrt(max(0.0, 1.0 - s.min() ** 2)))


def eigenfunction_discrepancies(basis: TruncatedEigenBasis, cache: EigenSystemCache, K: int, x, points=DEFAULT_QUADRATURE_POINTS):
    """Differences between analytic and grid-approximated eigensystems.

    Within each cluster of equal analytic eigenvalues the analytic
    eigenfunctions are rotated to best match the approximate ones; any
    orthonormal basis of the cluster is an equally valid eigenbasis.

    Returns a dict with the aligned analytic values at ``x``, the approximate
    values at ``x``, the squared L2 distances per mode, the eigenvalue
    differences, per-cluster subspace distances and degenerate clusters.
    """
    g, w = quadrature_grid(points)
    psi_g = basis.evaluate(g)[:, :K]
    psi_x = basis.evaluate(x)[:, :K]
    chk_g = approx_eigenfunctions(cache, g, K)
    chk_x = approx_eigenfunctions(cache, x, K)
    aligned_g = np.empty_like(psi_g)
    aligned_x = np.empty_like(psi_x)
    dists, degenerate = [], []
    for idx in eigen_clusters(basis.delta[:K]):
        R = _align_cluster(psi_g[:, idx], chk_g[:, idx], w)
        aligned_g[:, idx] = psi_g[:, idx] @ R
        aligned_x[:, idx] = psi_x[:, idx] @ R
        dists.append(_subspace_distance(psi_g[:, idx], chk_g[:, idx], w))
        if idx.size > 1:
            degenerate.append([int(i) + 1 for i in idx])
    l2 = w @ (chk_g - aligned_g) ** 2
    return {
        "analytic_x": aligned_x,
        "approx_x": chk_x,
        "l2_sq": l2,
        "delta_diff": cache.delta[:K] - basis.delta[:K],
        "subspace": dists,
        "degenerate": degenerate,
    }


def theorem2_bounds(
    trunc: FitResult,
    cached: FitResult,
    basis: TruncatedEigenBasis,
    cache: EigenSystemCache,
    sigma_t,
    sigma_c,
    qr: QRFactors,
    data: DataSet,
    *,
    exact: Optional[FitResult] = None,
    sigma=None,
    points: int = DEFAULT_QUADRATURE_POINTS,
) -> BoundReport:
    """Bounds for the grid-approximated fit against the true truncated fit.

    With ``exact`` and ``sigma`` also evaluates the combined chain
    ``||f_check - f_hat||^2 <= 2 ||f_check - f_tilde||^2 + 2 ||f_tilde - f_hat||^2``.
    """
    if basis is None or basis.kernel_kind != "periodic" or basis.envelope is None:
        raise UnsupportedKernelError("grid-approximation bounds need an analytic reference eigensystem")
    if cached.K != trunc.K:
        raise ArgumentError(f"fits use different ranks ({trunc.K} vs {cached.K})")
    n, p, zeta1 = _common(trunc, cached, qr, data)
    K, lam = trunc.K, trunc.lam
    eigs_t = _projected_eigs(qr, sigma_t)
    eigs_c = _projected_eigs(qr, sigma_c)
    Bt, Bt_lit = _b_sums(eigs_t, n, lam)
    Bc, Bc_lit = _b_sums(eigs_c, n, lam)
    frob = float(np.sum((sigma_c - sigma_t) ** 2))
    frob_t = float(np.sum(sigma_t**2))
    c_t = representer_coefficients(trunc, data)
    c_c = representer_coefficients(cached, data)
    ct2, cc2 = float(c_t @ c_t), float(c_c @ c_c)
    lam_a = lambda_max_A(qr)
    kappa = basis.envelope
    C_K = float(np.sum(basis.delta[:K] ** 2))
    delta_chk = cache.delta[:K]
    C_Kp = float(np.sum(delta_chk**2))

    disc = eigenfunction_discrepancies(basis, cache, K, data.x, points)
    kappa_p = float(np.max(np.abs(disc["approx_x"])))
    phi_sum = float(np.sum(disc["l2_sq"]))
    pointwise = float(np.sum(delta_chk**2 * np.sum((disc["approx_x"] - disc["analytic_x"]) ** 2, axis=0)))
    eig_diff = float(np.sum(disc["delta_diff"] ** 2))

    kB = zeta1 * Bt * Bc
    zeta2p = 2.0 * lam_a * (kB * frob_t + ct2)
    zeta3p = n * kappa**2 * C_K * kB
    zeta4 = cc2 * n * kappa_p**2 * C_Kp
    rep = BoundReport(
        kind="theorem2",
        n=n,
        p=p,
        K=K,
        lam=lam,
        zeta1=zeta1,
        lambda_max_A=lam_a,
        c_norm_sq=ct2,
        frob_diff_sq=frob,
        frob_approx_sq=frob_t,
        kappa=kappa,
        C_K=C_K,
        zeta2_prime=zeta2p,
        zeta3_prime=zeta3p,
        zeta4=zeta4,
        B_tilde=Bt,
        B_tilde_literal=Bt_lit,
        B_check=Bc,
        B_check_literal=Bc_lit,
        C_K_prime=C_Kp,
        kappa_prime=kappa_p,
        c_tilde_norm_sq=ct2,
        c_check_norm_sq=cc2,
        eigenfunction_diff_sq=phi_sum,
        pointwise_diff_sq=pointwise,
        eigenvalue_diff_sq=eig_diff,
        subspace_distances=disc["subspace"],
        degenerate_clusters=disc["degenerate"],
        eigs_exact=eigs_t,
        eigs_approx=eigs_c,
        bound_c=kB * frob,
        bound_d=zeta2p * frob,
    )
    rep.bound_f0 = zeta2p * frob
    rep.bound_f1 = 2 * zeta4 * phi_sum + 6 * cc2 * pointwise + 6 * n * kappa**2 * cc2 * eig_diff + 6 * zeta3p * frob
    rep.bound_f = (
        4 * zeta4 * phi_sum + 12 * cc2 * pointwise + 12 * n * kappa**2 * cc2 * eig_diff + (12 * zeta3p + 2 * zeta2p) * frob
    )
    obs = observed_errors(cached, trunc, points)
    rep.observed_f0, rep.observed_f1, rep.observed_f = obs.f0, obs.f1, obs.f
    rep.observed_c = float(np.sum((c_c - c_t) ** 2))
    rep.observed_d = float(np.sum((cached.d - trunc.d) ** 2))
    rep.caveats.append("kappa_prime is the empirical max of the approximate eigenfunctions at the design points")
    if rep.degenerate_clusters:
        rep.caveats.append("degenerate eigenvalue clusters compared after in-cluster alignment")
    if exact is not None:
        if sigma is None:
            raise ArgumentError("combined chain needs the exact Gram matrix")
        t1 = theorem1_bounds(exact, trunc, basis, sigma, sigma_t, qr, data, points)
        rep.combined_bound = 2.0 * rep.bound_f + 2.0 * t1.bound_f
        rep.observed_combined = observed_errors(cached, exact, points).f
    return rep


# --- sweeps -----------------------------------------------------------------


def _periodic_instance(n: int, sigma_noise: float, seed: int, truth=periodic_truth):
    x = np.arange(1, n + 1) / n
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    data = DataSet(x, truth(x) + sigma_noise * rng.standard_normal(n))
    sigma = gram_sigma(PERIODIC, x)
    qr = qr_factors(null_matrix(PERIODIC, x))
    lam = gml_select(data.y, qr.Q1 @ qr.R, sigma=sigma, qr=qr).lam
    return data, sigma, qr, lam


def theorem1_sweep(n=200, ranks=(5, 10, 20, 40), seeds=range(20), noise=0.1, points=DEFAULT_QUADRATURE_POINTS):
    """Truncation-bound reports on periodic-kernel instances, one per (seed, K)."""
    reports = []
    for seed in seeds:
        data, sigma, qr, lam = _periodic_instance(n, noise, seed)
        exact = fit_exact(data, PERIODIC, lam, sigma=sigma, qr=qr)
        for K in ranks:
            basis = analytic_eigensystem(PERIODIC, K)
            trunc = fit_eigen(data, PERIODIC, basis, K, lam)
            Zt = feature_matrix(basis, data.x, K)
            reports.append((seed, theorem1_bounds(exact, trunc, basis, sigma, Zt @ Zt.T, qr, data, points)))
    return reports


def theorem2_sweep(n=200, N=400, K=10, seeds=range(20), noise=0.1, cache=None, combined=False, points=DEFAULT_QUADRATURE_POINTS):
    """Grid-approximation bound reports on periodic-kernel instances, one per seed."""
    from .eigensys import precompute_cache

    cache = cache or precompute_cache(PERIODIC, N)
    basis = analytic_eigensystem(PERIODIC, K)
    reports = []
    for seed in seeds:
        data, sigma, qr, lam = _periodic_instance(n, noise, seed)
        trunc = fit_eigen(data, PERIODIC, basis, K, lam)
        chk = fit_eigen(data, PERIODIC, cache, K, lam)
        Zt = feature_matrix(basis, data.x, K)
        Zc = feature_matrix(cache, data.x, K)
        exact = fit_exact(data, PERIODIC, lam, sigma=sigma, qr=qr) if combined else None
        rep = theorem2_bounds(
            trunc, chk, basis, cache, Zt @ Zt.T, Zc @ Zc.T, qr, data,
            exact=exact, sigma=sigma if combined else None, points=points,
        )
        reports.append((seed, rep))
    return reports


SWEEP_HEADER = ("seed", "kind", "K", "lambda", "observed_f0", "bound_f0", "observed_f1", "bound_f1", "observed_f", "bound_f", "valid")


def sweep_csv(reports: Iterable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for seed, r in reports:
        w.writerow([seed, r.kind, r.K, repr(r.lam), repr(r.observed_f0), repr(r.bound_f0),
                    repr(r.observed_f1), repr(r.bound_f1), repr(r.observed_f), repr(r.bound_f), int(r.valid)])
    return buf.getvalue()
