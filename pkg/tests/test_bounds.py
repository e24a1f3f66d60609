import json
from dataclasses import replace

import numpy as np
import pytest

from conftest import case_data, periodic_data
from eigenspline.bounds import (
    SWEEP_HEADER,
    BoundReport,
    lambda_max_A,
    lemma1_bounds,
    observed_errors,
    sweep_csv,
    theorem1_bounds,
    theorem1_sweep,
    theorem2_bounds,
    theorem2_sweep,
)
from eigenspline.eigensys import (
    EigenSystemCache,
    analytic_eigensystem,
    cached_eigenbasis,
    feature_matrix,
    periodic_tail,
    precompute_cache,
)
from eigenspline.errors import ArgumentError, UnsupportedKernelError
from eigenspline.kernels import CUBIC, PERIODIC, gram_sigma, null_matrix
from eigenspline.solvers import fit_eigen, fit_exact, gml_select, qr_factors

POINTS = 4001


def _instance(n=200, seed=0, lam=None):
    data = periodic_data(n, seed=seed, f=lambda t: np.sin(2 * np.pi * t) + 0.5 * np.cos(6 * np.pi * t))
    sigma = gram_sigma(PERIODIC, data.x)
    qr = qr_factors(null_matrix(PERIODIC, data.x))
    if lam is None:
        lam = gml_select(data.y, qr.Q1 @ qr.R, sigma=sigma, qr=qr).lam
    return data, sigma, qr, lam


def _gram(src, x, K):
    Z = feature_matrix(src, x, K)
    return Z @ Z.T


def _synthetic_cache(N):
    """Cache holding the analytic eigensystem sampled on the grid (gamma_k = N delta_k)."""
    s = np.arange(1, N + 1) / N
    basis = analytic_eigensystem(PERIODIC, N - 1)
    V = np.hstack([basis.evaluate(s), np.ones((N, 1))]) / np.sqrt(N)
    V /= np.linalg.norm(V, axis=0)
    gamma = np.concatenate([N * basis.delta, [0.0]])
    return EigenSystemCache("periodic", s, gamma, V)


class TestObservedErrors:
    def test_self_distance_is_zero(self):
        data, sigma, qr, lam = _instance(80)
        fit = fit_exact(data, PERIODIC, lam, sigma=sigma, qr=qr)
        obs = observed_errors(fit, fit, data=data)
        assert obs.f == 0.0 and obs.f0 == 0.0 and obs.f1 == 0.0 and obs.c == 0.0

    def test_constant_offset(self):
        data, sigma, qr, lam = _instance(80)
        fit = fit_exact(data, PERIODIC, lam, sigma=sigma, qr=qr)
        shifted = replace(fit, d=fit.d + 0.37)
        obs = observed_errors(shifted, fit)
        assert obs.f == pytest.approx(0.37**2, abs=1e-10)
        assert obs.f1 == 0.0

    def test_mismatched_data(self):
        a = fit_exact(periodic_data(50, seed=1), PERIODIC, 1e-4)
        b = fit_exact(periodic_data(50, seed=2), PERIODIC, 1e-4)
        with pytest.raises(ArgumentError):
            observed_errors(a, b)

    def test_case3_rank_ordering(self, cubic_cache):
        data = case_data("case3", 500)
        lam = 1e-7
        exact = fit_exact(data, CUBIC, lam)
        far = observed_errors(fit_eigen(data, CUBIC, cubic_cache, 10, lam), exact).f
        near = observed_errors(fit_eigen(data, CUBIC, cubic_cache, 40, lam), exact).f
        assert far > 1e3 * near


class TestLemma1:
    def test_zeta1_identity(self):
        data, sigma, qr, lam = _instance(120)
        exact = fit_exact(data, PERIODIC, lam, sigma=sigma, qr=qr)
        basis = analytic_eigensystem(PERIODIC, 10)
        rep = lemma1_bounds(exact, fit_eigen(data, PERIODIC, basis, 10, lam), sigma, _gram(basis, data.x, 10), qr, data)
        direct = np.sum(qr.Q2**2) ** 3 * np.sum((qr.Q2.T @ data.y) ** 2)
        assert rep.zeta1 == pytest.approx(direct, rel=1e-10)

    def test_full_rank_gram_gives_zero_bounds(self):
        # fixed lambda: the c round-off grows like cond(Sigma + n lam I)
        data, sigma, qr, lam = _instance(100, lam=1e-6)
        cache = precompute_cache(PERIODIC, 100)  # nodes coincide with the design
        K = cache.n_positive
        exact = fit_exact(data, PERIODIC, lam, sigma=sigma, qr=qr)
        trunc = fit_eigen(data, PERIODIC, cache, K, lam)
        rep = lemma1_bounds(exact, trunc, sigma, _gram(cache, data.x, K), qr, data)
        assert rep.bound_c == 0.0 and rep.bound_d == 0.0
        assert np.sqrt(rep.observed_c) <= 1e-8
        assert rep.valid

    def test_coefficient_bound_holds(self):
        basis = analytic_eigensystem(PERIODIC, 20)
        for seed in range(20):
            data, sigma, qr, lam = _instance(200, seed)
            exact = fit_exact(data, PERIODIC, lam, sigma=sigma, qr=qr)
            rep = lemma1_bounds(exact, fit_eigen(data, PERIODIC, basis, 20, lam), sigma, _gram(basis, data.x, 20), qr, data)
            assert rep.observed_c <= rep.bound_c
            assert rep.observed_d <= rep.bound_d

    def test_lambda_mismatch(self):
        data, sigma, qr, lam = _instance(60)
        basis = analytic_eigensystem(PERIODIC, 6)
        exact = fit_exact(data, PERIODIC, lam, sigma=sigma, qr=qr)
        trunc = fit_eigen(data, PERIODIC, basis, 6, 2 * lam)
        with pytest.raises(ArgumentError):
            lemma1_bounds(exact, trunc, sigma, _gram(basis, data.x, 6), qr, data)

    @pytest.mark.parametrize("n", [20, 90, 200])
    def test_lambda_max_A(self, n):
        T = null_matrix(CUBIC, np.sort(np.random.default_rng(n).uniform(0, 1, n)))
        G = np.linalg.inv(T.T @ T)
        A = T @ G @ G @ T.T
        assert lambda_max_A(qr_factors(T)) == pytest.approx(np.linalg.eigvalsh(A).max(), rel=1e-8)


class TestTheorem1:
    @pytest.mark.parametrize("K", [10, 20, 40])
    def test_function_bound_holds(self, K):
        data, sigma, qr, lam = _instance(200, seed=3)
        basis = analytic_eigensystem(PERIODIC, K)
        exact = fit_exact(data, PERIODIC, lam, sigma=sigma, qr=qr)
        rep = theorem1_bounds(exact, fit_eigen(data, PERIODIC, basis, K, lam), basis, sigma, _gram(basis, data.x, K), qr, data, POINTS)
        assert rep.observed_f <= rep.bound_f
        assert rep.observed_f0 <= rep.bound_f0 and rep.observed_f1 <= rep.bound_f1
        assert rep.D_K == periodic_tail(K)
        assert rep.kappa == np.sqrt(2.0) and not rep.kappa_empirical
        assert rep.bound_f == pytest.approx(2 * rep.bound_f0 + 2 * rep.bound_f1, rel=1e-12)

    def test_full_rank_bound_reduces_to_tail(self):
        data, sigma, qr, lam = _instance(100)
        cache = precompute_cache(PERIODIC, 100)
        K = cache.n_positive
        basis = cached_eigenbasis(cache, K)
        exact = fit_exact(data, PERIODIC, lam, sigma=sigma, qr=qr)
        rep = theorem1_bounds(exact, fit_eigen(data, PERIODIC, cache, K, lam), basis, sigma, _gram(cache, data.x, K), qr, data, POINTS)
        assert rep.bound_f0 == 0.0
        assert rep.bound_f == pytest.approx(2 * data.n * rep.kappa**2 * rep.c_norm_sq * rep.D_K, rel=1e-12)
        assert rep.valid

    def test_spectral_sums_monotone(self):
        data, sigma, qr, lam = _instance(150, seed=4)
        exact = fit_exact(data, PERIODIC, lam, sigma=sigma, qr=qr)
        reps = []
        for K in (5, 10, 20, 40):
            basis = analytic_eigensystem(PERIODIC, K)
            reps.append(theorem1_bounds(exact, fit_eigen(data, PERIODIC, basis, K, lam), basis, sigma, _gram(basis, data.x, K), qr, data, POINTS))
        for a, b in zip(reps, reps[1:]):
            assert a.C_K <= b.C_K and a.D_K >= b.D_K
            assert a.frob_diff_sq >= b.frob_diff_sq
        for r in reps:
            d = r.to_dict()
            for key in ("zeta1", "zeta2", "zeta3", "B", "B_tilde", "C_K", "D_K", "bound_f0", "bound_f1", "bound_f"):
                assert d[key] >= 0
            assert d["B_tilde_literal"] is None  # infinite when the truncated Gram is rank deficient

    def test_cubic_cached_basis_is_flagged(self, cubic_cache):
        data = case_data("case1", 150)
        sigma = gram_sigma(CUBIC, data.x)
        qr = qr_factors(null_matrix(CUBIC, data.x))
        lam = 1e-6
        exact = fit_exact(data, CUBIC, lam, sigma=sigma, qr=qr)
        basis = cached_eigenbasis(cubic_cache, 20)
        rep = theorem1_bounds(exact, fit_eigen(data, CUBIC, cubic_cache, 20, lam), basis, sigma, _gram(cubic_cache, data.x, 20), qr, data, POINTS)
        assert rep.kappa_empirical
        assert any("extrapolated" in c for c in rep.caveats)

    def test_missing_tail_rule(self):
        data, sigma, qr, lam = _instance(60)
        basis = replace(analytic_eigensystem(PERIODIC, 6), tail=None)
        exact = fit_exact(data, PERIODIC, lam, sigma=sigma, qr=qr)
        with pytest.raises(UnsupportedKernelError):
            theorem1_bounds(exact, fit_eigen(data, PERIODIC, basis, 6, lam), basis, sigma, _gram(basis, data.x, 6), qr, data)


class TestTheorem2:
    def _report(self, cache, seed=0, K=10, **kw):
        data, sigma, qr, lam = _instance(200, seed)
        basis = analytic_eigensystem(PERIODIC, K)
        trunc = fit_eigen(data, PERIODIC, basis, K, lam)
        chk = fit_eigen(data, PERIODIC, cache, K, lam)
        return theorem2_bounds(trunc, chk, basis, cache, _gram(basis, data.x, K), _gram(cache, data.x, K), qr, data, points=POINTS, **kw)

    def test_bound_holds(self, periodic_cache_400):
        for seed in range(5):
            rep = self._report(periodic_cache_400, seed)
            assert rep.observed_f <= rep.bound_f
            assert rep.valid
            assert rep.degenerate_clusters == [[1, 2], [3, 4], [5, 6], [7, 8], [9, 10]]

    def test_synthetic_exact_cache_collapses(self):
        rep = self._report(_synthetic_cache(400))
        assert rep.eigenvalue_diff_sq < 1e-40
        assert rep.eigenfunction_diff_sq < 1e-12
        assert max(rep.subspace_distances) < 1e-6
        frob_only = (12 * rep.zeta3_prime + 2 * rep.zeta2_prime) * rep.frob_diff_sq
        assert rep.bound_f == pytest.approx(frob_only, rel=1e-12)
        assert rep.pointwise_diff_sq < 1e-20
        assert rep.valid

    def test_difference_terms_shrink_with_n(self):
        reps = [self._report(precompute_cache(PERIODIC, N)) for N in (100, 200, 400)]
        for key in ("eigenvalue_diff_sq", "eigenfunction_diff_sq"):
            vals = [getattr(r, key) for r in reps]
            assert vals[0] > vals[1] > vals[2], key
        sub = [max(r.subspace_distances) for r in reps]
        assert sub[0] > sub[1] > sub[2]

    def test_combined_chain(self, periodic_cache_400):
        data, sigma, qr, lam = _instance(200, 1)
        rep = self._report(periodic_cache_400, 1, exact=fit_exact(data, PERIODIC, lam, sigma=sigma, qr=qr), sigma=sigma)
        assert rep.observed_combined <= rep.combined_bound

    def test_needs_analytic_reference(self, cubic_cache):
        data, sigma, qr, lam = _instance(60)
        basis = cached_eigenbasis(precompute_cache(PERIODIC, 50), 4)
        trunc = fit_eigen(data, PERIODIC, analytic_eigensystem(PERIODIC, 4), 4, lam)
        with pytest.raises(UnsupportedKernelError):
            theorem2_bounds(trunc, trunc, basis, cubic_cache, sigma, sigma, qr, data)


def test_sweeps_and_serialization(tmp_path):
    t1 = theorem1_sweep(n=80, ranks=(5, 10), seeds=range(2), points=POINTS)
    t2 = theorem2_sweep(n=80, N=160, K=6, seeds=range(2), points=POINTS)
    assert len(t1) == 4 and len(t2) == 2
    assert all(r.valid for _, r in t1 + t2)
    text = sweep_csv(t1 + t2)
    assert text.splitlines()[0] == ",".join(SWEEP_HEADER)
    assert len(text.splitlines()) == 7
    payload = json.dumps(t2[0][1].to_dict(), allow_nan=False)
    assert json.loads(payload)["kind"] == "theorem2"


def test_report_validity_uses_all_pairs():
    rep = BoundReport(kind="x", n=10, p=1, K=2, lam=1.0, bound_f=1.0, observed_f=2.0)
    assert not rep.valid
    rep.observed_f = 0.5
    assert rep.valid
