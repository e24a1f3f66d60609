import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eigenspline.errors import ArgumentError
from eigenspline.simbench import (
    CSV_HEADER,
    MethodSpec,
    SimScenario,
    beta_density,
    decompose,
    eval_test_function,
    generate_data,
    load_scenarios,
    rows_csv,
    run_grid,
    run_manifest,
    timing_csv,
    timing_sweep,
)

SMALL = (MethodSpec("ALL"), MethodSpec("EIGEN", (20, 10)), MethodSpec("NYSTROM", (10,)), MethodSpec("RSR", (30,)))


class TestFunctions:
    def test_case3_examples(self):
        assert eval_test_function("case3", 0.5) == pytest.approx(0.0, abs=1e-14)
        assert eval_test_function("case3", 0.25) == pytest.approx(-0.5, abs=1e-14)

    def test_beta_normalizer(self):
        x = np.linspace(0.05, 0.95, 19)
        np.testing.assert_allclose(beta_density(x, 3, 11), 858 * x**2 * (1 - x) ** 10, rtol=1e-12)
        assert math.gamma(14) / (math.gamma(3) * math.gamma(11)) == 858

    @pytest.mark.parametrize("a, b", [(3, 11), (30, 17), (7, 30), (12, 12)])
    def test_beta_integrates_to_one(self, a, b):
        x = np.linspace(0, 1, 200_001)
        assert abs(np.trapezoid(beta_density(x, a, b), x) - 1.0) < 1e-8

    def test_cases_are_mixtures(self):
        x = np.linspace(0, 1, 101)
        c1 = 0.6 * beta_density(x, 30, 17) + 0.4 * beta_density(x, 3, 11)
        np.testing.assert_allclose(eval_test_function("case1", x), c1)
        assert np.all(np.isfinite(eval_test_function("case2", x)))

    def test_domain_and_id(self):
        with pytest.raises(ArgumentError):
            eval_test_function("case1", 1.5)
        with pytest.raises(ArgumentError):
            eval_test_function("case9", 0.5)


class TestGenerate:
    def test_noiseless(self):
        s = SimScenario(function="case2", n=50, sigma=0.0)
        data = generate_data(s, 3)
        np.testing.assert_array_equal(data.y, eval_test_function("case2", s.x))
        np.testing.assert_array_equal(data.x, np.arange(1, 51) / 50)

    def test_deterministic(self):
        s = SimScenario(n=100, seed=9)
        assert np.array_equal(generate_data(s, 4).y, generate_data(s, 4).y)
        assert not np.array_equal(generate_data(s, 4).y, generate_data(s, 5).y)

    def test_noise_level(self):
        s = SimScenario(function="case3", n=100_000, sigma=0.1)
        resid = generate_data(s, 0).y - eval_test_function("case3", s.x)
        assert abs(np.std(resid) - 0.1) <= 0.001

    def test_scenario_validation(self):
        with pytest.raises(ArgumentError):
            SimScenario(function="case4")
        with pytest.raises(ArgumentError):
            SimScenario(sigma=-0.1)
        with pytest.raises(ArgumentError):
            SimScenario(replicates=0)


@given(st.integers(2, 8), st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_decomposition_identity(reps, m, seed):
    rng = np.random.default_rng(seed)
    fits = rng.normal(size=(reps, m)) * rng.uniform(0.01, 10)
    truth = rng.normal(size=m)
    mse, bias2, var = decompose(fits, truth)
    assert np.all(np.abs(mse - (bias2 + var)) <= 1e-12 * mse + 1e-15)


@pytest.fixture(scope="module")
def small_run(cubic_cache):
    scen = SimScenario(function="case1", n=200, replicates=3, methods=SMALL)
    return scen, run_grid(scen, cubic_cache, return_fits=True)


class TestRunGrid:
    def test_every_cell_present(self, small_run):
        _, (rows, _) = small_run
        assert [r.method for r in rows] == ["ALL", "E20", "E10", "N10", "RSR30"]
        assert all(r.error is None for r in rows)

    def test_row_identity(self, small_run):
        scen, (rows, fits) = small_run
        truth = eval_test_function(scen.function, scen.x)
        for r in rows:
            assert fits[r.method].shape == (3, 200)
            mse, bias2, var = decompose(fits[r.method], truth)
            assert r.mse == pytest.approx(float(np.mean(mse)), rel=1e-14)
            assert abs(r.mse - (r.bias2 + r.var)) <= 1e-12 * r.mse + 1e-15
            assert r.seconds > 0

    def test_reproducible(self, small_run, cubic_cache):
        scen, (rows, _) = small_run
        again = run_grid(scen, cubic_cache, threads=3)
        for a, b in zip(rows, again):
            assert (a.method, a.bias2, a.var, a.mse) == (b.method, b.bias2, b.var, b.mse)

    def test_failures_recorded(self, cubic_cache):
        scen = SimScenario(n=60, replicates=2, methods=(MethodSpec("ALL"), MethodSpec("EIGEN", (500,))))
        rows = run_grid(scen, cubic_cache)
        assert rows[0].error is None
        assert rows[1].method == "E500" and "RankError" in rows[1].error
        line = rows_csv(rows).splitlines()[2]
        assert line == "E500,case1,0.1,nan,nan,nan,nan"

    def test_noiseless_all_interpolates(self):
        scen = SimScenario(n=300, sigma=0.0, replicates=1, methods=(MethodSpec("ALL"),), lam=1e-12)
        (row,) = run_grid(scen)
        assert row.mse <= 1e-8 and row.var == 0.0

    def test_csv_units(self, small_run):
        _, (rows, _) = small_run
        lines = rows_csv(rows).splitlines()
        assert lines[0] == ",".join(CSV_HEADER) == "method,case,sigma,bias2,var,mse,seconds"
        fields = lines[1].split(",")
        assert float(fields[5]) == pytest.approx(rows[0].mse * 1e4, rel=1e-5)


class TestScenarios:
    def test_expansion(self):
        scen = load_scenarios({"function": ["case1", "case3"], "sigma": [0.1, 0.2], "n": 100,
                               "methods": [{"name": "eigen", "ranks": [10, 20]}]})
        assert [(s.function, s.sigma) for s in scen] == [("case1", 0.1), ("case1", 0.2), ("case3", 0.1), ("case3", 0.2)]
        assert scen[0].methods == (MethodSpec("EIGEN", (10, 20)),)

    def test_round_trip(self):
        s = SimScenario(function="case2", n=500, seed=4)
        assert load_scenarios({"scenarios": [s.to_dict()]}) == [s]
        assert SimScenario.from_dict(json.loads(json.dumps(s.to_dict()))).config_hash() == s.config_hash()

    def test_shipped_scenario_parses(self):
        from pathlib import Path

        path = Path(__file__).resolve().parents[1] / "scenarios" / "desk_table1.json"
        scen = load_scenarios(json.loads(path.read_text()))
        assert {s.function for s in scen} == {"case1", "case2", "case3"}
        assert all(s.n == 2000 and s.replicates == 20 for s in scen)

    def test_manifest(self):
        scen = [SimScenario(seed=3), SimScenario(function="case3", seed=4)]
        m = run_manifest(scen, {"elapsed": 1.0})
        assert m["seeds"] == [3, 4] and m["rng"] == "philox4x64"
        assert len(m["config_hash"]) == 64 and m["elapsed"] == 1.0
        assert set(m["versions"]) >= {"numpy", "scipy", "python", "eigenspline"}
        json.dumps(m)

    def test_unknown_method(self):
        with pytest.raises(ArgumentError):
            MethodSpec("SVD", (3,)).cells()


def test_timing_sweep(cubic_cache):
    rows = timing_sweep("eigen", [500, 4000], K=20, repeats=3, cache=cubic_cache)
    assert [r.n for r in rows] == [500, 4000]
    assert all(r.seconds > 0 for r in rows)
    assert rows[0].seconds <= rows[1].seconds
    assert timing_csv(rows).splitlines()[0] == "method,n,K,seconds"
