import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eigenspline.errors import ArgumentError, DegenerateDesignError
from eigenspline.kernels import (
    CUBIC,
    PERIODIC,
    DataSet,
    Kernel,
    bernoulli_k,
    gram_sigma,
    null_matrix,
    rk_eval,
)

unit = st.floats(0.0, 1.0, allow_nan=False)


@pytest.mark.parametrize(
    "r, x, expected",
    [
        (1, 0.5, 0.0),
        (2, 0.0, 1.0 / 12.0),
        (4, 0.5, 7.0 / 5760.0),
        (0, 0.3, 1.0),
    ],
)
def test_bernoulli_values(r, x, expected):
    assert bernoulli_k(r, x) == pytest.approx(expected, abs=1e-15)


def test_bernoulli_k2_closed_form():
    x = np.linspace(0, 1, 11)
    np.testing.assert_allclose(bernoulli_k(2, x), (x**2 - x + 1.0 / 6.0) / 2.0, atol=1e-15)


@pytest.mark.parametrize("r, x", [(5, 0.1), (-1, 0.1), (2, 1.5), (2, -0.1), (2, np.nan)])
def test_bernoulli_rejects_bad_arguments(r, x):
    with pytest.raises(ArgumentError):
        bernoulli_k(r, x)


@pytest.mark.parametrize("r", [1, 2, 3, 4])
def test_derivative_recursion(r):
    x = np.random.default_rng(r).uniform(0.01, 0.99, 100)
    h = 1e-5
    fd = (bernoulli_k(r, x + h) - bernoulli_k(r, x - h)) / (2 * h)
    np.testing.assert_allclose(fd, bernoulli_k(r - 1, x), atol=1e-6)


@pytest.mark.parametrize("r", [1, 2, 3, 4])
def test_zero_integral(r):
    x = np.linspace(0, 1, 10_001)
    assert abs(np.trapezoid(bernoulli_k(r, x), x)) < 1e-8


def test_cubic_rk_examples():
    assert rk_eval(CUBIC, 0.0, 0.0) == pytest.approx(1.0 / 120.0, rel=1e-13)
    assert rk_eval(CUBIC, 0.5, 0.5) == pytest.approx(1.0 / 320.0, rel=1e-13)
    assert rk_eval(CUBIC, 0.3, 0.7) == rk_eval(CUBIC, 0.7, 0.3)


def test_rk_eval_domain():
    with pytest.raises(ArgumentError):
        rk_eval(CUBIC, 1.2, 0.1)
    with pytest.raises(ArgumentError):
        rk_eval(PERIODIC, 0.1, -0.5)


@given(unit, unit, st.sampled_from(["cubic", "periodic"]))
def test_rk_symmetric(x, z, kind):
    k = Kernel(kind)
    assert rk_eval(k, x, z) == rk_eval(k, z, x)


def test_periodic_matches_cosine_series():
    t = np.random.default_rng(0).uniform(0, 1, 100)
    nu = np.arange(1, 2001)
    series = (2.0 * (2 * np.pi * nu) ** -4.0 * np.cos(2 * np.pi * np.outer(t, nu))).sum(axis=1)
    closed = PERIODIC.rk(t, 0.0)
    assert np.max(np.abs(closed - series)) <= 1e-9


def test_periodic_uses_fractional_difference():
    # frac(x - z) and frac(z - x) sum to 1; k4 is symmetric about 1/2
    assert rk_eval(PERIODIC, 0.9, 0.2) == pytest.approx(float(-bernoulli_k(4, 0.3)), abs=1e-16)


def test_gram_single_point():
    np.testing.assert_allclose(gram_sigma(CUBIC, [0.0]), [[1.0 / 120.0]], rtol=1e-13)


def test_gram_empty_raises():
    with pytest.raises(ArgumentError):
        gram_sigma(CUBIC, [])


@given(st.lists(unit, min_size=1, max_size=30), st.sampled_from(["cubic", "periodic"]))
def test_gram_exactly_symmetric(xs, kind):
    S = gram_sigma(Kernel(kind), xs)
    assert np.array_equal(S, S.T)


def test_gram_psd_uniform_50():
    S = gram_sigma(CUBIC, np.linspace(0, 1, 50))
    w = np.linalg.eigvalsh(S)
    assert w.min() >= -1e-10 * np.linalg.norm(S, 2)


@pytest.mark.parametrize("kind", ["cubic", "periodic"])
def test_gram_psd_random_designs(kind):
    rng = np.random.default_rng(11)
    for _ in range(50):
        xs = rng.uniform(0, 1, rng.integers(2, 101))
        S = gram_sigma(Kernel(kind), xs)
        assert np.linalg.eigvalsh(S).min() >= -1e-10 * np.linalg.norm(S, 2)


def test_null_matrix_examples():
    np.testing.assert_allclose(null_matrix(CUBIC, [0.5, 0.0]), [[1.0, 0.0], [1.0, -0.5]])
    np.testing.assert_allclose(null_matrix(CUBIC, [0.0, 1.0]), [[1.0, -0.5], [1.0, 0.5]])
    T = null_matrix(PERIODIC, [0.1, 0.7, 0.3])
    assert T.shape == (3, 1) and np.all(T == 1.0)


def test_null_matrix_degenerate():
    with pytest.raises(DegenerateDesignError):
        null_matrix(CUBIC, [0.4, 0.4, 0.4])
    with pytest.raises(DegenerateDesignError):
        null_matrix(CUBIC, [0.4])


def test_kernel_validation():
    assert CUBIC.p == 2 and PERIODIC.p == 1
    with pytest.raises(ArgumentError):
        Kernel("gaussian")
    with pytest.raises(ArgumentError):
        Kernel("cubic", m=3)


def test_dataset_validation():
    data = DataSet([0.1, 0.2], [1.0, 2.0])
    assert data.n == 2
    with pytest.raises(ArgumentError):
        DataSet([0.1, 0.2], [1.0])
    with pytest.raises(ArgumentError):
        DataSet([0.1, 1.2], [1.0, 2.0])
    with pytest.raises(ArgumentError):
        DataSet([0.1, 0.2], [1.0, np.inf])
