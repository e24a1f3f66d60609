"""Reproducing kernels, null-space bases and Gram matrices on [0, 1].

Two kernels are provided, both of Sobolev order m = 2:

* ``cubic``: the cubic-spline kernel ``R1(x, z) = k2(x) k2(z) - k4(|x - z|)``
  with null space spanned by ``{1, k1}``.
* ``periodic``: the periodic-spline kernel ``R1(x, z) = -k4(frac(x - z))``
  with null space spanned by ``{1}``. Its Mercer eigensystem is known in
  closed form, which makes it the reference case for the error bounds.

Here ``k_r = B_r / r!`` are the scaled Bernoulli polynomials.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ArgumentError, DegenerateDesignError

# Monomial coefficients of k_r(x) = B_r(x) / r!, lowest degree first.
_BERNOULLI_SCALED = (
    (1.0,),
    (-1.0 / 2.0, 1.0),
    (1.0 / 12.0, -1.0 / 2.0, 1.0 / 2.0),
    (0.0, 1.0 / 12.0, -1.0 / 4.0, 1.0 / 6.0),
    (-1.0 / 720.0, 0.0, 1.0 / 24.0, -1.0 / 12.0, 1.0 / 24.0),
)
MAX_BERNOULLI_ORDER = len(_BERNOULLI_SCALED) - 1

KERNEL_KINDS = ("cubic", "periodic")


def _check_unit_interval(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if arr.size and (not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0):
        raise ArgumentError(f"{name} must lie in [0, 1]")
    return arr


def _horner(coefs, x):
    out = np.full_like(x, coefs[-1], dtype=float)
    for c in coefs[-2::-1]:
        out = out * x + c
    return out


def bernoulli_k(r: int, x):
    """Evaluate ``k_r(x) = B_r(x) / r!`` for ``0 <= r <= 4``.

    Accepts scalars or arrays; returns the same shape.
    """
    if not (0 <= int(r) <= MAX_BERNOULLI_ORDER) or int(r) != r:
        raise ArgumentError(f"Bernoulli order must be an integer in [0, {MAX_BERNOULLI_ORDER}], got {r}")
    arr = _check_unit_interval(x)
    out = _horner(_BERNOULLI_SCALED[int(r)], arr)
    return float(out) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class Kernel:
    """A reproducing kernel ``R1`` together with its null-space basis."""

    kind: str
    m: int = 2

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ArgumentError(f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        if self.m != 2:
            raise ArgumentError("only Sobolev order m = 2 is supported")

    @property
    def p(self) -> int:
        return 2 if self.kind == "cubic" else 1

    @property
    def null_basis(self) -> tuple[Callable[[np.ndarray], np.ndarray], ...]:
        one = lambda x: np.ones_like(np.asarray(x, dtype=float))
        if self.kind == "cubic":
            return (one, lambda x: _horner(_BERNOULLI_SCALED[1], np.asarray(x, dtype=float)))
        return (one,)

    def rk(self, x, z) -> np.ndarray:
        """Broadcasting evaluation of ``R1(x, z)``; no domain checks."""
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        # k4 is symmetric about 1/2, so k4(frac(x - z)) == k4(|x - z|) on [0, 1]
        k4 = _horner(_BERNOULLI_SCALED[4], np.abs(x - z))
        if self.kind == "cubic":
            k2 = _BERNOULLI_SCALED[2]
            return _horner(k2, x) * _horner(k2, z) - k4
        return -k4

    def rk_matrix(self, xs, zs) -> np.ndarray:
        """Cross-kernel matrix ``{R1(x_i, z_j)}`` of shape (len(xs), len(zs))."""
        xs = _check_unit_interval(xs, "xs").reshape(-1)
        zs = _check_unit_interval(zs, "zs").reshape(-1)
        return self.rk(xs[:, None], zs[None, :])

    def null_eval(self, xs) -> np.ndarray:
        """Null basis evaluated at ``xs``: shape (len(xs), p). No rank check."""
        xs = np.asarray(xs, dtype=float).reshape(-1)
        return np.column_stack([phi(xs) for phi in self.null_basis])


CUBIC = Kernel("cubic")
PERIODIC = Kernel("periodic")


def make_kernel(kind: str) -> Kernel:
    return Kernel(kind)


def rk_eval(kernel: Kernel, x: float, z: float) -> float:
    _check_unit_interval(x)
    _check_unit_interval(z, "z")
    return float(kernel.rk(x, z))


def gram_sigma(kernel: Kernel, xs) -> np.ndarray:
    """Dense Gram matrix ``{R1(x_i, x_j)}``, symmetric by construction."""
    xs = _check_unit_interval(xs, "xs").reshape(-1)
    if xs.size == 0:
        raise ArgumentError("xs must be non-empty")
    g = kernel.rk(xs[:, None], xs[None, :])
    upper = np.triu(g)
    return upper + np.triu(upper, 1).T


def null_matrix(kernel: Kernel, xs) -> np.ndarray:
    """Matrix ``T`` with ``T[i, nu] = phi_nu(x_i)``; raises if rank deficient."""
    xs = _check_unit_interval(xs, "xs").reshape(-1)
    if xs.size < kernel.p:
        raise DegenerateDesignError(f"need at least p={kernel.p} points, got {xs.size}")
    t = kernel.null_eval(xs)
    sv = np.linalg.svd(t, compute_uv=False)
    if sv[-1] <= max(t.shape) * np.finfo(float).eps * sv[0]:
        raise DegenerateDesignError("null-space matrix T is not of full column rank")
    return t


@dataclass(frozen=True)
class DataSet:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = _check_unit_interval(self.x, "x").reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if x.shape != y.shape:
            raise ArgumentError(f"x and y lengths differ: {x.size} vs {y.size}")
        if not np.all(np.isfinite(y)):
            raise ArgumentError("y contains non-finite values")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.size
