"""Eigensystems of R1: analytic (periodic kernel) and grid-approximated.

The grid approximation discretizes the integral eigen-equation on N
pre-selected points ``s``. With ``Omega = V Gamma V^T`` the eigendecomposition
of ``{R1(s_i, s_j)}``, eigenvalues are approximated by ``gamma_k / N`` and
eigenfunctions by the Nystrom interpolation

    Phi_k(x) ~ sqrt(N) / gamma_k * R1(x, s) @ v_k.
"""
from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from .errors import (
    ArgumentError,
    CacheCorruptionError,
    CacheFormatError,
    NumericalError,
    RankError,
    UnsupportedKernelError,
    ZeroEigenvalueError,
)
from .kernels import KERNEL_KINDS, Kernel, _check_unit_interval, gram_sigma

CACHE_MAGIC = b"EIGC"
CACHE_VERSION = 1
# Modes with gamma_k <= EIG_FLOOR * gamma_1 are treated as zero.
EIG_FLOOR = 1e-12
# Relative eigenvalue gap below which modes are grouped into one cluster.
CLUSTER_RTOL = 1e-6


@dataclass(frozen=True, eq=False)
class EigenSystemCache:
    """Eigendecomposition of the kernel matrix on pre-selected points."""

    kernel_kind: str
    s: np.ndarray
    gamma: np.ndarray
    V: np.ndarray

    @property
    def N(self) -> int:
        return self.s.size

    @property
    def kernel(self) -> Kernel:
        return Kernel(self.kernel_kind)

    @property
    def n_positive(self) -> int:
        """Number of modes usable for truncation."""
        if self.gamma.size == 0 or self.gamma[0] <= 0:
            return 0
        return int(np.count_nonzero(self.gamma > EIG_FLOOR * self.gamma[0]))

    @property
    def delta(self) -> np.ndarray:
        """Approximate Mercer eigenvalues ``gamma_k / N``."""
        return self.gamma / self.N

    def same_as(self, other: "EigenSystemCache") -> bool:
        return (
            self.kernel_kind == other.kernel_kind
            and np.array_equal(self.s, other.s)
            and np.array_equal(self.gamma, other.gamma)
            and np.array_equal(self.V, other.V)
        )

    def checksum(self) -> int:
        """CRC-32 of the serialized body (the value stored in the trailer)."""
        return struct.unpack("<I", save_cache(self)[-4:])[0]


def default_points(N: int) -> np.ndarray:
    return np.arange(1, N + 1, dtype=float) / N


def precompute_cache(kernel: Kernel, N: int, points=None) -> EigenSystemCache:
    """Build and eigendecompose the kernel matrix on ``s_j = j / N``.

    ``points`` overrides the grid; quadrature weights stay uniform ``1/N``.
    """
    if int(N) != N or N < 2:
        raise ArgumentError(f"N must be an integer >= 2, got {N}")
    s = default_points(int(N)) if points is None else _check_unit_interval(points, "points").reshape(-1)
    if s.size != N:
        raise ArgumentError(f"expected {N} points, got {s.size}")
    omega = gram_sigma(kernel, s)
    try:
        gamma, V = linalg.eigh(omega)
    except linalg.LinAlgError as exc:
        cond = np.linalg.cond(omega)
        raise NumericalError(f"eigendecomposition failed (cond={cond:.3e}, N={N}): {exc}") from exc
    order = np.argsort(gamma)[::-1]
    gamma = gamma[order]
    V = np.ascontiguousarray(V[:, order])
    gamma = np.maximum(gamma, 0.0)
    return EigenSystemCache(kernel.kind, s, gamma, V)


def approx_eigenfunction(cache: EigenSystemCache, k: int, x):
    """Nystrom-interpolated eigenfunction ``Phi_k`` (1-based ``k``)."""
    if not 1 <= k <= cache.N:
        raise ArgumentError(f"k must be in [1, {cache.N}], got {k}")
    g = cache.gamma[k - 1]
    if g <= EIG_FLOOR * cache.gamma[0]:
        raise ZeroEigenvalueError(f"eigenvalue {k} is zero; eigenfunction undefined")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.sqrt(cache.N) / g * (cache.kernel.rk_matrix(xs, cache.s) @ cache.V[:, k - 1])
    return float(out[0]) if np.ndim(x) == 0 else out


def approx_eigenfunctions(cache: EigenSystemCache, xs, K: int) -> np.ndarray:
    """All of ``Phi_1..Phi_K`` at ``xs`` as an (len(xs), K) matrix."""
    _check_rank(cache, K)
    u2 = cache.kernel.rk_matrix(xs, cache.s)
    return u2 @ (cache.V[:, :K] * (np.sqrt(cache.N) / cache.gamma[:K]))


@dataclass(frozen=True, eq=False)
class TruncatedEigenBasis:
    """First K Mercer eigenpairs, with an evaluator for the eigenfunctions.

    ``evaluate(xs)`` returns the (len(xs), K) matrix ``{Phi_k(x_i)}``.
    ``tail(K)`` gives ``sum_{k > K} delta_k^2`` when known.
    """

    kernel_kind: str
    delta: np.ndarray
    evaluate: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    tail: Optional[Callable[[int], float]] = field(default=None, repr=False)
    envelope: Optional[float] = None
    frequencies: Optional[np.ndarray] = None

    @property
    def K(self) -> int:
        return self.delta.size


def periodic_mode_table(K: int):
    """Frequencies and kinds (0 = cos, 1 = sin) of the top-K periodic modes."""
    k = np.arange(K)
    return k // 2 + 1, k % 2


def periodic_delta(nu) -> np.ndarray:
    return (2.0 * np.pi * np.asarray(nu, dtype=float)) ** -4


def periodic_tail(K: int) -> float:
    """``sum_{k > K} delta_k^2`` for the periodic kernel, in closed form."""
    from scipy.special import zeta

    if K < 0:
        raise ArgumentError("K must be non-negative")
    full_pairs = K // 2
    tail = 2.0 * (2.0 * np.pi) ** -8 * float(zeta(8.0, full_pairs + 1))
    if K % 2:
        tail -= (2.0 * np.pi * (full_pairs + 1)) ** -8
    return max(tail, 0.0)


def analytic_eigensystem(kernel: Kernel, K: int) -> TruncatedEigenBasis:
    """Closed-form eigensystem of the periodic kernel, ordered by decreasing eigenvalue.

    Frequency ``nu`` contributes the pair ``sqrt(2) cos(2 pi nu x)``,
    ``sqrt(2) sin(2 pi nu x)``, both with eigenvalue ``(2 pi nu)^-4``.
    """
    if kernel.kind != "periodic":
        raise UnsupportedKernelError(f"no analytic eigensystem for kernel {kernel.kind!r}")
    if int(K) != K or K < 1:
        raise ArgumentError(f"K must be a positive integer, got {K}")
    nu, is_sin = periodic_mode_table(int(K))

    def evaluate(xs):
        xs = np.asarray(xs, dtype=float).reshape(-1)
        arg = 2.0 * np.pi * xs[:, None] * nu[None, :]
        return np.sqrt(2.0) * np.where(is_sin[None, :] == 1, np.sin(arg), np.cos(arg))

    return TruncatedEigenBasis(
        kernel_kind="periodic",
        delta=periodic_delta(nu),
        evaluate=evaluate,
        tail=periodic_tail,
        envelope=float(np.sqrt(2.0)),
        frequencies=nu,
    )


def cached_eigenbasis(cache: EigenSystemCache, K: int) -> TruncatedEigenBasis:
    """View of a cache as a truncated basis of Nystrom-interpolated eigenfunctions.

    The tail is extrapolated from a ``c k^-4`` fit to the last computed
    eigenvalues and is only an estimate.
    """
    _check_rank(cache, K)
    delta = cache.delta[: cache.n_positive]

    def tail(KK: int) -> float:
        head = float(np.sum(delta[KK:] ** 2))
        last = np.arange(max(delta.size - 10, 0), delta.size) + 1
        c = np.exp(np.mean(np.log(delta[last - 1]) + 4.0 * np.log(last)))
        kk = np.arange(delta.size + 1, 50 * delta.size + 1, dtype=float)
        return head + float(np.sum((c * kk**-4) ** 2))

    return TruncatedEigenBasis(
        kernel_kind=cache.kernel_kind,
        delta=cache.delta[:K].copy(),
        evaluate=lambda xs: approx_eigenfunctions(cache, xs, K),
        tail=tail,
    )


def _check_rank(cache: EigenSystemCache, K: int):
    if int(K) != K or K < 1:
        raise ArgumentError(f"K must be a positive integer, got {K}")
    if K > cache.n_positive:
        raise RankError(f"K={K} exceeds the {cache.n_positive} positive modes of the cache")


def cache_feature_matrix(cache: EigenSystemCache, xs, K: int) -> np.ndarray:
    """``Z = U2 V1 Gamma1^{-1/2}`` with ``U2 = {R1(x_i, s_j)}``."""
    _check_rank(cache, K)
    u2 = cache.kernel.rk_matrix(xs, cache.s)
    return u2 @ (cache.V[:, :K] / np.sqrt(cache.gamma[:K]))


def feature_matrix(source, xs, K: Optional[int] = None) -> np.ndarray:
    """Feature matrix ``Z`` whose outer product approximates the Gram matrix.

    ``source`` is a :class:`TruncatedEigenBasis` (columns ``sqrt(delta_k) Phi_k(x_i)``)
    or an :class:`EigenSystemCache` (columns of ``U2 V1 Gamma1^{-1/2}``).
    """
    if isinstance(source, EigenSystemCache):
        if K is None:
            raise ArgumentError("K is required for a cache")
        return cache_feature_matrix(source, xs, K)
    if isinstance(source, TruncatedEigenBasis):
        K = source.K if K is None else K
        if K > source.K or K < 0:
            raise RankError(f"K={K} exceeds the {source.K} modes of the basis")
        xs = _check_unit_interval(xs, "xs").reshape(-1)
        return source.evaluate(xs)[:, :K] * np.sqrt(source.delta[:K])
    raise ArgumentError(f"unsupported eigen source {type(source).__name__}")


def eigen_clusters(values, rtol: float = CLUSTER_RTOL) -> list[np.ndarray]:
    """Group indices of a non-increasing sequence into near-degenerate clusters."""
    values = np.asarray(values, dtype=float)
    clusters, start = [], 0
    for i in range(1, values.size + 1):
        if i == values.size or abs(values[i] - values[i - 1]) > rtol * max(abs(values[i - 1]), 1e-300):
            clusters.append(np.arange(start, i))
            start = i
    return clusters


# --- serialization ---------------------------------------------------------

_HEADER = struct.Struct("<4sIIQ")


def save_cache(cache: EigenSystemCache) -> bytes:
    """Binary form: magic, version, kernel id, N, then s, gamma, V (column-major), CRC-32."""
    N = cache.N
    body = _HEADER.pack(CACHE_MAGIC, CACHE_VERSION, KERNEL_KINDS.index(cache.kernel_kind), N)
    body += np.ascontiguousarray(cache.s, dtype="<f8").tobytes()
    body += np.ascontiguousarray(cache.gamma, dtype="<f8").tobytes()
    body += np.asarray(cache.V, dtype="<f8").tobytes(order="F")
    return body + struct.pack("<I", zlib.crc32(body))


def load_cache(data: bytes) -> EigenSystemCache:
    if len(data) < 4 or data[:4] != CACHE_MAGIC:
        raise CacheFormatError("not an eigensystem cache (bad magic bytes)")
    if len(data) < _HEADER.size + 4:
        raise CacheCorruptionError("cache stream truncated in header")
    _, version, kernel_id, N = _HEADER.unpack_from(data)
    if version != CACHE_VERSION:
        raise CacheFormatError(f"unsupported cache version {version}")
    expected = _HEADER.size + 8 * (2 * N + N * N) + 4
    if len(data) != expected:
        raise CacheCorruptionError(f"cache stream has {len(data)} bytes, expected {expected}")
    (crc,) = struct.unpack_from("<I", data, expected - 4)
    if zlib.crc32(data[: expected - 4]) != crc:
        raise CacheCorruptionError("cache checksum mismatch")
    if kernel_id >= len(KERNEL_KINDS):
        raise CacheFormatError(f"unknown kernel id {kernel_id}")
    off = _HEADER.size
    s = np.frombuffer(data, "<f8", N, off).astype(float)
    gamma = np.frombuffer(data, "<f8", N, off + 8 * N).astype(float)
    V = np.frombuffer(data, "<f8", N * N, off + 16 * N).reshape((N, N), order="F").astype(float)
    return EigenSystemCache(KERNEL_KINDS[kernel_id], s, gamma, np.ascontiguousarray(V))


def write_cache(cache: EigenSystemCache, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save_cache(cache))


def read_cache(path) -> EigenSystemCache:
    with open(path, "rb") as fh:
        return load_cache(fh.read())


def eigenvalues_csv(cache: EigenSystemCache) -> str:
    buf = io.StringIO()
    buf.write("k,eigenvalue\n")
    for k, d in enumerate(cache.delta, start=1):
        buf.write(f"{k},{d:.17g}\n")
    return buf.getvalue()
