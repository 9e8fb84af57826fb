"""Gaussian kernels, delay embedding, bandwidth tuning and sparse kernel
matrix assembly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import BandwidthTuningError

__all__ = [
    "SparseKernelMatrix",
    "assemble_sparse_kernel",
    "default_knn",
    "delay_embed",
    "gaussian_kernel",
    "default_candidates",
    "kernel_sum_curve",
    "sqdist",
    "sqrt_gaussian_kernel",
    "tune_bandwidth",
]


def sqdist(a, b):
    """Squared Euclidean distances between the rows of ``a`` and ``b``."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    d2 = (np.einsum("ij,ij->i", a, a)[:, None]
          + np.einsum("ij,ij->i", b, b)[None, :]
          - 2.0 * a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def gaussian_kernel(w, w2, bandwidth):
    """``exp(-|w - w2|^2 / bandwidth^2)``, broadcasting over leading axes."""
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    w = np.asarray(w, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    if w.shape[-1:] != w2.shape[-1:]:
        raise ValueError(f"dimension mismatch: {w.shape} vs {w2.shape}")
    d2 = np.sum((w - w2) ** 2, axis=-1)
    return np.exp(-d2 / bandwidth**2)


def sqrt_gaussian_kernel(w, w2, bandwidth):
    """Square root of :func:`gaussian_kernel`, i.e. the bandwidth scaled by sqrt(2)."""
    return gaussian_kernel(w, w2, bandwidth * np.sqrt(2.0))


def delay_embed(series, Q):
    """Centered delay-coordinate windows of ``Q + 1`` consecutive samples.

    Returns ``(windows, centers)``. ``windows[i]`` concatenates
    ``series[i], ..., series[i + Q]`` in time order and ``centers[i] = i + Q/2``
    is the input index it is attached to, so other series sampled on the
    same trajectory can be aligned with ``other[centers]``.
    """
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    if Q < 0 or Q % 2:
        raise ValueError(f"Q must be a non-negative even integer, got {Q}")
    N = series.shape[0]
    if N <= Q:
        raise ValueError(f"need more than Q={Q} samples, got {N}")
    n_out = N - Q
    windows = np.concatenate([series[q:q + n_out] for q in range(Q + 1)], axis=1)
    centers = np.arange(Q // 2, Q // 2 + n_out)
    return windows, centers


# --------------------------------------------------------------------------
# Bandwidth tuning
# --------------------------------------------------------------------------

def default_candidates(points, n=64):
    """Log-spaced bandwidths whose squares cover ``[1e-3, 1e3]`` times the
    squared median pairwise distance."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d2 = sqdist(points, points)
    iu = np.triu_indices(len(points), k=1)
    med2 = np.median(d2[iu]) if iu[0].size else 0.0
    if not med2 > 0:
        raise _degenerate_error()
    return np.sqrt(med2 * np.logspace(-3, 3, n))


def _degenerate_error():
    return BandwidthTuningError(
        "all points coincide; the kernel sum does not depend on the bandwidth, "
        "supply the bandwidth manually")


def kernel_sum_curve(points, candidates):
    """Kernel sums and dimension estimates over a grid of bandwidths.

    Returns ``(S, dim)`` where ``S[i]`` is the mean of
    ``exp(-d_ij^2 / eps_i^2)`` over all pairs and ``dim[i]`` is the centered
    log-log slope ``d log S / d log eps`` (``nan`` at both grid ends). The
    slope equals twice the slope taken against ``eps^2``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    eps = np.asarray(candidates, dtype=float)
    d2 = sqdist(points, points).ravel()
    S = np.array([np.mean(np.exp(-d2 / e**2)) for e in eps])
    logS = np.log(S)
    loge = np.log(eps)
    dim = np.full(eps.shape, np.nan)
    dim[1:-1] = (logS[2:] - logS[:-2]) / (loge[2:] - loge[:-2])
    return S, dim


def tune_bandwidth(points, candidates=None, max_points=2000, seed=0):
    """Pick the bandwidth that maximizes the kernel dimension estimate.

    At most ``max_points`` rows (a seeded random subsample) are used.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if len(points) < 2:
        raise BandwidthTuningError("need at least two points")
    if len(points) > max_points:
        idx = np.random.default_rng(seed).choice(len(points), max_points, replace=False)
        points = points[np.sort(idx)]
    if np.all(points == points[0]):
        raise _degenerate_error()
    if candidates is None:
        candidates = default_candidates(points)
    candidates = np.sort(np.asarray(candidates, dtype=float))
    if candidates.size < 3:
        raise BandwidthTuningError("need at least three candidate bandwidths")
    S, dim = kernel_sum_curve(points, candidates)
    if not np.any(np.isfinite(dim)):
        raise BandwidthTuningError("dimension estimate undefined on the grid")
    return float(candidates[np.nanargmax(dim)])


# --------------------------------------------------------------------------
# Sparse kernel matrices
# --------------------------------------------------------------------------

def default_knn(N):
    return int(min(N, max(1000, N // 10)))


@dataclass(frozen=True)
class SparseKernelMatrix:
    """Symmetric nearest-neighbor truncation of a Gaussian kernel matrix.

    ``matrix`` is a CSR matrix holding raw kernel values (not divided by N).
    """

    matrix: sp.csr_matrix
    k_nn: int
    bandwidth: float

    @property
    def N(self):
        return self.matrix.shape[0]

    def toarray(self):
        return self.matrix.toarray()


def assemble_sparse_kernel(points, bandwidth, k_nn=None, block_size=None):
    """Gaussian kernel matrix keeping ``k_nn`` neighbors per row.

    Row ``i`` keeps its ``k_nn`` largest kernel values (itself included).
    The result is symmetrized by union: an entry is kept when either of its
    rows kept it. ``k_nn`` larger than ``N`` is clamped.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    N = len(points)
    k = default_knn(N) if k_nn is None else int(k_nn)
    if k < 1:
        raise ValueError("k_nn must be at least 1")
    k = min(k, N)
    if block_size is None:
        block_size = max(1, min(N, 4_000_000 // max(N, 1)))

    inv_eps2 = 1.0 / bandwidth**2
    indptr = np.arange(0, N * k + 1, k, dtype=np.int64)
    indices = np.empty(N * k, dtype=np.int32)
    data = np.empty(N * k)
    for start in range(0, N, block_size):
        stop = min(N, start + block_size)
        d2 = sqdist(points[start:stop], points)
        rows = np.arange(stop - start)
        d2[rows, np.arange(start, stop)] = 0.0
        if k < N:
            nbr = np.argpartition(d2, k - 1, axis=1)[:, :k]
        else:
            nbr = np.broadcast_to(np.arange(N), (stop - start, N))
        nbr = np.sort(nbr, axis=1)
        vals = np.exp(-np.take_along_axis(d2, nbr, axis=1) * inv_eps2)
        indices[start * k:stop * k] = nbr.ravel()
        data[start * k:stop * k] = vals.ravel()
    K = sp.csr_matrix((data, indices, indptr), shape=(N, N))
    if k < N:
        # union rule; max() of two stored copies of a symmetric value
        K = K.maximum(K.T).tocsr()
    else:
        K = ((K + K.T) * 0.5).tocsr()
    K.setdiag(1.0)
    K.eliminate_zeros()
    K.sort_indices()
    return SparseKernelMatrix(matrix=K, k_nn=k, bandwidth=float(bandwidth))
