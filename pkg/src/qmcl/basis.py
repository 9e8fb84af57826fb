"""Kernel eigenbasis.

The basis functions are eigenvectors of ``K / N`` where ``K`` holds raw
kernel values over the ``N`` training samples. Columns of ``phi`` are scaled
so that ``phi.T @ phi == N * I``, i.e. they are orthonormal under the
empirical inner product ``<f, g> = mean(f * g)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import EigensolverError
from .kernels import SparseKernelMatrix

__all__ = ["EigenBasis", "compute_basis", "dense_eig_oracle", "lanczos_eigsh"]

log = logging.getLogger(__name__)

DENSE_MAX_N = 2000


@dataclass(frozen=True)
class EigenBasis:
    phi: np.ndarray
    eigenvalues: np.ndarray

    @property
    def N(self):
        return self.phi.shape[0]

    @property
    def L(self):
        return self.phi.shape[1]


def dense_eig_oracle(M):
    """All eigenpairs of a symmetric matrix, ordered by decreasing modulus."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    asym = np.max(np.abs(M - M.T)) if M.size else 0.0
    if asym > 1e-12:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    lam, V = np.linalg.eigh(M)
    order = np.argsort(-np.abs(lam), kind="stable")
    return lam[order], V[:, order]


def lanczos_eigsh(matvec, n, k, tol=1e-10, ncv=None, max_restarts=1000, seed=0):
    """Largest-modulus eigenpairs of a symmetric operator.

    Thick-restart Lanczos with full (two-pass Gram-Schmidt)
    reorthogonalization. ``matvec`` maps a length-``n`` vector to a
    length-``n`` vector. A Ritz pair is accepted when its residual norm is at
    most ``tol`` times the largest Ritz value modulus.

    Returns ``(eigenvalues, eigenvectors)`` sorted by decreasing modulus,
    with orthonormal eigenvector columns.
    """
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    m = min(n, ncv if ncv is not None else max(2 * k + 1, k + 32))
    if m <= k and m < n:
        raise ValueError("ncv must exceed k")
    rng = np.random.default_rng(seed)

    V = np.zeros((n, m + 1))
    T = np.zeros((m, m))
    v = rng.standard_normal(n)
    V[:, 0] = v / np.linalg.norm(v)
    start = 0
    beta = 0.0
    res = np.full(k, np.inf)
    for restart in range(max_restarts):
        for j in range(start, m):
            w = np.asarray(matvec(V[:, j]), dtype=float)
            Vj = V[:, :j + 1]
            h = Vj.T @ w
            w -= Vj @ h
            h2 = Vj.T @ w
            w -= Vj @ h2
            h += h2
            T[:j + 1, j] = h
            T[j, :j + 1] = h
            if j + 1 == n:
                beta = 0.0
                break
            beta = np.linalg.norm(w)
            scale = max(np.abs(h).max(), 1.0) if h.size else 1.0
            if beta <= 1e-13 * scale:
                # invariant subspace reached; continue with a fresh direction
                w = rng.standard_normal(n)
                for _ in range(2):
                    w -= Vj @ (Vj.T @ w)
                w /= np.linalg.norm(w)
                beta = 0.0
            else:
                w /= beta
            V[:, j + 1] = w
            if j + 1 < m:
                T[j + 1, j] = T[j, j + 1] = beta

        theta, Y = np.linalg.eigh(T)
        order = np.argsort(-np.abs(theta), kind="stable")
        anorm = np.abs(theta).max()
        res_all = np.abs(beta * Y[m - 1, :])
        top = order[:k]
        res = res_all[top]
        if np.all(res <= tol * anorm) or m == n:
            log.debug("lanczos converged after %d restarts", restart)
            return theta[top], V[:, :m] @ Y[:, top]

        p = min(m - 1, k + (m - k) // 2)
        keep = order[:p]
        V[:, :p] = V[:, :m] @ Y[:, keep]
        V[:, p] = V[:, m]
        T[:] = 0.0
        T[np.arange(p), np.arange(p)] = theta[keep]
        T[p, :p] = T[:p, p] = beta * Y[m - 1, keep]
        start = p

    raise EigensolverError(
        f"Lanczos did not converge in {max_restarts} restarts; "
        f"max residual {res.max():.3g}, tolerance {tol * anorm:.3g}")


def _fix_signs(V):
    # first entry that is not negligible gets a positive sign
    thresh = 1e-8 * np.abs(V).max(axis=0)
    first = np.argmax(np.abs(V) > thresh, axis=0)
    signs = np.sign(V[first, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def compute_basis(K, L, solver="auto", tol=1e-10, seed=0, ncv=None):
    """Leading ``L`` eigenvectors of ``K / N``.

    ``K`` is a :class:`SparseKernelMatrix`, a scipy sparse matrix or a dense
    array of raw kernel values. ``solver`` is ``"lanczos"``, ``"dense"`` or
    ``"auto"`` (dense up to ``N = 2000``).
    """
    if isinstance(K, SparseKernelMatrix):
        K = K.matrix
    N = K.shape[0]
    if not 1 <= L <= N:
        raise ValueError(f"need 1 <= L <= N, got L={L}, N={N}")
    if solver == "auto":
        solver = "dense" if N <= DENSE_MAX_N else "lanczos"

    if solver == "dense":
        M = K.toarray() if sp.issparse(K) else np.asarray(K, dtype=float)
        lam, V = dense_eig_oracle(M / N)
        lam, V = lam[:L], V[:, :L]
    elif solver == "lanczos":
        lam, V = lanczos_eigsh(lambda v: (K @ v) / N, N, L, tol=tol, ncv=ncv, seed=seed)
    else:
        raise ValueError(f"unknown solver {solver!r}")

    order = np.argsort(-np.abs(lam), kind="stable")
    lam, V = lam[order], V[:, order]
    V = V / np.linalg.norm(V, axis=0)
    phi = _fix_signs(V) * np.sqrt(N)
    return EigenBasis(phi=np.ascontiguousarray(phi), eigenvalues=lam.copy())
