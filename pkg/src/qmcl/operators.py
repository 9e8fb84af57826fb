"""Matrices of observables, the projected shift (Koopman) operator and the
kernel feature map, all expressed in a kernel eigenbasis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import EigenBasis
from .errors import EffectAnnihilationError
from .kernels import sqdist

__all__ = [
    "EffectMapModel",
    "SpectralDecomposition",
    "apply_observable",
    "effect_matrix_apply",
    "effect_matrix_full",
    "feature_vector",
    "koopman_matrix",
    "multiplication_operator",
    "spectral_decompose",
]


def _phi(basis):
    return basis.phi if isinstance(basis, EigenBasis) else np.asarray(basis)


def multiplication_operator(basis, f):
    """Compression ``Phi.T diag(f) Phi / N`` of pointwise multiplication by ``f``."""
    phi = _phi(basis)
    f = np.asarray(f, dtype=float)
    if f.shape != (phi.shape[0],):
        raise ValueError(f"expected {phi.shape[0]} samples, got shape {f.shape}")
    A = phi.T @ (f[:, None] * phi) / phi.shape[0]
    return 0.5 * (A + A.T)


def apply_observable(basis, f, xi):
    """Matrix-free ``multiplication_operator(basis, f) @ xi``.

    ``xi`` may be a vector or a matrix whose columns are coefficient vectors.
    """
    phi = _phi(basis)
    f = np.asarray(f, dtype=float)
    if f.shape != (phi.shape[0],):
        raise ValueError(f"expected {phi.shape[0]} samples, got shape {f.shape}")
    g = phi @ xi
    g *= f if g.ndim == 1 else f[:, None]
    return phi.T @ g / phi.shape[0]


def koopman_matrix(basis):
    """Projected left-shift operator, ``U[i, j] = sum_m phi_i(m) phi_j(m+1) / N``.

    Requires the rows of the basis to be consecutive samples of one
    trajectory.
    """
    phi = _phi(basis)
    N = phi.shape[0]
    if N < 2:
        raise ValueError("need at least two samples to build the shift operator")
    return phi[:-1].T @ phi[1:] / N


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues (ascending) and orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.T


def spectral_decompose(A):
    A = np.asarray(A, dtype=float)
    asym = np.max(np.abs(A - A.T)) if A.size else 0.0
    if asym > 1e-12 * max(1.0, np.abs(A).max()):
        raise ValueError(f"observable matrix is not symmetric (asymmetry {asym:.3g})")
    a, u = np.linalg.eigh(A)
    return SpectralDecomposition(eigenvalues=a, eigenvectors=u)


# --------------------------------------------------------------------------
# Feature map
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EffectMapModel:
    """Everything needed to evaluate the kernel feature map at a point.

    ``train_x`` holds the resolved variables aligned with the basis rows and
    ``bandwidth`` is the Gaussian feature-map bandwidth.
    """

    phi: np.ndarray
    train_x: np.ndarray
    bandwidth: float

    def __post_init__(self):
        if self.train_x.shape[0] != self.phi.shape[0]:
            raise ValueError("train_x rows must match the basis sample count")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")


def feature_vector(model: EffectMapModel, x, sqrt_kernel=True):
    """Kernel values between ``x`` and every training point.

    With ``sqrt_kernel`` the bandwidth is scaled by sqrt(2), giving the
    square root of the Gaussian kernel.
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    eps = model.bandwidth * (np.sqrt(2.0) if sqrt_kernel else 1.0)
    f = np.exp(-sqdist(x, model.train_x)[0] / eps**2)
    if not np.any(f > 0):
        raise EffectAnnihilationError(
            f"point {x.ravel().tolist()} is off the training support: "
            "all kernel values underflow to zero")
    return f


def effect_matrix_apply(model: EffectMapModel, x, xi):
    """``A @ xi`` for the square-root-kernel multiplication matrix ``A`` at
    ``x``; the effect itself is ``A @ A``."""
    return apply_observable(model.phi, feature_vector(model, x), xi)


def effect_matrix_full(model: EffectMapModel, x):
    """The square-root-kernel multiplication matrix ``A`` at ``x``."""
    return multiplication_operator(model.phi, feature_vector(model, x))
