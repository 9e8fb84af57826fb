"""Quantum states on the L-dimensional basis space.

States are plain arrays: a 1-D unit vector is a pure state and a 2-D
symmetric, positive semidefinite, trace-one matrix is a density matrix.
Everything is real; all matrices built by the package are real symmetric.
"""

from __future__ import annotations

import numpy as np

from .errors import EffectAnnihilationError, StateError, TransferAnnihilationError
from .operators import feature_vector, multiplication_operator

__all__ = [
    "check_state",
    "condition",
    "evolve_transfer",
    "expectation",
    "feature_map_state",
    "is_pure",
    "measurement_distribution",
    "sample_measurement",
    "to_density",
    "uninformative_state",
]

ANNIHILATION_THRESHOLD = 1e-300
CLAMP_TOLERANCE = 1e-12


def is_pure(state):
    return np.ndim(state) == 1


def to_density(state):
    state = np.asarray(state, dtype=float)
    return np.outer(state, state) if state.ndim == 1 else state


def check_state(state, atol=1e-10):
    """Raise :class:`StateError` unless ``state`` is a valid state."""
    state = np.asarray(state)
    if not np.all(np.isfinite(state)):
        raise StateError("state has non-finite entries")
    if state.ndim == 1:
        nrm = np.linalg.norm(state)
        if abs(nrm - 1.0) > atol:
            raise StateError(f"pure state has norm {nrm!r}")
    elif state.ndim == 2:
        tr = np.trace(state)
        if abs(tr - 1.0) > atol:
            raise StateError(f"density matrix has trace {tr!r}")
        if np.max(np.abs(state - state.T)) > atol:
            raise StateError("density matrix is not symmetric")
        mineig = np.linalg.eigvalsh(state)[0]
        if mineig < -1e-8:
            raise StateError(f"density matrix has eigenvalue {mineig!r}")
    else:
        raise StateError(f"state must be 1-D or 2-D, got {state.ndim}-D")
    return state


def expectation(state, A):
    """``tr(rho A)``, or ``xi.A.xi`` for a pure state."""
    state = np.asarray(state)
    A = np.asarray(A)
    if A.shape != (state.shape[0], state.shape[0]):
        raise ValueError(f"observable shape {A.shape} does not match state {state.shape}")
    if state.ndim == 1:
        return float(state @ A @ state)
    return float(np.einsum("ij,ji->", state, A))


def evolve_transfer(state, U):
    """Transfer-operator step ``U.T rho U`` renormalized to unit trace."""
    state = np.asarray(state)
    if state.ndim == 1:
        v = U.T @ state
        nrm = np.linalg.norm(v)
        if not nrm**2 > ANNIHILATION_THRESHOLD:
            raise TransferAnnihilationError("state annihilated by transfer step")
        return v / nrm
    rho = U.T @ state @ U
    tr = np.trace(rho)
    if not tr > ANNIHILATION_THRESHOLD:
        raise TransferAnnihilationError("state annihilated by transfer step")
    rho = 0.5 * (rho + rho.T)
    return rho / tr


def condition(state, effect):
    """Condition on the effect ``A @ A``.

    ``effect`` is the symmetric PSD matrix ``A`` or a callable applying it to
    a vector or to the columns of a matrix. Pure states map to
    ``A xi / |A xi|`` and density matrices to ``A rho A / tr(A rho A)``.
    """
    apply = effect if callable(effect) else (lambda v: effect @ v)
    state = np.asarray(state)
    if state.ndim == 1:
        v = apply(state)
        n2 = float(v @ v)
        if not n2 > ANNIHILATION_THRESHOLD:
            raise EffectAnnihilationError("effect annihilates state")
        return v / np.sqrt(n2)
    B = apply(state)
    rho = apply(B.T)
    tr = np.trace(rho)
    if not tr > ANNIHILATION_THRESHOLD:
        raise EffectAnnihilationError("effect annihilates state")
    rho = 0.5 * (rho + rho.T)
    return rho / tr


def measurement_distribution(state, dec):
    """Probabilities of the eigenvalues of an observable with spectral
    decomposition ``dec``."""
    u = dec.eigenvectors
    state = np.asarray(state)
    if state.shape[0] != u.shape[0]:
        raise ValueError(f"state dimension {state.shape[0]} does not match {u.shape[0]}")
    if state.ndim == 1:
        p = (u.T @ state) ** 2
    else:
        p = np.einsum("il,ij,jl->l", u, state, u)
        if p.min() < -CLAMP_TOLERANCE:
            raise StateError(f"negative probability {p.min()!r}; state is not PSD")
        p = np.maximum(p, 0.0)
    return p / p.sum()


def sample_measurement(p, spectrum, rng, size=None):
    """Draw spectrum values with probabilities ``p`` by inverse-CDF sampling."""
    cdf = np.cumsum(p)
    u = rng.random(size) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    idx = np.minimum(idx, np.flatnonzero(np.asarray(p) > 0)[-1])
    return np.asarray(spectrum)[idx]


def uninformative_state(basis):
    """Normalized coefficients of the constant function in the basis."""
    phi = basis.phi if hasattr(basis, "phi") else np.asarray(basis)
    c = phi.mean(axis=0)
    nrm = np.linalg.norm(c)
    if not nrm > 0:
        raise StateError("constant function is orthogonal to the basis")
    return c / nrm


def feature_map_state(model, x):
    """Density matrix proportional to the Gaussian feature-map effect at ``x``."""
    F = multiplication_operator(model.phi, feature_vector(model, x, sqrt_kernel=False))
    tr = np.trace(F)
    if not tr > 0:
        raise StateError("feature-map effect has zero trace")
    return F / tr
