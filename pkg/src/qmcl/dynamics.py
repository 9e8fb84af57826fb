"""Reference dynamical systems, fixed-step integrators and the Gaussian
baseline closure.

Two systems are provided:

* Lorenz 63 written in EOF coordinates ``(a1, a2, a3)``. The resolved
  variables are ``x = (a1, a2)`` and the flux is ``z = a3``.
* Lorenz 96 multiscale with ``K`` slow variables and ``J*K`` fast variables.
  The resolved variables are the slow ``x`` and the flux is the vector of
  fast-variable means per sector.

Full states are handled as flat float64 vectors. For L96 the layout is
``[x_1..x_K, y_{1,1}..y_{J,1}, y_{1,2}..y_{J,K}]``, i.e. the fast block is
the ``J x K`` matrix flattened column by column, which makes the fast ring
``y_{j+J,k} = y_{j,k+1}`` a plain cyclic shift.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrationError

__all__ = [
    "IntegratorConfig",
    "L96Params",
    "Lorenz63",
    "Lorenz96",
    "get_system",
    "integrate_truth",
    "l63_resolved_field",
    "l63_vector_field",
    "l96_flux",
    "l96_resolved_field",
    "l96_vector_field",
    "palmer_gaussian_step",
    "run_palmer",
    "rk4_step",
    "write_trajectory_csv",
]


# --------------------------------------------------------------------------
# Lorenz 63 in EOF coordinates
# --------------------------------------------------------------------------

def l63_vector_field(a):
    """Tendencies of the EOF-coordinate Lorenz 63 system.

    ``a`` may carry leading batch dimensions; the last axis has length 3.
    """
    a = np.asarray(a, dtype=float)
    a1, a2, a3 = a[..., 0], a[..., 1], a[..., 2]
    v1 = 2.3 * a1 - 6.2 * a3 - 0.49 * a1 * a2 - 0.57 * a2 * a3
    v2 = -62.0 - 2.7 * a2 + 0.49 * a1 * a1 - 0.49 * a3 * a3 + 0.14 * a1 * a3
    v3 = -0.63 * a1 - 13.0 * a3 + 0.43 * a1 * a2 + 0.49 * a2 * a3
    return np.stack([v1, v2, v3], axis=-1)


def l63_resolved_field(x, z):
    """First two L63 tendencies with ``a3`` replaced by the flux ``z``."""
    x1, x2 = x[0], x[1]
    z = float(np.ravel(z)[0]) if np.ndim(z) else float(z)
    return np.array([
        2.3 * x1 - 6.2 * z - 0.49 * x1 * x2 - 0.57 * x2 * z,
        -62.0 - 2.7 * x2 + 0.49 * x1 * x1 - 0.49 * z * z + 0.14 * x1 * z,
    ])


# --------------------------------------------------------------------------
# Lorenz 96 multiscale
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class L96Params:
    """Parameters of the two-scale Lorenz 96 system.

    The forcing ``F`` is a free configuration value; 10 is the default.
    """

    K: int = 9
    J: int = 8
    F: float = 10.0
    h_x: float = -0.8
    h_y: float = 1.0
    epsilon_scale: float = 1.0 / 128.0

    def __post_init__(self):
        if self.K < 4:
            raise ValueError(f"K must be at least 4, got {self.K}")
        if self.J < 1:
            raise ValueError(f"J must be positive, got {self.J}")
        if not self.epsilon_scale > 0:
            raise ValueError("epsilon_scale must be positive")


def l96_vector_field(x, y, p: L96Params):
    """Return ``(dx, dy)`` for slow ``x`` (length K) and fast ``y`` (J x K)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (p.K,) or y.shape != (p.J, p.K):
        raise ValueError(
            f"expected x of shape ({p.K},) and y of shape ({p.J}, {p.K}), "
            f"got {x.shape} and {y.shape}"
        )
    yf = y.reshape(-1, order="F")
    dx = _l96_slow(x, y.mean(axis=0), p)
    dyf = _l96_fast(yf, x, p)
    return dx, dyf.reshape(p.J, p.K, order="F")


def _l96_slow(x, ybar, p):
    return (-np.roll(x, 1) * (np.roll(x, 2) - np.roll(x, -1))
            - x + p.F - p.h_x * ybar)


def _l96_fast(yf, x, p):
    return (-np.roll(yf, -1) * (np.roll(yf, -2) - np.roll(yf, 1))
            - yf + p.h_y * np.repeat(x, p.J)) / p.epsilon_scale


def l96_resolved_field(x, z, p: L96Params):
    """Slow L96 tendencies with the sector means replaced by the flux ``z``."""
    return _l96_slow(np.asarray(x, dtype=float), np.asarray(z, dtype=float), p)


def l96_flux(y):
    """Sector means of the fast variables: ``z_k = mean_j y[j, k]``."""
    return np.asarray(y, dtype=float).mean(axis=-2)


# --------------------------------------------------------------------------
# System descriptors
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Lorenz63:
    """Lorenz 63 in EOF coordinates, with ``x = (a1, a2)`` and ``z = a3``."""

    name: str = field(default="l63", init=False)
    state_dim: int = field(default=3, init=False)
    resolved_dim: int = field(default=2, init=False)
    flux_dim: int = field(default=1, init=False)

    def vector_field(self, s):
        return l63_vector_field(s)

    def resolved_field(self, x, z):
        return l63_resolved_field(x, z)

    def resolved(self, states):
        return np.asarray(states)[..., :2]

    def flux(self, states):
        return np.asarray(states)[..., 2:3]

    def state_columns(self):
        return ["a1", "a2", "a3"]

    def resolved_columns(self):
        return ["a1", "a2"]

    def flux_columns(self):
        return ["a3"]

    def params(self):
        return {}


@dataclass(frozen=True)
class Lorenz96:
    """Two-scale Lorenz 96; resolved ``x`` are the slow variables and the
    flux is the per-sector mean of the fast variables."""

    p: L96Params = L96Params()
    name: str = field(default="l96", init=False)

    @property
    def state_dim(self):
        return self.p.K * (self.p.J + 1)

    @property
    def resolved_dim(self):
        return self.p.K

    @property
    def flux_dim(self):
        return self.p.K

    def vector_field(self, s):
        K = self.p.K
        x, yf = s[:K], s[K:]
        dyf = _l96_fast(yf, x, self.p)
        ybar = yf.reshape(K, self.p.J).mean(axis=1)
        return np.concatenate([_l96_slow(x, ybar, self.p), dyf])

    def resolved_field(self, x, z):
        return _l96_slow(x, z, self.p)

    def pack(self, x, y):
        return np.concatenate([np.asarray(x, float),
                               np.asarray(y, float).reshape(-1, order="F")])

    def unpack(self, s):
        K = self.p.K
        return s[..., :K], s[..., K:].reshape(*s.shape[:-1], K, self.p.J).swapaxes(-1, -2)

    def resolved(self, states):
        return np.asarray(states)[..., : self.p.K]

    def flux(self, states):
        states = np.asarray(states)
        K = self.p.K
        return states[..., K:].reshape(*states.shape[:-1], K, self.p.J).mean(axis=-1)

    def state_columns(self):
        K, J = self.p.K, self.p.J
        return ([f"x{k + 1}" for k in range(K)]
                + [f"y{j + 1}_{k + 1}" for k in range(K) for j in range(J)])

    def resolved_columns(self):
        return [f"x{k + 1}" for k in range(self.p.K)]

    def flux_columns(self):
        return [f"z{k + 1}" for k in range(self.p.K)]

    def params(self):
        p = self.p
        return {"K": p.K, "J": p.J, "F": p.F, "h_x": p.h_x, "h_y": p.h_y,
                "epsilon_scale": p.epsilon_scale}


def get_system(name, **params):
    """Build a system descriptor from its name (``l63`` or ``l96``)."""
    if name == "l63":
        return Lorenz63()
    if name == "l96":
        return Lorenz96(L96Params(**params))
    raise ValueError(f"unknown system {name!r}")


# --------------------------------------------------------------------------
# Integration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 0.01
    substeps: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be at least 1")


def rk4_step(field, x, z, dt):
    """One classical RK4 step of ``dx/dt = field(x, z)`` with ``z`` frozen."""
    k1 = field(x, z)
    k2 = field(x + 0.5 * dt * k1, z)
    k3 = field(x + 0.5 * dt * k2, z)
    k4 = field(x + dt * k3, z)
    out = x + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (dt / 6.0)
    if not np.all(np.isfinite(out)):
        raise IntegrationError("RK4 step produced non-finite values")
    return out


def integrate_truth(system, state0, cfg: IntegratorConfig, n_steps):
    """Integrate the full system, sampling every ``cfg.dt``.

    Each outer step is split into ``cfg.substeps`` RK4 steps. Returns an
    array of shape ``(n_steps + 1, state_dim)`` whose first row is
    ``state0``.
    """
    s = np.array(state0, dtype=float)
    out = np.empty((n_steps + 1, s.size))
    out[0] = s
    h = cfg.dt / cfg.substeps
    f = system.vector_field
    for n in range(1, n_steps + 1):
        for _ in range(cfg.substeps):
            k1 = f(s)
            k2 = f(s + 0.5 * h * k1)
            k3 = f(s + 0.5 * h * k2)
            k4 = f(s + h * k3)
            s = s + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0)
        if not np.all(np.isfinite(s)):
            raise IntegrationError(
                f"{getattr(system, 'name', 'system')} integration blew up at step {n}", step=n)
        out[n] = s
    return out


# --------------------------------------------------------------------------
# Gaussian i.i.d. closure (Palmer)
# --------------------------------------------------------------------------

def palmer_gaussian_step(x, sigma, rng, dt=0.01, euler=False):
    """Advance ``(a1, a2)`` one step with an i.i.d. Gaussian ``a3`` draw.

    Returns ``(x_next, z)``. ``euler=True`` uses forward Euler instead of RK4.
    """
    z = sigma * rng.standard_normal()
    if euler:
        x_next = x + dt * l63_resolved_field(x, z)
    else:
        x_next = rk4_step(l63_resolved_field, x, z, dt)
    return x_next, z


def run_palmer(x0, sigma, n_steps, rng, dt=0.01, euler=False):
    """Iterate :func:`palmer_gaussian_step`.

    Returns ``(xs, zs)`` with ``xs[n]`` the state after ``n + 1`` steps and
    ``zs[n]`` the draw that produced it.
    """
    x = np.array(x0, dtype=float)
    xs = np.empty((n_steps, 2))
    zs = np.empty((n_steps, 1))
    for n in range(n_steps):
        try:
            x, z = palmer_gaussian_step(x, sigma, rng, dt=dt, euler=euler)
        except IntegrationError as exc:
            raise IntegrationError(f"{exc} at step {n + 1}", step=n + 1) from exc
        xs[n] = x
        zs[n, 0] = z
    return xs, zs


# --------------------------------------------------------------------------
# CSV export
# --------------------------------------------------------------------------

def write_trajectory_csv(path, t, values, columns, first=("t",)):
    """Write ``first`` columns followed by ``values`` with 17 significant digits."""
    t = np.asarray(t, dtype=float).reshape(len(t), -1)
    data = np.column_stack([t, np.asarray(values, dtype=float)])
    header = ",".join(list(first) + list(columns))
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")
