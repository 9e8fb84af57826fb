"""Training and simulation of the quantum mechanical closure.

A trained :class:`ClosureModel` couples the classical resolved dynamics to a
quantum state on the kernel eigenbasis. Each step computes the flux from the
current state (expectation or spectral sample), advances the resolved
variables with RK4, and applies the transfer operator to the state. Every
``r`` steps the state is conditioned on the feature-map effect at the current
resolved variables.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .basis import EigenBasis, compute_basis
from .dynamics import rk4_step
from .errors import EffectAnnihilationError, QMCLError
from .kernels import assemble_sparse_kernel, default_knn, delay_embed, tune_bandwidth
from .operators import (
    EffectMapModel,
    apply_observable,
    feature_vector,
    koopman_matrix,
    multiplication_operator,
    spectral_decompose,
)
from .quantum import (
    check_state,
    condition,
    evolve_transfer,
    feature_map_state,
    measurement_distribution,
    sample_measurement,
    uninformative_state,
)

__all__ = [
    "ClosureModel",
    "ClosureState",
    "RunResult",
    "TrainingConfig",
    "TrajectoryDataset",
    "cycle_deterministic",
    "cycle_stochastic",
    "initialize",
    "run",
    "train",
]

log = logging.getLogger(__name__)


@dataclass
class TrajectoryDataset:
    """Samples of one contiguous trajectory at spacing ``dt``.

    ``w`` feeds the basis kernel, ``x`` holds the resolved variables and
    ``z`` the flux; all three share the row index.
    """

    dt: float
    w: np.ndarray
    x: np.ndarray
    z: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.w = _as_2d(self.w)
        self.x = _as_2d(self.x)
        self.z = _as_2d(self.z)
        n = {len(self.w), len(self.x), len(self.z)}
        if len(n) != 1:
            raise ValueError(f"w, x and z have different lengths: {sorted(n)}")

    @property
    def N(self):
        return len(self.x)


def _as_2d(a):
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


@dataclass(frozen=True)
class TrainingConfig:
    L: int
    feature_bandwidth: float
    r: int
    k_nn: int | None = None
    basis_bandwidth: float | None = None
    delays: int = 0
    solver: str = "auto"
    seed: int = 0
    tune_max_points: int = 2000

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"L must be positive, got {self.L}")
        if self.r < 1:
            raise ValueError(f"r must be positive, got {self.r}")
        if self.delays < 0 or self.delays % 2:
            raise ValueError(f"delays must be a non-negative even integer, got {self.delays}")
        if not self.feature_bandwidth > 0:
            raise ValueError("feature_bandwidth must be positive")
        if self.basis_bandwidth is not None and not self.basis_bandwidth > 0:
            raise ValueError("basis_bandwidth must be positive")
        if self.k_nn is not None and self.k_nn < 1:
            raise ValueError("k_nn must be positive")


@dataclass(frozen=True)
class ClosureModel:
    basis: EigenBasis
    koopman: np.ndarray
    flux_observables: tuple
    flux_spectra: tuple
    effect_map: EffectMapModel
    system: object
    dt: float
    r: int
    basis_bandwidth: float
    k_nn: int
    train_z: np.ndarray
    config: TrainingConfig | None = None

    @property
    def L(self):
        return self.basis.L

    @property
    def flux_dim(self):
        return len(self.flux_observables)

    @cached_property
    def flux_stack(self):
        return np.ascontiguousarray(np.stack(self.flux_observables))

    def flux_expectation(self, q):
        Z = self.flux_stack
        if q.ndim == 1:
            return np.einsum("kij,j->ki", Z, q) @ q
        return np.einsum("ij,kji->k", q, Z)


@dataclass
class ClosureState:
    x: np.ndarray
    q: np.ndarray
    step_in_cycle: int = 0


class RunResult(NamedTuple):
    x: np.ndarray
    z: np.ndarray
    state: ClosureState
    events: list


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------

def train(data: TrajectoryDataset, cfg: TrainingConfig, system) -> ClosureModel:
    """Build the basis, shift operator, flux observables and feature map."""
    w, x, z = data.w, data.x, data.z
    if cfg.delays:
        w, centers = delay_embed(w, cfg.delays)
        x, z = x[centers], z[centers]
    N = len(w)
    if cfg.L > N:
        raise ValueError(f"L={cfg.L} exceeds the {N} usable samples")

    bandwidth = cfg.basis_bandwidth
    if bandwidth is None:
        bandwidth = tune_bandwidth(w, max_points=cfg.tune_max_points, seed=cfg.seed)
        log.info("tuned basis bandwidth %.6g", bandwidth)
    k_nn = min(N, cfg.k_nn) if cfg.k_nn is not None else default_knn(N)
    K = assemble_sparse_kernel(w, bandwidth, k_nn)
    basis = compute_basis(K, cfg.L, solver=cfg.solver, seed=cfg.seed)
    del K

    U = koopman_matrix(basis)
    Zs = tuple(multiplication_operator(basis, z[:, i]) for i in range(z.shape[1]))
    spectra = tuple(spectral_decompose(Zi) for Zi in Zs)
    effect = EffectMapModel(phi=basis.phi, train_x=np.ascontiguousarray(x),
                            bandwidth=float(cfg.feature_bandwidth))
    return ClosureModel(
        basis=basis, koopman=U, flux_observables=Zs, flux_spectra=spectra,
        effect_map=effect, system=system, dt=float(data.dt), r=int(cfg.r),
        basis_bandwidth=float(bandwidth), k_nn=int(k_nn),
        train_z=np.ascontiguousarray(z), config=cfg,
    )


# --------------------------------------------------------------------------
# Simulation
# --------------------------------------------------------------------------

def initialize(model: ClosureModel, x0, mode="uninformative"):
    x0 = np.array(x0, dtype=float).reshape(-1)
    if mode == "uninformative":
        q = uninformative_state(model.basis)
    elif mode == "feature_map":
        q = feature_map_state(model.effect_map, x0)
    else:
        raise ValueError(f"unknown initialization mode {mode!r}")
    return ClosureState(x=x0, q=q, step_in_cycle=0)


def _deterministic_flux(model):
    return model.flux_expectation


def _stochastic_flux(model, rng):
    def flux(q):
        return np.array([
            sample_measurement(measurement_distribution(q, dec), dec.eigenvalues, rng)
            for dec in model.flux_spectra
        ])
    return flux


def _condition_on(model, q, x):
    f = feature_vector(model.effect_map, x)
    phi = model.basis.phi
    return condition(q, lambda v: apply_observable(phi, f, v))


def _advance(model, state, n_steps, flux, recover=False, check_every=100,
             step_offset=0, record_conditioning=False):
    field_ = model.system.resolved_field
    U, dt, r = model.koopman, model.dt, model.r
    x, q, k = state.x, state.q, state.step_in_cycle
    xs = np.empty((n_steps, x.size))
    zs = np.empty((n_steps, model.flux_dim))
    events = []
    n_cond = 0
    for n in range(n_steps):
        step = step_offset + n + 1
        try:
            z = flux(q)
            x = rk4_step(field_, x, z, dt)
            q = evolve_transfer(q, U)
        except QMCLError as exc:
            raise type(exc)(f"{exc} (step {step})") from exc
        xs[n] = x
        zs[n] = z
        k += 1
        if k == r:
            k = 0
            try:
                q = _condition_on(model, q, x)
            except EffectAnnihilationError as exc:
                if not recover:
                    raise EffectAnnihilationError(f"{exc} (step {step})") from exc
                q = uninformative_state(model.basis)
                events.append((step, "recovered"))
                log.warning("step %d: %s; reset to the uninformative state", step, exc)
            else:
                if record_conditioning:
                    events.append((step, "conditioned"))
                log.debug("step %d: conditioned at x=%s", step, x)
            n_cond += 1
            if check_every and n_cond % check_every == 0:
                check_state(q, atol=1e-8)
    return xs, zs, ClosureState(x=x, q=q, step_in_cycle=k), events


def cycle_deterministic(model, state):
    """One forecast-analysis cycle with expectation fluxes.

    Returns ``(xs, zs, new_state)``: the ``r`` resolved states produced, the
    fluxes that drove each step, and the conditioned state.
    """
    xs, zs, new, _ = _advance(model, state, model.r - state.step_in_cycle,
                              _deterministic_flux(model), check_every=0)
    return xs, zs, new


def cycle_stochastic(model, state, rng):
    """As :func:`cycle_deterministic` with fluxes sampled from the spectra of
    the flux observables."""
    xs, zs, new, _ = _advance(model, state, model.r - state.step_in_cycle,
                              _stochastic_flux(model, rng), check_every=0)
    return xs, zs, new


def run(model, state, n_steps, mode="deterministic", rng=None,
        recover_uninformative=False, check_every=100, record_conditioning=False):
    """Advance ``n_steps`` steps.

    Returns :class:`RunResult` with ``x[n]`` the resolved state after step
    ``n + 1`` and ``z[n]`` the flux used for that step. A trailing partial
    cycle is not conditioned; the returned state records its position.
    Deterministic mode ignores ``rng``. ``events`` lists ``(step, kind)``
    pairs for recoveries and, with ``record_conditioning``, conditionings.
    """
    if mode == "deterministic":
        flux = _deterministic_flux(model)
    elif mode == "stochastic":
        if rng is None:
            raise ValueError("stochastic mode needs a random generator")
        flux = _stochastic_flux(model, rng)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    xs, zs, new, events = _advance(model, state, n_steps, flux,
                                   recover=recover_uninformative,
                                   check_every=check_every,
                                   record_conditioning=record_conditioning)
    return RunResult(xs, zs, new, events)
