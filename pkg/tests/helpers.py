"""Shared builders for tests: short L63 trajectories and toy closure models."""

import numpy as np

from qmcl.closure import TrainingConfig, TrajectoryDataset, train
from qmcl.dynamics import IntegratorConfig, Lorenz63, integrate_truth

L63 = Lorenz63()
_CACHE = {}


def l63_trajectory(n, burn_in_steps=5000, start=(2.0, 2.0, 2.0), dt=0.01):
    """``n`` samples of L63 after ``burn_in_steps`` steps from ``start``."""
    key = (n, burn_in_steps, tuple(start), dt)
    if key not in _CACHE:
        cfg = IntegratorConfig(dt=dt, substeps=1)
        s = integrate_truth(L63, np.array(start, float), cfg, burn_in_steps)[-1]
        _CACHE[key] = integrate_truth(L63, s, cfg, n - 1)
    return _CACHE[key]


def l63_dataset(traj, dt=0.01):
    return TrajectoryDataset(dt=dt, w=traj, x=L63.resolved(traj), z=L63.flux(traj))


def toy_model(N=300, L=20, r=5, feature_bandwidth=4.0, offset=0, basis_bandwidth=None,
              solver="dense", z=None):
    traj = l63_trajectory(2000)[offset: offset + N]
    data = l63_dataset(traj)
    if z is not None:
        data = TrajectoryDataset(dt=data.dt, w=data.w, x=data.x, z=z)
    cfg = TrainingConfig(L=L, feature_bandwidth=feature_bandwidth, r=r,
                         basis_bandwidth=basis_bandwidth, solver=solver)
    return train(data, cfg, L63)


def rebuild_with_basis(model, phi):
    """Same model with every basis-dependent matrix recomputed from ``phi``."""
    import dataclasses

    from qmcl.basis import EigenBasis
    from qmcl.operators import (
        EffectMapModel,
        koopman_matrix,
        multiplication_operator,
        spectral_decompose,
    )

    basis = EigenBasis(phi=phi, eigenvalues=model.basis.eigenvalues)
    Zs = tuple(multiplication_operator(basis, model.train_z[:, i])
               for i in range(model.train_z.shape[1]))
    return dataclasses.replace(
        model, basis=basis, koopman=koopman_matrix(basis), flux_observables=Zs,
        flux_spectra=tuple(spectral_decompose(Z) for Z in Zs),
        effect_map=EffectMapModel(phi=phi, train_x=model.effect_map.train_x,
                                  bandwidth=model.effect_map.bandwidth))
