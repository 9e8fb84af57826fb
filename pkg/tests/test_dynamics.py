import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qmcl.dynamics import (
    IntegratorConfig,
    L96Params,
    Lorenz63,
    Lorenz96,
    get_system,
    integrate_truth,
    l63_resolved_field,
    l63_vector_field,
    l96_flux,
    l96_resolved_field,
    l96_vector_field,
    palmer_gaussian_step,
    rk4_step,
    run_palmer,
    write_trajectory_csv,
)
from qmcl.errors import IntegrationError

finite = st.floats(-50, 50, allow_nan=False)


# --- Lorenz 63 -------------------------------------------------------------

@pytest.mark.parametrize("a, expected", [
    ((0, 0, 0), (0, -62, 0)),
    ((1, 0, 0), (2.3, -61.51, -0.63)),
    ((0, 1, 0), (0, -64.7, 0)),
])
def test_l63_vector_field_examples(a, expected):
    np.testing.assert_allclose(l63_vector_field(np.array(a, float)), expected, atol=1e-14)


def test_l63_vector_field_coefficients_by_hand():
    a1, a2, a3 = 0.3, -1.7, 2.2
    v = l63_vector_field(np.array([a1, a2, a3]))
    expected = (
        2.3 * a1 - 6.2 * a3 - 0.49 * a1 * a2 - 0.57 * a2 * a3,
        -62 - 2.7 * a2 + 0.49 * a1**2 - 0.49 * a3**2 + 0.14 * a1 * a3,
        -0.63 * a1 - 13 * a3 + 0.43 * a1 * a2 + 0.49 * a2 * a3,
    )
    np.testing.assert_allclose(v, expected, rtol=1e-14)


def test_l63_vector_field_batched():
    a = np.random.default_rng(0).normal(size=(7, 3))
    batched = l63_vector_field(a)
    for row, v in zip(a, batched):
        np.testing.assert_array_equal(l63_vector_field(row), v)


@pytest.mark.parametrize("x, z, expected", [
    ((0, 0), 0, (0, -62)),
    ((1, 0), 0, (2.3, -61.51)),
    ((0, 0), 1, (-6.2, -62.49)),
])
def test_l63_resolved_field_examples(x, z, expected):
    np.testing.assert_allclose(l63_resolved_field(np.array(x, float), z), expected, atol=1e-14)


@given(arrays(float, 3, elements=finite))
def test_l63_resolved_field_matches_full_field(a):
    np.testing.assert_allclose(l63_resolved_field(a[:2], a[2]), l63_vector_field(a)[:2],
                               rtol=1e-13, atol=1e-10)


# --- Lorenz 96 -------------------------------------------------------------

def _l96_loops(x, y, p):
    """Independent oracle with explicit periodic index arithmetic."""
    K, J = p.K, p.J

    def Y(j, k):
        # y_{j+J,k} = y_{j,k+1}; y_{j,k+K} = y_{j,k}
        k += j // J
        j %= J
        return y[j, k % K]

    dx = np.empty(K)
    dy = np.empty((J, K))
    for k in range(K):
        ybar = sum(y[j, k] for j in range(J)) / J
        dx[k] = -x[(k - 1) % K] * (x[(k - 2) % K] - x[(k + 1) % K]) - x[k] + p.F - p.h_x * ybar
        for j in range(J):
            dy[j, k] = (-Y(j + 1, k) * (Y(j + 2, k) - Y(j - 1, k)) - y[j, k]
                        + p.h_y * x[k]) / p.epsilon_scale
    return dx, dy


def test_l96_matches_loop_oracle():
    rng = np.random.default_rng(1)
    p = L96Params(K=9, J=8)
    x, y = rng.normal(size=9), rng.normal(size=(8, 9))
    dx, dy = l96_vector_field(x, y, p)
    ox, oy = _l96_loops(x, y, p)
    np.testing.assert_allclose(dx, ox, rtol=1e-13, atol=1e-12)
    np.testing.assert_allclose(dy, oy, rtol=1e-13, atol=1e-9)


def test_l96_zero_state():
    p = L96Params()
    dx, dy = l96_vector_field(np.zeros(9), np.zeros((8, 9)), p)
    np.testing.assert_array_equal(dx, np.full(9, p.F))
    np.testing.assert_array_equal(dy, 0.0)


def test_l96_fast_linear_term():
    p = L96Params()
    x = np.arange(1.0, 10.0)
    _, dy = l96_vector_field(x, np.zeros((8, 9)), p)
    np.testing.assert_allclose(dy, np.tile(p.h_y * x / p.epsilon_scale, (8, 1)), rtol=1e-15)


def test_l96_uniform_slow_state():
    p = L96Params()
    c = 3.5
    dx, _ = l96_vector_field(np.full(9, c), np.zeros((8, 9)), p)
    np.testing.assert_allclose(dx, p.F - c, rtol=1e-15)


def test_l96_dimension_mismatch():
    with pytest.raises(ValueError):
        l96_vector_field(np.zeros(8), np.zeros((8, 9)), L96Params())
    with pytest.raises(ValueError):
        l96_vector_field(np.zeros(9), np.zeros((9, 8)), L96Params())


def test_l96_params_validation():
    with pytest.raises(ValueError):
        L96Params(K=3)
    with pytest.raises(ValueError):
        L96Params(epsilon_scale=0.0)


def test_l96_default_forcing_is_ten():
    assert L96Params().F == 10.0
    assert L96Params(F=8.0).F == 8.0


@settings(max_examples=50)
@given(arrays(float, 9, elements=finite), arrays(float, (8, 9), elements=finite))
def test_l96_cyclic_shift_equivariance(x, y):
    p = L96Params()
    dx, dy = l96_vector_field(x, y, p)
    sdx, sdy = l96_vector_field(np.roll(x, 1), np.roll(y, 1, axis=1), p)
    np.testing.assert_allclose(sdx, np.roll(dx, 1), rtol=1e-12, atol=1e-9)
    np.testing.assert_allclose(sdy, np.roll(dy, 1, axis=1), rtol=1e-12, atol=1e-6)


def test_l96_flux_examples():
    np.testing.assert_array_equal(l96_flux(np.zeros((8, 9))), np.zeros(9))
    np.testing.assert_array_equal(l96_flux(np.ones((8, 9))), np.ones(9))
    y = np.zeros((2, 4))
    y[:, 0] = (1, 3)
    assert l96_flux(y)[0] == 2.0


def test_l96_system_pack_roundtrip_and_flux():
    sysm = Lorenz96(L96Params())
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=9), rng.normal(size=(8, 9))
    s = sysm.pack(x, y)
    ux, uy = sysm.unpack(s)
    np.testing.assert_array_equal(ux, x)
    np.testing.assert_array_equal(uy, y)
    np.testing.assert_allclose(sysm.flux(s), l96_flux(y), rtol=1e-14, atol=1e-15)
    dx, dy = l96_vector_field(x, y, sysm.p)
    np.testing.assert_allclose(sysm.vector_field(s), sysm.pack(dx, dy), rtol=1e-13)
    np.testing.assert_allclose(sysm.resolved_field(x, l96_flux(y)), dx, rtol=1e-13)
    np.testing.assert_allclose(l96_resolved_field(x, l96_flux(y), sysm.p), dx, rtol=1e-13)


def test_get_system():
    assert get_system("l63") == Lorenz63()
    assert get_system("l96", F=8.0).p.F == 8.0
    with pytest.raises(ValueError):
        get_system("l84")


# --- RK4 -------------------------------------------------------------------

def test_rk4_zero_field():
    x = np.array([1.0, -2.0])
    np.testing.assert_array_equal(rk4_step(lambda x, z: np.zeros_like(x), x, 0.0, 0.1), x)


def test_rk4_constant_field_exact():
    x = np.array([1.0, -2.0])
    z = np.array([0.5, 3.0])
    np.testing.assert_allclose(rk4_step(lambda x, z: z, x, z, 0.01), x + 0.01 * z, rtol=1e-15)


def test_rk4_exponential_oracle():
    dt = 0.01
    got = rk4_step(lambda x, z: x, np.array([1.0]), 0.0, dt)[0]
    assert got == pytest.approx(1 + dt + dt**2 / 2 + dt**3 / 6 + dt**4 / 24, rel=1e-15)
    assert abs(got - math.exp(dt)) / math.exp(dt) < 1e-10


def test_rk4_holds_flux_fixed():
    seen = []

    def field(x, z):
        seen.append(z)
        return -x

    rk4_step(field, np.array([1.0]), 0.7, 0.1)
    assert seen == [0.7] * 4


def test_rk4_nonfinite_raises():
    with pytest.raises(IntegrationError):
        rk4_step(lambda x, z: x * np.inf, np.array([1.0]), 0.0, 0.1)


def test_rk4_fourth_order_slope():
    dts = np.array([1e-2, 5e-3, 2.5e-3])
    errs = [abs(rk4_step(lambda x, z: x, np.array([1.0]), 0.0, dt)[0] - math.exp(dt))
            for dt in dts]
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert abs(slope - 5) < 0.3


# --- truth integration -----------------------------------------------------

def test_integrate_truth_zero_steps():
    s0 = np.array([2.0, 2.0, 2.0])
    out = integrate_truth(Lorenz63(), s0, IntegratorConfig(), 0)
    assert out.shape == (1, 3)
    np.testing.assert_array_equal(out[0], s0)


def test_integrate_truth_self_convergence():
    # inner steps 1.25e-3 and 6.25e-4; chaos amplifies coarser local errors
    # past the threshold within 10 time units
    s0 = np.array([2.0, 2.0, 2.0])
    end = {m: integrate_truth(Lorenz63(), s0, IntegratorConfig(0.01, m), 1000)[-1]
           for m in (4, 8, 16)}
    fine = np.max(np.abs(end[8] - end[16]))
    coarse = np.max(np.abs(end[4] - end[8]))
    assert fine < 1e-4
    assert coarse / fine > 4


def test_integrate_truth_deterministic():
    s0 = np.array([2.0, 2.0, 2.0])
    a = integrate_truth(Lorenz63(), s0, IntegratorConfig(), 500)
    b = integrate_truth(Lorenz63(), s0, IntegratorConfig(), 500)
    np.testing.assert_array_equal(a, b)


def test_integrate_truth_l63_bounded_for_1000_time_units():
    traj = integrate_truth(Lorenz63(), np.array([2.0, 2.0, 2.0]), IntegratorConfig(), 100_000)
    assert np.all(np.abs(traj) < 100)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_integrate_truth_blowup_reports_step():
    class Exploding:
        def vector_field(self, s):
            return s**2

    with pytest.raises(IntegrationError) as info:
        integrate_truth(Exploding(), np.array([1.0]), IntegratorConfig(0.5, 1), 100)
    assert info.value.step is not None and 1 <= info.value.step <= 100
    assert "step" in str(info.value)


def test_integrator_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0.01, substeps=0)


# --- Gaussian baseline -----------------------------------------------------

def test_palmer_zero_sigma_gives_zero_flux():
    rng = np.random.default_rng(0)
    x = np.array([1.0, 2.0])
    x1, z = palmer_gaussian_step(x, 0.0, rng)
    assert z == 0.0
    np.testing.assert_array_equal(x1, rk4_step(l63_resolved_field, x, 0.0, 0.01))


def test_palmer_euler_flag():
    x = np.array([1.0, 2.0])
    x1, z = palmer_gaussian_step(x, 1.0, np.random.default_rng(3), euler=True)
    np.testing.assert_allclose(x1, x + 0.01 * l63_resolved_field(x, z), rtol=1e-15)


def test_palmer_flux_moments_monte_carlo():
    sigma, n = 1.7, 1_000_000
    _, zs = run_palmer(np.array([1.0, 1.0]), sigma, n, np.random.default_rng(4))
    assert abs(zs.mean()) < 4 * sigma / 1e3
    assert abs(zs.var() / sigma**2 - 1) < 0.01


def test_palmer_reproducible():
    a = run_palmer(np.array([1.0, 1.0]), 1.0, 100, np.random.default_rng(5))
    b = run_palmer(np.array([1.0, 1.0]), 1.0, 100, np.random.default_rng(5))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


# --- CSV -------------------------------------------------------------------

def test_trajectory_csv_roundtrip(tmp_path):
    traj = integrate_truth(Lorenz63(), np.array([2.0, 2.0, 2.0]), IntegratorConfig(), 20)
    t = 0.01 * np.arange(len(traj))
    path = tmp_path / "traj.csv"
    write_trajectory_csv(path, t, traj, Lorenz63().state_columns())
    with open(path) as fh:
        assert fh.readline().strip() == "t,a1,a2,a3"
    back = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(back[:, 1:], traj)
    np.testing.assert_array_equal(back[:, 0], t)
