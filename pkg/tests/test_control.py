import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import Setup
from wavecip.control import (ControlFunction, HUMConfig, HUMProblem, cgls, control_cache_key, solve_control,
                             time_taper, verify_null_control)
from wavecip.domain import CutoffField, FrequencySample
from wavecip.wave import BoundaryTrace, SampledDirichlet, solve_ivbp

_SMALL = Setup(16, T=4.0)
_SMALL.prob = HUMProblem(_SMALL.grid, _SMALL.gamma, _SMALL.c0, HUMConfig())


@pytest.fixture
def small():
    return _SMALL


def random_state(grid, rng, k=2):
    return rng.standard_normal((k, grid.nx - 1, grid.ny - 1)) + 1j * rng.standard_normal((k, grid.nx - 1, grid.ny - 1))


def test_operator_zero(small):
    z = np.zeros((2, small.grid.nx - 1, small.grid.ny - 1), complex)
    assert not np.any(small.prob.hum_operator_apply(z))


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_operator_symmetric_and_positive(seed):
    s = _SMALL
    rng = np.random.default_rng(seed)
    x, y = random_state(s.grid, rng), random_state(s.grid, rng)
    Ax, Ay = s.prob.hum_operator_apply(x), s.prob.hum_operator_apply(y)
    lhs = np.vdot(y, Ax)
    rhs = np.vdot(Ay, x)
    assert abs(lhs - rhs) <= 1e-6 * abs(lhs)
    assert np.vdot(x, Ax).real >= 0


def test_forward_matches_plain_solver(small):
    rng = np.random.default_rng(1)
    g = rng.standard_normal((small.grid.nt + 1, small.gamma.n_samples)) * small.prob.weight
    s = small.prob.forward(g)
    mv = solve_ivbp(small.grid, small.c0, np.zeros(small.grid.shape), np.zeros(small.grid.shape),
                    SampledDirichlet(small.gamma, g), store=False)
    prev, cur = mv.final_levels
    assert np.allclose(s[0], prev[1:-1, 1:-1], atol=1e-12) and np.allclose(s[1], cur[1:-1, 1:-1], atol=1e-12)


def test_transpose_dot(small):
    rng = np.random.default_rng(2)
    g = rng.standard_normal((small.grid.nt + 1, small.gamma.n_samples)) + 0j
    p = random_state(small.grid, rng)
    a = np.sum(small.prob.forward(g) * p)
    b = np.sum(g * small.prob.transpose(p))
    assert abs(a - b) <= 1e-10 * abs(a)


def test_energy_metric_positive(small):
    rng = np.random.default_rng(4)
    for _ in range(5):
        assert small.prob.energy(random_state(small.grid, rng)) > 0


def test_cg_residual_monotone(small):
    eta = FrequencySample((2 * math.pi, 0.0))
    cfg = HUMConfig(cg_tol=1e-9, cg_max_iters=40, epsilon=0.0)
    prob = HUMProblem(small.grid, small.gamma, small.c0, cfg)
    cf = solve_control(eta, small.beta, prob, cfg)
    h = np.array(cf.history)
    assert np.all(np.diff(h) <= 1e-12)
    cfg = HUMConfig(cg_tol=1e-9, cg_max_iters=40, epsilon=1e-3)
    prob = HUMProblem(small.grid, small.gamma, small.c0, cfg)
    cf = solve_control(eta, small.beta, prob, cfg)
    aug = np.array(cf.g.meta["augmented_history"])
    assert np.all(np.diff(aug) <= 1e-12)


def test_zero_beta_gives_zero_control(small):
    beta0 = CutoffField(np.zeros(small.grid.shape), small.om, 0.15)
    cf = solve_control(FrequencySample((math.pi, 0)), beta0, small.prob)
    assert cf.certified and cf.iterations <= 1 and not np.any(cf.g.values)
    assert verify_null_control(cf, FrequencySample((math.pi, 0)), beta0, small.gamma, small.c0) == 0.0


def test_no_control_keeps_energy(small):
    eta = FrequencySample((2 * math.pi, 0.0))
    g0 = BoundaryTrace(np.zeros((small.grid.nt + 1, small.gamma.n_samples), complex), small.grid.dt, "control")
    cf = ControlFunction(g0, eta, 1.0, 0, 0.0, False)
    r = verify_null_control(cf, eta, small.beta, small.gamma, small.c0)
    assert abs(r - 1) < 1e-10


def test_certified_control_round_trip(setup32):
    eta = FrequencySample((2 * math.pi, 0.0))
    cf = setup32.control(eta.eta)
    assert cf.certified and cf.residual_energy <= 1e-3
    r = verify_null_control(cf, eta, setup32.beta, setup32.gamma, setup32.c0)
    assert abs(r - cf.residual_energy) <= 0.1 * cf.residual_energy
    # tapered: zero on the first/last levels and at corners
    assert not np.any(cf.g.values[[0, 1, -2, -1]])
    assert not np.any(cf.g.values[:, setup32.gamma.is_corner])


def test_longer_horizon_controls_no_worse():
    res = []
    for T in (2.0, 4.0):
        s = Setup(24, T=T)
        cfg = HUMConfig(cg_tol=1e-12, cg_max_iters=15)
        prob = HUMProblem(s.grid, s.gamma, s.c0, cfg)
        res.append(solve_control(FrequencySample((2 * math.pi, 0)), s.beta, prob, cfg).residual_energy)
    assert res[1] <= res[0]


def test_time_taper_shape(small):
    w = time_taper(small.grid, 0.05)
    assert w[0] == w[1] == w[-1] == w[-2] == 0
    assert np.all((w >= 0) & (w <= 1))
    mid = small.grid.nt // 2
    assert w[mid] == 1.0


def test_config_validation():
    with pytest.raises(ValueError):
        HUMConfig(cg_tol=0)
    with pytest.raises(ValueError):
        HUMConfig(epsilon=-1)


def test_cache_key_sensitivity(small):
    e1, e2 = FrequencySample((1.0, 0.0)), FrequencySample((2.0, 0.0))
    k = control_cache_key(small.grid, small.gamma, e1, small.beta, HUMConfig(), small.c0)
    assert k == control_cache_key(small.grid, small.gamma, e1, small.beta, HUMConfig(), small.c0)
    assert k != control_cache_key(small.grid, small.gamma, e2, small.beta, HUMConfig(), small.c0)
    assert k != control_cache_key(small.grid, small.gamma, e1, small.beta, HUMConfig(cg_tol=1e-4), small.c0)


def test_cgls_zero_target(small):
    z, hist, aug = cgls(small.prob, np.zeros((2, small.grid.nx - 1, small.grid.ny - 1), complex), 1e-3, 10, 0.0)
    assert not np.any(z)
