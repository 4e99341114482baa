import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavecip.domain import BoundaryPartition, CoefficientField, FrequencySample, build_grid
from wavecip.errors import CFLError, CompatibilityError, ShapeMismatchError
from wavecip.wave import (WaveMovie, dtn_apply, dtn_difference, laplacian, laplacian_transpose, neumann_trace,
                          plane_wave_data, solve_ivbp, solve_veta, staggered_energy)


def plane_wave_error(n, eta=(2 * math.pi, math.pi), T=1.0):
    g = build_grid(1, 1, n, n, T)
    e = FrequencySample(eta)
    phi, psi, f = plane_wave_data(g, e)
    mv = solve_ivbp(g, np.ones(g.shape), phi, psi, f)
    X, Y = g.mesh
    exact = e.f(X, Y, g.t[:, None, None])
    return np.abs(mv.values - exact).max()


def manufactured_error(n, T=1.0):
    g = build_grid(1, 1, n, n, T)
    X, Y = g.mesh
    base = np.sin(np.pi * X) * np.sin(np.pi * Y)
    src = lambda t: (2 * np.pi ** 2 - 1) * base * np.cos(t)
    mv = solve_ivbp(g, np.ones(g.shape), base, np.zeros(g.shape), lambda t: 0 * base, src)
    exact = base[None] * np.cos(g.t)[:, None, None]
    return np.abs(mv.values - exact).max()


def fitted_order(errs):
    return -np.polyfit(np.log([1, 2, 4]), np.log(errs), 1)[0]


def test_plane_wave_second_order():
    errs = [plane_wave_error(n) for n in (16, 32, 64)]
    assert errs[0] > errs[1] > errs[2]
    assert abs(fitted_order(errs) - 2) <= 0.3


def test_manufactured_second_order():
    errs = [manufactured_error(n) for n in (16, 32, 64)]
    assert abs(fitted_order(errs) - 2) <= 0.3


def test_zero_data_zero_movie():
    g = build_grid(1, 1, 16, 16, 1.0)
    z = np.zeros(g.shape)
    mv = solve_ivbp(g, np.ones(g.shape), z, z, None)
    assert not np.any(mv.values)


def test_initial_and_boundary_data_respected():
    g = build_grid(1, 1, 16, 16, 0.5)
    e = FrequencySample((math.pi, 2 * math.pi))
    phi, psi, f = plane_wave_data(g, e)
    mv = solve_ivbp(g, np.ones(g.shape), phi, psi, f)
    assert np.array_equal(mv.values[0], phi)
    bm = np.ones(g.shape, bool)
    bm[1:-1, 1:-1] = False
    for n in range(g.nt + 1):
        assert np.abs(mv.values[n][bm] - f(n * g.dt)[bm]).max() < 1e-13


def test_cfl_and_shape_and_compatibility_errors():
    g = build_grid(1, 1, 16, 16, 1.0)
    one = np.ones(g.shape)
    with pytest.raises(CFLError):
        solve_ivbp(g, 0.2 * one, one, 0 * one, None)
    with pytest.raises(ShapeMismatchError):
        solve_ivbp(g, one, np.ones((3, 3)), 0 * one, None)
    with pytest.raises(CompatibilityError):
        solve_ivbp(g, one, one, 0 * one, lambda t: 0 * one)


def test_neumann_of_linear_field():
    g = build_grid(2, 1, 16, 8, 1.0)
    gam = BoundaryPartition(g, ("right",))
    X, Y = g.mesh
    mv = WaveMovie(g, np.broadcast_to(X, (g.nt + 1,) + g.shape).astype(complex))
    tr = neumann_trace(mv, gam)
    assert np.allclose(tr.values, 1.0, atol=1e-12)
    mv = WaveMovie(g, np.full((g.nt + 1,) + g.shape, 3.0 + 1j))
    assert np.allclose(neumann_trace(mv, gam).values, 0.0, atol=1e-12)


def test_neumann_of_plane_wave_second_order():
    errs = []
    e = FrequencySample((2 * math.pi, math.pi))
    for n in (16, 32, 64):
        g = build_grid(1, 1, n, n, 0.25)
        gam = BoundaryPartition(g, ("right", "top"))
        X, Y = g.mesh
        mv = WaveMovie(g, e.f(X, Y, g.t[:, None, None]))
        tr = neumann_trace(mv, gam)
        xy = gam.coords
        exact = 1j * (gam.normals @ np.array(e.eta)) * e.f(xy[:, 0], xy[:, 1], g.t[:, None])
        errs.append(np.abs(tr.values - exact).max())
    assert abs(fitted_order(errs) - 2) <= 0.3


def test_dtn_background_matches_closed_form():
    g = build_grid(1, 1, 64, 64, 1.0)
    gam = BoundaryPartition(g, ("right", "top"))
    from wavecip.domain import Subdomain, make_bump_c1

    om = Subdomain.rectangle(0.25, 0.75, 0.25, 0.75)
    cf = CoefficientField(g, np.ones(g.shape), make_bump_c1(g, (0.5, 0.5), 0.2, 1.0, om), 0.02, om)
    e = FrequencySample((2 * math.pi, 0.0))
    tr = dtn_apply(0.0, e, cf, gam)
    xy = gam.coords
    exact = 1j * (gam.normals @ np.array(e.eta)) * e.f(xy[:, 0], xy[:, 1], g.t[:, None])
    # one-sided stencil error ~ h² η³ / 3
    assert np.abs(tr.values - exact).max() / e.abs_eta < 1e-2


def test_dtn_difference_zero_without_perturbation(setup32):
    cf = CoefficientField(setup32.grid, setup32.c0, np.zeros(setup32.grid.shape), 0.3, setup32.om)
    d = dtn_difference(0.3, FrequencySample((math.pi, math.pi)), cf, setup32.gamma)
    assert np.abs(d.values).max() <= 1e-10


def test_dtn_difference_linear_in_alpha(setup64, eta_2pi):
    a = np.abs(dtn_difference(0.02, eta_2pi, setup64.coeff, setup64.gamma).values).max()
    b = np.abs(dtn_difference(0.01, eta_2pi, setup64.coeff, setup64.gamma).values).max()
    assert abs(math.log(a / b, 2) - 1) <= 0.15


def test_veta_energy_conserved(setup64, eta_2pi):
    tr, mv = solve_veta(eta_2pi, setup64.coeff, setup64.gamma, energy=True)
    en = mv.energy
    assert en[0] > 0
    assert np.abs(en - en[0]).max() / en[0] <= 1e-3


def test_veta_zero_for_zero_c1(setup32, eta_2pi):
    cf = CoefficientField(setup32.grid, setup32.c0, np.zeros(setup32.grid.shape), 0.02, setup32.om)
    tr, mv = solve_veta(eta_2pi, cf, setup32.gamma, store=True)
    assert not np.any(tr.values) and not np.any(mv.values)


def test_laplacian_transpose_dot():
    rng = np.random.default_rng(0)
    u = rng.standard_normal((9, 7)) + 1j * rng.standard_normal((9, 7))
    m = rng.standard_normal((9, 7))
    a = np.sum(laplacian(u, 0.1, 0.2) * m)
    b = np.sum(u * laplacian_transpose(m, 0.1, 0.2))
    assert abs(a - b) <= 1e-10 * abs(a)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_solver_linearity(seed):
    rng = np.random.default_rng(seed)
    g = build_grid(1, 1, 10, 10, 0.5)
    c = 1 + 0.3 * rng.random(g.shape)

    def data():
        phi = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
        phi[0, :] = phi[-1, :] = phi[:, 0] = phi[:, -1] = 0
        return phi, rng.standard_normal(g.shape) + 0j

    (p1, v1), (p2, v2) = data(), data()
    a = solve_ivbp(g, c, p1, v1, None).values
    b = solve_ivbp(g, c, p2, v2, None).values
    s = solve_ivbp(g, c, p1 + 2 * p2, v1 + 2 * v2, None).values
    assert np.abs(s - a - 2 * b).max() <= 1e-10 * max(1.0, np.abs(s).max())


def test_staggered_energy_exactly_conserved():
    rng = np.random.default_rng(3)
    g = build_grid(1, 1, 12, 12, 2.0)
    c = 1 + rng.random(g.shape)
    phi = np.zeros(g.shape, complex)
    phi[1:-1, 1:-1] = rng.standard_normal((11, 11))
    mv = solve_ivbp(g, c, phi, np.zeros(g.shape), None, energy=True, store=False)
    assert np.abs(mv.energy - mv.energy[0]).max() <= 1e-10 * mv.energy[0]
    assert math.isclose(staggered_energy(*mv.final_levels, c, g), mv.energy[-1], rel_tol=1e-12)
