import math

import numpy as np
import pytest

from wavecip.domain import CoefficientField, FrequencySample, build_grid
from wavecip.errors import FrequencyError, ShapeMismatchError
from wavecip.recon import (FourierEntry, FourierSampleSet, band_limited_reference, boundary_functional_g,
                           boundary_functional_ibp, boundary_functional_theta, build_frequency_grid,
                           fourier_oracle, fourier_sample, inversion_constant, invert_fourier, prop31_check,
                           relative_l2, scaling_factor)
from wavecip.theta import ThetaFunction, solve_theta_ode
from wavecip.wave import BoundaryTrace, dtn_difference


@pytest.fixture(scope="module")
def certified32(setup32):
    eta = FrequencySample((2 * math.pi, 0.0))
    cf = setup32.control(eta.eta, tol=1e-5, max_iters=400)
    X = dtn_difference(0.02, eta, setup32.coeff, setup32.gamma)
    return eta, cf, X, solve_theta_ode(cf)


def test_trivial_functionals(setup32, certified32):
    eta, cf, X, th = certified32
    zero = BoundaryTrace(np.zeros_like(X.values), X.dt)
    assert boundary_functional_theta(th, zero, setup32.gamma) == 0
    zth = ThetaFunction(zero, zero, eta.eta)
    assert boundary_functional_theta(zth, X, setup32.gamma) == 0
    assert boundary_functional_g(zero, X, setup32.gamma, eta.abs_eta) == 0


def test_functional_forms_agree(setup32, certified32):
    eta, cf, X, th = certified32
    ft = boundary_functional_theta(th, X, setup32.gamma)
    fi = boundary_functional_ibp(th, X, setup32.gamma)
    fg = boundary_functional_g(cf, X, setup32.gamma)
    assert abs(ft - fi) <= 0.01 * abs(ft)
    assert abs(ft - fg) <= 0.01 * abs(ft)


def test_functional_grid_mismatch(setup32, certified32):
    eta, cf, X, th = certified32
    with pytest.raises(ShapeMismatchError):
        boundary_functional_theta(th, X.values[:-1], setup32.gamma)


def test_conjugation_symmetry(setup32, certified32):
    # conjugating both traces flips the time phase too, so |η| changes sign in the forcing
    eta, cf, X, th = certified32
    a = boundary_functional_g(cf.g, X, setup32.gamma, eta.abs_eta)
    b = boundary_functional_g(BoundaryTrace(np.conj(cf.g.values), cf.g.dt), np.conj(X.values), setup32.gamma,
                              -eta.abs_eta)
    assert abs(b - np.conj(a)) <= 1e-12 * abs(a)


def test_prop31_zero_c1(setup32, certified32):
    eta, cf, X, th = certified32
    cf0 = CoefficientField(setup32.grid, setup32.c0, np.zeros(setup32.grid.shape), 0.02, setup32.om)
    lhs, rhs = prop31_check(eta, cf0, cf, setup32.gamma)
    assert rhs == 0 and abs(lhs) == 0


def test_fourier_sample_zero_c1(setup32, certified32):
    eta, cf, X, th = certified32
    cf0 = CoefficientField(setup32.grid, setup32.c0, np.zeros(setup32.grid.shape), 0.02, setup32.om)
    e = fourier_sample(eta, 0.02, cf0, setup32.gamma, cf)
    # identical coefficients give identical solves, so the floor 1e-3*M*|Ω′| (M = 0) is met exactly
    assert e.F_est == 0


def test_scaling_and_constants():
    assert scaling_factor(0.02, 3.0) == pytest.approx(-0.02 * 9)
    assert scaling_factor(0.02, 3.0, "literal") == pytest.approx(0.02 ** 2 * 9)
    assert inversion_constant() == pytest.approx(1 / math.pi ** 2)
    assert inversion_constant("literal") == 2.0
    with pytest.raises(ValueError):
        scaling_factor(0.02, 3.0, "other")


def test_frequency_grid_properties():
    g = build_grid(1, 1, 64, 64, 1.0)
    fg = build_frequency_grid(4 * math.pi, math.pi / 2, g)
    assert len(fg) == 17 * 17 - 1
    keys = {(round(a / (math.pi / 2)), round(b / (math.pi / 2))) for a, b in fg.etas}
    assert all((-i, -j) in keys for i, j in keys)
    assert (0, 0) not in keys
    with pytest.raises(FrequencyError, match="no admissible frequencies"):
        build_frequency_grid(0.1, 1.0)
    with pytest.raises(FrequencyError):
        build_frequency_grid(40 * math.pi, math.pi / 2, g)


def lattice_oracle(grid, c1, eta_max, d_eta):
    fg = build_frequency_grid(eta_max, d_eta, grid)
    etas = fg.etas
    return etas, np.array([fourier_oracle(c1, grid, e) for e in etas])


def test_inversion_zero_and_asymmetric(setup64):
    g = setup64.grid
    etas, F = lattice_oracle(g, setup64.c1, math.pi, math.pi / 2)
    z = invert_fourier(etas, np.zeros_like(F), g, math.pi / 2)
    assert not np.any(z.c1_est)
    with pytest.raises(FrequencyError):
        invert_fourier(etas[1:], F[1:], g, math.pi / 2)
    with pytest.raises(FrequencyError):
        invert_fourier(etas[:0], F[:0], g, math.pi / 2)


def test_inversion_reproduces_band_limited_projection(setup64):
    g = setup64.grid
    etas, F = lattice_oracle(g, setup64.c1, 4 * math.pi, math.pi / 2)
    res = invert_fourier(etas, F, g, math.pi / 2)
    ref = band_limited_reference(g, math.pi / 2, 4 * math.pi)
    X, Y = g.mesh
    mask = setup64.om.mask(X, Y)
    assert relative_l2(res.c1_est, ref, mask) <= 0.02
    assert res.imag_residue < 1e-10 and not res.flagged


def test_band_limited_reference_improves_with_bandwidth(setup64):
    g = setup64.grid
    X, Y = g.mesh
    mask = setup64.om.mask(X, Y)
    P = 2.0
    mean = fourier_oracle(setup64.c1, g, (0.0, 0.0)).real / P ** 2
    errs = [relative_l2(band_limited_reference(g, math.pi / 2, em), setup64.c1 - mean, mask)
            for em in (2 * math.pi, 4 * math.pi, 8 * math.pi)]
    assert errs[0] > errs[1] > errs[2]


def test_sample_set_csv_round_trip(tmp_path):
    e = FourierEntry(1.5, -0.5, 1 + 2j, 1.01 + 2j, 0.1 - 0.2j, 0.1 - 0.21j, 0.1 - 0.2j, True, 1e-4, 12, 0.3)
    s = FourierSampleSet([e, FourierEntry(-1.5, 0.5, 1 - 2j, 1 - 2j, 0.1 + 0.2j, 0.1 + 0.2j, 0.1 + 0.2j, False,
                                          2e-3, 200, 0.3)])
    p = tmp_path / "s.csv"
    s.to_csv(p)
    back = FourierSampleSet.from_csv(p)
    assert sorted(back.entries, key=lambda x: x.eta_x) == sorted(s.entries, key=lambda x: x.eta_x)
    assert s.hermitian_residue(0.5) == pytest.approx(0.0, abs=1e-15)
