"""Boundary functionals, Fourier samples of c1 and their inversion.

Sign and scaling conventions
----------------------------
Pairing the auxiliary solution with a null control gives
``∬ g Λ0(v) = -|η|² ∫ c1 e^{2iη·x}`` and, to first order in α,
``∬ (θ X + θ' X') = -α |η|² ∫ c1 e^{2iη·x}`` for ``X = (Λ_α - Λ_0) f``.
The default (``"derived"``) convention divides by ``-α |η|²`` and inverts
with the factor ``1/π^d``. The ``"literal"`` convention keeps the literal
``+α^d |η|²`` scaling and the factor ``2``; it exists for comparison only.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .domain import CoefficientField, FrequencySample, GridSpec, Subdomain, bump_function
from .errors import FrequencyError, ShapeMismatchError
from .storage import atomic_write_bytes
from .theta import ThetaFunction, forcing, solve_theta_ode
from .wave import BoundaryTrace, dtn_difference, solve_veta

D = 2


def time_weights(n_levels, dt):
    w = np.full(n_levels, dt)
    w[0] = w[-1] = dt / 2
    return w


def _values(x):
    return x.values if isinstance(x, BoundaryTrace) else np.asarray(x)


def _pair(a, b, gamma, dt):
    """Trapezoid ``∬_{Γ×(0,T)} a b dσ dt`` (bilinear, no conjugation)."""
    a, b = _values(a), _values(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"trace shapes differ: {a.shape} vs {b.shape}")
    if a.shape[-1] != gamma.n_samples:
        raise ShapeMismatchError("traces are not sampled on Γ")
    tw = time_weights(a.shape[0], dt)
    return complex(np.einsum("t,k,tk->", tw, gamma.weights, a * b))


def boundary_functional_theta(theta: ThetaFunction, dtn_diff, gamma):
    """``∬ [θ X + θ' ∂t X] dσ dt`` with ``∂t X`` by centred differences."""
    dt = theta.theta.dt
    X = _values(dtn_diff)
    Xt = np.gradient(X, dt, axis=0, edge_order=2)
    return _pair(theta.theta, X, gamma, dt) + _pair(theta.theta_t, Xt, gamma, dt)


def boundary_functional_ibp(theta: ThetaFunction, dtn_diff, gamma):
    """Same functional after moving the time derivative onto θ: ``∬ (θ - θ'') X``."""
    dt = theta.theta.dt
    th_tt = np.gradient(theta.theta_t.values, dt, axis=0, edge_order=2)
    return _pair(theta.theta.values - th_tt, dtn_diff, gamma, dt)


def boundary_functional_g(g, dtn_diff, gamma, abs_eta=None):
    """``-∬ (g' - i|η| g) X dσ dt``, the control-only form of the functional."""
    if hasattr(g, "g"):
        if abs_eta is None:
            abs_eta = g.eta.abs_eta
        g = g.g
    dt = g.dt
    return -_pair(forcing(g.values, abs_eta, dt), dtn_diff, gamma, dt)


def fourier_oracle(c1, grid: GridSpec, eta):
    """``∫ c1 e^{2iη·x} dx`` by the 2-D trapezoid rule on the grid."""
    eta = eta.eta if isinstance(eta, FrequencySample) else eta
    X, Y = grid.mesh
    w = np.full(grid.shape, grid.cell_area)
    w[0, :] /= 2
    w[-1, :] /= 2
    w[:, 0] /= 2
    w[:, -1] /= 2
    return complex(np.sum(w * c1 * np.exp(2j * (eta[0] * X + eta[1] * Y))))


def prop31_rhs(eta: FrequencySample, coeff: CoefficientField, convention="derived"):
    sign = -1.0 if convention == "derived" else 1.0
    return sign * eta.abs_eta ** 2 * fourier_oracle(coeff.c1, coeff.grid, eta)


def prop31_check(eta: FrequencySample, coeff: CoefficientField, g, gamma, convention="derived"):
    """``(lhs, rhs)`` with ``lhs = ∬ g Λ0(v_η)`` and ``rhs = ∓|η|² ∫ c1 e^{2iη·x}``."""
    tr, _ = solve_veta(eta, coeff, gamma)
    gv = g.g if hasattr(g, "g") else g
    lhs = _pair(gv, tr, gamma, gv.dt)
    return lhs, prop31_rhs(eta, coeff, convention)


def scaling_factor(alpha, abs_eta, convention="derived", d=D):
    """Leading-order factor relating the functional to ``∫ c1 e^{2iη·x}``."""
    if convention == "derived":
        return -alpha * abs_eta ** 2
    if convention == "literal":
        return alpha ** d * abs_eta ** 2
    raise ValueError(f"unknown convention {convention!r}")


# -- frequency lattices ---------------------------------------------------------------------


@dataclass(frozen=True)
class FrequencyGrid:
    eta_max: float
    d_eta: float
    samples: tuple

    @property
    def etas(self):
        return np.array([s.eta for s in self.samples])

    def __len__(self):
        return len(self.samples)


def build_frequency_grid(eta_max, d_eta, grid: GridSpec | None = None):
    """Symmetric lattice ``d_eta * {-K..K}²`` without the origin."""
    if not (d_eta > 0 and eta_max >= 0):
        raise FrequencyError("need d_eta > 0 and eta_max >= 0")
    K = int(math.floor(eta_max / d_eta + 1e-9))
    if grid is not None and 2 * eta_max >= math.pi / grid.hmin:
        raise FrequencyError(f"2*eta_max = {2 * eta_max:.4g} reaches the Nyquist limit π/h = {math.pi / grid.hmin:.4g}")
    samples = []
    for i in range(-K, K + 1):
        for j in range(-K, K + 1):
            e = (i * d_eta, j * d_eta)
            if math.hypot(*e) < d_eta / 2:
                continue
            samples.append(FrequencySample(e))
    if not samples:
        raise FrequencyError("no admissible frequencies")
    return FrequencyGrid(float(eta_max), float(d_eta), tuple(samples))


def lattice_index(eta, d_eta):
    return (int(round(eta[0] / d_eta)), int(round(eta[1] / d_eta)))


# -- per-frequency samples ------------------------------------------------------------------


@dataclass
class FourierEntry:
    eta_x: float
    eta_y: float
    functional_theta: complex
    functional_g: complex
    F_est: complex
    F_est_g: complex
    oracle: complex
    certified: bool
    residual_energy: float
    iterations: int
    dtn_norm: float
    convention: str = "derived"

    @property
    def eta(self):
        return (self.eta_x, self.eta_y)

    @property
    def form_gap(self):
        den = max(abs(self.functional_theta), abs(self.functional_g))
        return abs(self.functional_theta - self.functional_g) / den if den else 0.0


CSV_FIELDS = ("eta_x", "eta_y", "re_F", "im_F", "re_F_g", "im_F_g", "re_functional_theta",
              "im_functional_theta", "re_functional_g", "im_functional_g", "re_oracle", "im_oracle",
              "form", "certified", "residual_energy", "iterations", "dtn_norm", "convention")


def fourier_sample(eta: FrequencySample, alpha, coeff: CoefficientField, gamma, control, convention="derived",
                   d=D):
    """One Fourier sample of c1 from the DtN difference, the control and its θ."""
    cf = coeff.at(alpha)
    X = dtn_difference(alpha, eta, cf, gamma)
    th = solve_theta_ode(control)
    ft = boundary_functional_theta(th, X, gamma)
    fg = boundary_functional_g(control, X, gamma, eta.abs_eta)
    s = scaling_factor(alpha, eta.abs_eta, convention, d)
    return FourierEntry(eta.eta[0], eta.eta[1], ft, fg, ft / s, fg / s, fourier_oracle(coeff.c1, coeff.grid, eta),
                        bool(control.certified), float(control.residual_energy), int(control.iterations),
                        float(np.sqrt(np.mean(np.abs(X.values) ** 2))), convention)


@dataclass
class FourierSampleSet:
    entries: list = field(default_factory=list)

    def by_index(self, d_eta):
        return {lattice_index(e.eta, d_eta): e for e in self.entries}

    def hermitian_residue(self, d_eta, use_oracle=False):
        """``‖F(-η) - conj F(η)‖ / ‖F‖`` over pairs present in the set."""
        idx = self.by_index(d_eta)
        num = den = 0.0
        for (i, j), e in idx.items():
            m = idx.get((-i, -j))
            if m is None:
                continue
            a, b = (e.oracle, m.oracle) if use_oracle else (e.F_est, m.F_est)
            num += abs(b - np.conj(a)) ** 2
            den += abs(a) ** 2
        return math.sqrt(num / den) if den else 0.0

    def to_csv(self, path):
        """Rows sorted by η; written to a temporary file and renamed into place."""
        fh = io.StringIO(newline="")
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for e in sorted(self.entries, key=lambda e: (e.eta_x, e.eta_y)):
            w.writerow([repr(e.eta_x), repr(e.eta_y), repr(e.F_est.real), repr(e.F_est.imag),
                        repr(e.F_est_g.real), repr(e.F_est_g.imag), repr(e.functional_theta.real),
                        repr(e.functional_theta.imag), repr(e.functional_g.real), repr(e.functional_g.imag),
                        repr(e.oracle.real), repr(e.oracle.imag), "theta", int(e.certified),
                        repr(e.residual_energy), e.iterations, repr(e.dtn_norm), e.convention])
        atomic_write_bytes(path, fh.getvalue().encode())

    @classmethod
    def from_csv(cls, path):
        out = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                out.entries.append(FourierEntry(
                    float(row["eta_x"]), float(row["eta_y"]),
                    complex(float(row["re_functional_theta"]), float(row["im_functional_theta"])),
                    complex(float(row["re_functional_g"]), float(row["im_functional_g"])),
                    complex(float(row["re_F"]), float(row["im_F"])),
                    complex(float(row["re_F_g"]), float(row["im_F_g"])),
                    complex(float(row["re_oracle"]), float(row["im_oracle"])),
                    bool(int(row["certified"])), float(row["residual_energy"]), int(row["iterations"]),
                    float(row["dtn_norm"]), row["convention"]))
        return out


# -- inversion ------------------------------------------------------------------------------


def inversion_constant(convention="derived", alpha=None, d=D):
    """Prefactor of the lattice sum producing c1 from F samples."""
    if convention == "derived":
        return 1.0 / math.pi ** d
    if convention == "literal":
        return 2.0
    raise ValueError(f"unknown convention {convention!r}")


def check_symmetric(etas, d_eta):
    keys = {lattice_index(e, d_eta) for e in etas}
    if any((-i, -j) not in keys for i, j in keys):
        raise FrequencyError("frequency lattice is not closed under η -> -η")
    return keys


def lattice_sum(etas, F, grid: GridSpec, d_eta, constant):
    """``constant * Σ F(η) e^{-2iη·x} dη²`` on the grid nodes (complex)."""
    X, Y = grid.mesh
    etas = np.asarray(etas, float)
    F = np.asarray(F, complex)
    out = np.zeros(grid.shape, complex)
    for chunk in range(0, len(F), 64):
        e = etas[chunk:chunk + 64]
        ph = np.exp(-2j * (e[:, 0, None, None] * X + e[:, 1, None, None] * Y))
        out += np.tensordot(F[chunk:chunk + 64], ph, axes=1)
    return constant * d_eta ** 2 * out


@dataclass(eq=False)
class ReconstructionResult:
    c1_est: np.ndarray
    calpha_est: np.ndarray
    imag_residue: float
    metrics: dict = field(default_factory=dict)
    flagged: bool = False


def invert_fourier(etas, F, grid: GridSpec, d_eta, c0=None, alpha=0.0, convention="derived", imag_tol=0.05):
    """Real-valued c1 estimate from Fourier samples on a symmetric lattice."""
    if len(F) == 0:
        raise FrequencyError("no admissible frequencies")
    check_symmetric(etas, d_eta)
    z = lattice_sum(etas, F, grid, d_eta, inversion_constant(convention))
    re = z.real
    nre = np.linalg.norm(re)
    imag = float(np.linalg.norm(z.imag) / nre) if nre > 0 else float(np.linalg.norm(z.imag) > 0)
    c0 = np.ones(grid.shape) if c0 is None else c0
    res = ReconstructionResult(re, c0 + alpha * re, imag, {"imag_residue": imag})
    res.flagged = imag > imag_tol
    return res


def band_limited_reference(grid: GridSpec, d_eta, eta_max, center=(0.5, 0.5), radius=0.2, amplitude=1.0,
                           n_fft=512, mean_free=True):
    """Band-limited projection of the bump, computed by FFT on one period cell.

    The lattice sum with spacing ``d_eta`` is a Fourier series of period
    ``P = π / d_eta``; this keeps the modes ``|k_i| <= eta_max / d_eta`` (and
    drops ``k = 0`` when ``mean_free``).
    """
    P = math.pi / d_eta
    K = int(math.floor(eta_max / d_eta + 1e-9))
    x0 = center[0] - P / 2
    y0 = center[1] - P / 2
    s = x0 + np.arange(n_fft) * P / n_fft
    t = y0 + np.arange(n_fft) * P / n_fft
    S, Tm = np.meshgrid(s, t, indexing="ij")
    vals = bump_function(S, Tm, center, radius, amplitude)
    coef = np.fft.fft2(vals) / n_fft ** 2  # coef[k] ~ (1/P²) ∫ f e^{-2πi k·(y - y0)/P}
    X, Y = grid.mesh
    out = np.zeros(grid.shape, complex)
    for kx in range(-K, K + 1):
        for ky in range(-K, K + 1):
            if mean_free and kx == 0 and ky == 0:
                continue
            c = coef[kx % n_fft, ky % n_fft]
            out += c * np.exp(2j * math.pi * (kx * (X - x0) + ky * (Y - y0)) / P)
    return out.real


def relative_l2(est, ref, mask):
    den = np.linalg.norm(ref[mask])
    return float(np.linalg.norm((est - ref)[mask]) / den) if den > 0 else float(np.linalg.norm(est[mask]))


def reconstruction_metrics(result: ReconstructionResult, grid: GridSpec, omega_prime: Subdomain, c1_true, d_eta,
                           eta_max, bump=None):
    """Errors against the band-limited mean-free reference and against raw c1."""
    X, Y = grid.mesh
    mask = omega_prime.mask(X, Y)
    bump = bump or {}
    ref = band_limited_reference(grid, d_eta, eta_max, **bump)
    P = math.pi / d_eta
    mean = fourier_oracle(c1_true, grid, (0.0, 0.0)).real / P ** 2
    m = {
        "rel_l2_bandlimited": relative_l2(result.c1_est, ref, mask),
        "rel_l2_raw_meanfree": relative_l2(result.c1_est, c1_true - mean, mask),
        "rel_l2_raw": relative_l2(result.c1_est, c1_true, mask),
        "rel_l2_reference_vs_raw_meanfree": relative_l2(ref, c1_true - mean, mask),
        "imag_residue": result.imag_residue,
    }
    result.metrics.update(m)
    return m, ref


def entries_to_arrays(entries, certified_only=True):
    keep = [e for e in entries if e.certified or not certified_only]
    return np.array([e.eta for e in keep]).reshape(-1, 2), np.array([e.F_est for e in keep], complex)


def entry_dict(e: FourierEntry):
    d = asdict(e)
    for k, v in list(d.items()):
        if isinstance(v, complex):
            d[k] = [v.real, v.imag]
    return d
