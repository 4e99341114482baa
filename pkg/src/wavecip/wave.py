"""Explicit leapfrog solver for ``c u_tt = Δu + s`` with Dirichlet data.

Everything is complex and accepts leading batch dimensions in front of the
``(nx + 1, ny + 1)`` grid axes, so several right-hand sides can share one
time loop.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import DEFAULT_CFL_FACTOR, BoundaryPartition, CoefficientField, FrequencySample, GridSpec
from .errors import CompatibilityError, ShapeMismatchError

COMPAT_TOL = 1e-8


def laplacian(u, hx, hy):
    """5-point Laplacian at interior nodes; boundary entries are zero."""
    out = np.zeros_like(u)
    c = u[..., 1:-1, 1:-1]
    out[..., 1:-1, 1:-1] = ((u[..., 2:, 1:-1] - 2 * c + u[..., :-2, 1:-1]) / hx ** 2
                            + (u[..., 1:-1, 2:] - 2 * c + u[..., 1:-1, :-2]) / hy ** 2)
    return out


def laplacian_transpose(m, hx, hy):
    """Transpose of :func:`laplacian` viewed as a map from full grid to interior.

    ``m`` is read only at interior nodes. Boundary entries of the result pick up
    the coupling of each boundary node to its interior neighbour.
    """
    mi = np.zeros_like(m)
    mi[..., 1:-1, 1:-1] = m[..., 1:-1, 1:-1]
    out = laplacian(mi, hx, hy)
    out[..., 0, 1:-1] = mi[..., 1, 1:-1] / hx ** 2
    out[..., -1, 1:-1] = mi[..., -2, 1:-1] / hx ** 2
    out[..., 1:-1, 0] = mi[..., 1:-1, 1] / hy ** 2
    out[..., 1:-1, -1] = mi[..., 1:-1, -2] / hy ** 2
    return out


def neumann_field(u, gamma: BoundaryPartition):
    """Outward normal derivative at the Γ samples of one or more grid fields.

    Second-order one-sided difference along the inward normal, sign flipped.
    """
    g = gamma.grid
    out = np.empty(u.shape[:-2] + (gamma.n_samples,), dtype=np.result_type(u, float))
    for k, side in enumerate(gamma.gamma_edges):
        sel = gamma.segment == k
        if side == "left":
            a, b, c, h = u[..., 0, :], u[..., 1, :], u[..., 2, :], g.hx
        elif side == "right":
            a, b, c, h = u[..., -1, :], u[..., -2, :], u[..., -3, :], g.hx
        elif side == "bottom":
            a, b, c, h = u[..., :, 0], u[..., :, 1], u[..., :, 2], g.hy
        else:
            a, b, c, h = u[..., :, -1], u[..., :, -2], u[..., :, -3], g.hy
        out[..., sel] = (3 * a - 4 * b + c) / (2 * h)
    return out


def staggered_energy(u_old, u_new, c, grid: GridSpec):
    """Leapfrog energy at the half step between two levels.

    ``Σ c |u_new - u_old|²/dt² + Re Σ_edges ∇u_new · conj(∇u_old)`` weighted by the
    cell area; velocities over interior nodes, gradients over the edges the
    5-point stencil touches. Exactly conserved by the scheme when the Dirichlet
    data vanish and there is no source.
    """
    hx, hy, dt = grid.hx, grid.hy, grid.dt
    v = (u_new - u_old)[..., 1:-1, 1:-1] / dt
    kin = np.sum(c[1:-1, 1:-1] * np.abs(v) ** 2, axis=(-2, -1))
    ax = (u_new[..., 1:, 1:-1] - u_new[..., :-1, 1:-1]) * np.conj(u_old[..., 1:, 1:-1] - u_old[..., :-1, 1:-1])
    ay = (u_new[..., 1:-1, 1:] - u_new[..., 1:-1, :-1]) * np.conj(u_old[..., 1:-1, 1:] - u_old[..., 1:-1, :-1])
    pot = np.real(np.sum(ax, axis=(-2, -1))) / hx ** 2 + np.real(np.sum(ay, axis=(-2, -1))) / hy ** 2
    return hx * hy * (kin + pot)


@dataclass(eq=False)
class WaveMovie:
    """Space-time solution; ``values`` is ``(nt + 1, ..., nx + 1, ny + 1)`` or ``None`` when streamed."""

    grid: GridSpec
    values: np.ndarray | None
    family: str = "ivbp"
    final_levels: tuple = ()
    initial_levels: tuple = ()
    energy: np.ndarray | None = None


@dataclass(eq=False)
class BoundaryTrace:
    """Complex samples on Γ × time grid, ``values[n, ..., k]``."""

    values: np.ndarray
    dt: float
    quantity: str = "neumann"
    eta: tuple | None = None
    alpha: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def nt(self):
        return self.values.shape[0] - 1

    @property
    def n_samples(self):
        return self.values.shape[-1]

    def __sub__(self, other):
        if self.values.shape != other.values.shape:
            raise ShapeMismatchError("trace shapes differ")
        return BoundaryTrace(self.values - other.values, self.dt, "dtn_difference", self.eta,
                             self.alpha, dict(self.meta))


class SampledDirichlet:
    """Dirichlet data given as Γ samples per time step; zero on Γ_c."""

    def __init__(self, gamma: BoundaryPartition, values):
        self.gamma = gamma
        self.values = np.asarray(values)
        if self.values.shape[0] != gamma.grid.nt + 1 or self.values.shape[-1] != gamma.n_samples:
            raise ShapeMismatchError("sampled Dirichlet data do not match Γ × time grid")

    def __call__(self, t):
        n = int(round(t / self.gamma.grid.dt))
        return self.gamma.to_nodes(self.values[n])


def _as_data(f, grid):
    if f is None:
        return None
    if callable(f):
        return f
    arr = np.asarray(f)
    if arr.shape[0] != grid.nt + 1 or arr.shape[-2:] != grid.shape:
        raise ShapeMismatchError(f"Dirichlet array shape {arr.shape} does not match grid/time axis")
    return lambda t: arr[int(round(t / grid.dt))]


def _check_field(name, a, grid):
    a = np.asarray(a)
    if a.shape[-2:] != grid.shape:
        raise ShapeMismatchError(f"{name} has shape {a.shape}, grid needs (..., {grid.shape[0]}, {grid.shape[1]})")
    return a


def solve_ivbp(grid: GridSpec, c, phi, psi, f=None, source=None, *, gamma=None, store=True,
               energy=False, cfl_factor=DEFAULT_CFL_FACTOR, family="ivbp"):
    """Solve ``c u_tt = Δu + source`` on Ω × (0, T), ``u = f`` on ∂Ω.

    The first step is the Taylor start ``u¹ = φ + dt ψ + dt²/2 (Δφ + s(0))/c``.
    ``f`` and ``source`` are callables of ``t`` returning grid fields (only the
    boundary part of ``f`` is read) or arrays with a leading time axis.
    With ``gamma`` the Neumann trace on Γ is recorded every step and returned
    as a second value; ``store=False`` keeps only three time levels.
    """
    c = _check_field("c", c, grid)
    if c.ndim != 2:
        raise ShapeMismatchError("c must be a single grid field")
    grid.check_cfl(float(c.min()), cfl_factor)
    phi = _check_field("phi", phi, grid).astype(complex)
    psi = _check_field("psi", psi, grid).astype(complex)
    batch = np.broadcast_shapes(phi.shape, psi.shape)
    fd = _as_data(f, grid)
    sd = _as_data(source, grid)
    hx, hy, dt, nt = grid.hx, grid.hy, grid.dt, grid.nt
    bmask = np.ones(grid.shape, bool)
    bmask[1:-1, 1:-1] = False

    def bc(u, t):
        u[..., bmask] = 0 if fd is None else np.broadcast_to(fd(t), u.shape)[..., bmask]

    u0 = np.array(np.broadcast_to(phi, batch))
    if fd is not None:
        f0 = np.broadcast_to(fd(0.0), batch)
        scale = max(1.0, float(np.abs(u0).max()))
        if np.abs(f0[..., bmask] - u0[..., bmask]).max(initial=0.0) > COMPAT_TOL * scale:
            raise CompatibilityError("Dirichlet data at t=0 disagree with the initial value on ∂Ω")
    bc(u0, 0.0)
    acc = laplacian(u0, hx, hy)
    if sd is not None:
        acc = acc + sd(0.0)
    u1 = u0 + dt * np.broadcast_to(psi, batch) + 0.5 * dt ** 2 * acc / c
    bc(u1, dt)

    values = None
    if store:
        values = np.empty((nt + 1,) + batch, complex)
        values[0], values[1] = u0, u1
    traces = None
    if gamma is not None:
        traces = np.empty((nt + 1,) + batch[:-2] + (gamma.n_samples,), complex)
        traces[0], traces[1] = neumann_field(u0, gamma), neumann_field(u1, gamma)
    en = None
    if energy:
        en = np.empty((nt,) + batch[:-2])
        en[0] = staggered_energy(u0, u1, c, grid)
    initial = (u0.copy(), u1.copy())

    dt2c = dt ** 2 / c
    prev, cur = u0, u1
    for n in range(1, nt):
        t = n * dt
        acc = laplacian(cur, hx, hy)
        if sd is not None:
            acc += sd(t)
        nxt = 2 * cur - prev + dt2c * acc
        bc(nxt, t + dt)
        prev, cur = cur, nxt
        if store:
            values[n + 1] = cur
        if traces is not None:
            traces[n + 1] = neumann_field(cur, gamma)
        if energy:
            en[n] = staggered_energy(prev, cur, c, grid)
    movie = WaveMovie(grid, values, family, (prev, cur), initial, en)
    if gamma is not None:
        return movie, BoundaryTrace(traces, dt)
    return movie


def neumann_trace(movie: WaveMovie, gamma: BoundaryPartition, quantity="neumann"):
    """Γ Neumann trace of every stored level of a movie."""
    if movie.values is None:
        raise ShapeMismatchError("movie was streamed; request store=True or pass gamma to the solve")
    if movie.grid != gamma.grid:
        raise ShapeMismatchError("movie and Γ live on different grids")
    return BoundaryTrace(neumann_field(movie.values, gamma), movie.grid.dt, quantity)


def plane_wave_data(grid: GridSpec, eta: FrequencySample):
    """Initial value, velocity and Dirichlet data of the η plane wave."""
    X, Y = grid.mesh
    phi = eta.phi(X, Y)
    psi = eta.psi(X, Y)
    k = eta.abs_eta
    return phi, psi, (lambda t: phi * np.exp(-1j * k * t))


def dtn_apply(alpha, eta: FrequencySample, coeff: CoefficientField, gamma: BoundaryPartition, **kw):
    """Neumann trace on Γ of the IBVP with ``c = c0 + alpha c1`` and plane-wave data."""
    grid = coeff.grid
    phi, psi, f = plane_wave_data(grid, eta)
    c = coeff.c0 + alpha * coeff.c1
    _, tr = solve_ivbp(grid, c, phi, psi, f, gamma=gamma, store=False, **kw)
    tr.quantity, tr.eta, tr.alpha = "neumann", eta.eta, float(alpha)
    return tr


def dtn_difference(alpha, eta, coeff, gamma, **kw):
    """``(Λ_α - Λ_0)`` applied to the plane-wave Dirichlet data, sampled on Γ."""
    d = dtn_apply(alpha, eta, coeff, gamma, **kw) - dtn_apply(0.0, eta, coeff, gamma, **kw)
    d.alpha = float(alpha)
    return d


def veta_initial_velocity(grid: GridSpec, eta: FrequencySample, c1):
    """``i ∇·(η c1 e^{iη·x})`` by centred differences of the analytic integrand."""
    X, Y = grid.mesh
    e = np.exp(1j * eta.phase(X, Y)) * c1
    fx, fy = eta.eta[0] * e, eta.eta[1] * e
    out = np.zeros(grid.shape, complex)
    out[1:-1, 1:-1] = ((fx[2:, 1:-1] - fx[:-2, 1:-1]) / (2 * grid.hx)
                       + (fy[1:-1, 2:] - fy[1:-1, :-2]) / (2 * grid.hy))
    return 1j * out


def solve_veta(eta: FrequencySample, coeff: CoefficientField, gamma: BoundaryPartition, *, energy=False,
               store=False, **kw):
    """Neumann trace of the auxiliary problem with zero data and velocity ``i∇·(ηc1e^{iη·x})``.

    Returns ``(trace, movie)``.
    """
    grid = coeff.grid
    v1 = veta_initial_velocity(grid, eta, coeff.c1)
    movie, tr = solve_ivbp(grid, coeff.c0, np.zeros(grid.shape, complex), v1, None, gamma=gamma,
                           store=store, energy=energy, family="veta", **kw)
    tr.quantity, tr.eta = "veta_neumann", eta.eta
    return tr, movie


def perturbation_sup_norm(alpha, eta: FrequencySample, coeff: CoefficientField, **kw):
    """``max_t ‖u_α(t) - u(t)‖_{L²(Ω)}`` for the plane-wave data (node quadrature)."""
    grid = coeff.grid
    phi, psi, f = plane_wave_data(grid, eta)
    ua = solve_ivbp(grid, coeff.c0 + alpha * coeff.c1, phi, psi, f, **kw)
    u0 = solve_ivbp(grid, coeff.c0, phi, psi, f, **kw)
    d = ua.values - u0.values
    return float(np.sqrt(grid.cell_area * (np.abs(d) ** 2).sum(axis=(-2, -1))).max())
