"""Dirichlet null controls on Γ by the Hilbert Uniqueness Method.

The discrete control-to-final-state map ``L`` (zero initial data, Dirichlet
data ``w(t) z`` on Γ, zero on Γ_c, output = interior of the last two leapfrog
levels) and its exact transpose are compiled with numba. Controls are the
minimal-norm least-squares solution of ``L(w z) = -S(y0)`` in the leapfrog
energy metric, computed by conjugate gradients on the normal equations
(CGLS). Its iterates are ``w Wg^{-1} L^T p`` for adjoint final data ``p``, i.e.
tapered adjoint Neumann traces; the HUM operator is ``p -> L(w Wg^{-1} L^T p)``.
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .domain import BoundaryPartition, CutoffField, FrequencySample, GridSpec, smoothstep5
from .errors import ShapeMismatchError
from .wave import BoundaryTrace, SampledDirichlet, solve_ivbp, staggered_energy

log = logging.getLogger(__name__)


@numba.njit(cache=True)
def _forward_kernel(g, ii, jj, c, hx, hy, dt):
    nt = g.shape[0] - 1
    nx1, ny1 = c.shape
    prev = np.zeros((nx1, ny1), np.complex128)
    cur = np.zeros((nx1, ny1), np.complex128)
    nxt = np.zeros((nx1, ny1), np.complex128)
    ihx2 = 1.0 / (hx * hx)
    ihy2 = 1.0 / (hy * hy)
    for s in range(ii.size):
        prev[ii[s], jj[s]] = g[0, s]
    for i in range(1, nx1 - 1):
        for j in range(1, ny1 - 1):
            lap = ((prev[i + 1, j] - 2 * prev[i, j] + prev[i - 1, j]) * ihx2
                   + (prev[i, j + 1] - 2 * prev[i, j] + prev[i, j - 1]) * ihy2)
            cur[i, j] = prev[i, j] + 0.5 * dt * dt * lap / c[i, j]
    for s in range(ii.size):
        cur[ii[s], jj[s]] = g[1, s]
    for n in range(1, nt):
        for i in range(1, nx1 - 1):
            for j in range(1, ny1 - 1):
                lap = ((cur[i + 1, j] - 2 * cur[i, j] + cur[i - 1, j]) * ihx2
                       + (cur[i, j + 1] - 2 * cur[i, j] + cur[i, j - 1]) * ihy2)
                nxt[i, j] = 2 * cur[i, j] - prev[i, j] + dt * dt * lap / c[i, j]
        for s in range(ii.size):
            nxt[ii[s], jj[s]] = g[n + 1, s]
        tmp = prev
        prev = cur
        cur = nxt
        nxt = tmp
    out = np.empty((2, nx1 - 2, ny1 - 2), np.complex128)
    out[0] = prev[1:-1, 1:-1]
    out[1] = cur[1:-1, 1:-1]
    return out


@numba.njit(cache=True)
def _scatter_lapT(dst, src, scale, c, ihx2, ihy2):
    # dst += Laplacian^T (scale * src / c), src read at interior nodes only
    nx1, ny1 = c.shape
    for i in range(1, nx1 - 1):
        for j in range(1, ny1 - 1):
            m = scale * src[i, j] / c[i, j]
            dst[i, j] -= 2 * m * (ihx2 + ihy2)
            dst[i + 1, j] += m * ihx2
            dst[i - 1, j] += m * ihx2
            dst[i, j + 1] += m * ihy2
            dst[i, j - 1] += m * ihy2


@numba.njit(cache=True)
def _adjoint_kernel(state, ii, jj, c, hx, hy, dt, nt):
    nx1, ny1 = c.shape
    ns = ii.size
    grad = np.zeros((nt + 1, ns), np.complex128)
    l2 = np.zeros((nx1, ny1), np.complex128)
    l1 = np.zeros((nx1, ny1), np.complex128)
    l0 = np.zeros((nx1, ny1), np.complex128)
    l1[1:-1, 1:-1] = state[0]
    l2[1:-1, 1:-1] = state[1]
    ihx2 = 1.0 / (hx * hx)
    ihy2 = 1.0 / (hy * hy)
    dt2 = dt * dt
    for n in range(nt - 1, 0, -1):
        for s in range(ns):
            grad[n + 1, s] = l2[ii[s], jj[s]]
        for i in range(1, nx1 - 1):
            for j in range(1, ny1 - 1):
                l1[i, j] += 2 * l2[i, j]
                l0[i, j] -= l2[i, j]
        _scatter_lapT(l1, l2, dt2, c, ihx2, ihy2)
        tmp = l2
        l2 = l1
        l1 = l0
        l0 = tmp
        l0[:, :] = 0
    for s in range(ns):
        grad[1, s] = l2[ii[s], jj[s]]
    _scatter_lapT(l1, l2, 0.5 * dt2, c, ihx2, ihy2)
    for s in range(ns):
        grad[0, s] = l1[ii[s], jj[s]]
    return grad


def time_taper(grid: GridSpec, fraction=0.05):
    """C¹ weight on the time grid: 0 on the first/last two levels, 1 away from the ends."""
    t = grid.t
    width = max(fraction * grid.T - grid.dt, grid.dt)
    x = (3 * np.clip((t - grid.dt) / width, 0, 1) ** 2 - 2 * np.clip((t - grid.dt) / width, 0, 1) ** 3)
    y = np.clip((grid.T - grid.dt - t) / width, 0, 1)
    y = 3 * y ** 2 - 2 * y ** 3
    return x * y


@dataclass(frozen=True)
class HUMConfig:
    cg_tol: float = 1e-3
    cg_max_iters: int = 200
    epsilon: float = 1e-6
    filter: bool = False
    taper_fraction: float = 0.05

    def __post_init__(self):
        if not self.cg_tol > 0:
            raise ValueError("cg_tol must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.cg_max_iters < 0:
            raise ValueError("cg_max_iters must be nonnegative")


class HUMProblem:
    """Discrete control operators for a fixed grid, Γ and background ``c0``."""

    def __init__(self, grid: GridSpec, gamma: BoundaryPartition, c0, cfg: HUMConfig = HUMConfig()):
        if gamma.grid != grid:
            raise ShapeMismatchError("Γ belongs to another grid")
        c0 = np.asarray(c0, float)
        if c0.shape != grid.shape:
            raise ShapeMismatchError("c0 must be a grid field")
        grid.check_cfl(float(c0.min()))
        self.grid, self.gamma, self.c0, self.cfg = grid, gamma, c0, cfg
        self.ii = gamma.ii.astype(np.int64)
        self.jj = gamma.jj.astype(np.int64)
        w = time_taper(grid, cfg.taper_fraction)
        active = (~gamma.is_corner).astype(float)
        self.weight = w[:, None] * active[None, :]
        tw = np.full(grid.nt + 1, grid.dt)
        tw[0] = tw[-1] = grid.dt / 2
        self.metric = tw[:, None] * gamma.weights[None, :]
        self._ci = c0[1:-1, 1:-1]

    # state space: interior values of the last two levels, shape (2, nx-1, ny-1)
    def apply_Q(self, s):
        """Leapfrog energy metric on final states (zero boundary values)."""
        g = self.grid
        a, b = s[..., 0, :, :], s[..., 1, :, :]
        C = self._ci / g.dt ** 2

        def K(v):
            full = np.zeros(v.shape[:-2] + g.shape, complex)
            full[..., 1:-1, 1:-1] = v
            lap = (full[..., 2:, 1:-1] - 2 * v + full[..., :-2, 1:-1]) / g.hx ** 2 + \
                  (full[..., 1:-1, 2:] - 2 * v + full[..., 1:-1, :-2]) / g.hy ** 2
            return -lap

        qa = C * (a - b) + 0.5 * K(b)
        qb = C * (b - a) + 0.5 * K(a)
        return g.cell_area * np.stack([qa, qb], axis=-3)

    def energy(self, s):
        return np.real(np.sum(np.conj(s) * self.apply_Q(s), axis=(-3, -2, -1)))

    def inner_Q(self, s, r):
        return np.sum(np.conj(r) * self.apply_Q(s), axis=(-3, -2, -1))

    def forward(self, g):
        """``L``: Dirichlet control samples ``(nt+1, n_samples)`` -> final state."""
        g = np.ascontiguousarray(g, complex)
        if g.shape != (self.grid.nt + 1, self.gamma.n_samples):
            raise ShapeMismatchError("control shape does not match Γ × time grid")
        return _forward_kernel(g, self.ii, self.jj, self.c0, self.grid.hx, self.grid.hy, self.grid.dt)

    def transpose(self, s):
        """``L^T`` with respect to plain Euclidean pairings."""
        s = np.ascontiguousarray(s, complex)
        return _adjoint_kernel(s, self.ii, self.jj, self.c0, self.grid.hx, self.grid.hy, self.grid.dt,
                               self.grid.nt)

    def control_from_adjoint(self, p):
        """Tapered adjoint Neumann trace ``w Wg^{-1} L^T p``."""
        return self.weight * self.transpose(p) / self.metric

    def smooth(self, s):
        """One damped-Jacobi pass on each level; symmetric, commutes with the stencil."""
        g = self.grid
        full = np.zeros(s.shape[:-2] + g.shape, complex)
        full[..., 1:-1, 1:-1] = s
        nb = (full[..., 2:, 1:-1] + full[..., :-2, 1:-1] + full[..., 1:-1, 2:] + full[..., 1:-1, :-2]) / 4
        return 0.5 * s + 0.5 * nb

    def hum_operator_apply(self, p):
        """``A p = L(w Wg^{-1} L^T p) + ε p`` on adjoint final data ``p = (p0, p1)``.

        Symmetric and nonnegative for the Euclidean pairing (Hermitian for complex data).
        """
        p = np.asarray(p, complex)
        out = self.forward(self.control_from_adjoint(p))
        return out + self.cfg.epsilon * p

    def free_final_state(self, y0):
        """Interior of the last two levels of the uncontrolled solve from ``(y0, 0)``."""
        g = self.grid
        mv = solve_ivbp(g, self.c0, y0, np.zeros(g.shape, complex), None, store=False)
        prev, cur = mv.final_levels
        e0 = staggered_energy(*mv.initial_levels, self.c0, g)
        return np.stack([prev[1:-1, 1:-1], cur[1:-1, 1:-1]]), float(e0)


@dataclass(eq=False)
class ControlFunction:
    g: BoundaryTrace
    eta: FrequencySample | None
    residual_energy: float
    iterations: int
    regularization: float
    certified: bool
    history: list = field(default_factory=list)
    tol: float = 1e-3


def cgls(prob: HUMProblem, target, tol, max_iters, epsilon):
    """Minimise ``|L(w z) - target|_Q² + ε |z|²_Wg`` by CGLS; returns ``(z, history)``.

    ``history`` holds the relative residual energy after each iteration (entry
    0 is the starting value 1). The augmented residual is nonincreasing.
    """
    Wg, w = prob.metric, prob.weight
    e_target = prob.energy(target)
    z = np.zeros_like(Wg, complex)
    r = target.astype(complex)
    smooth = prob.smooth if prob.cfg.filter else (lambda s: s)

    def normal_dir(r, z):
        return w * prob.transpose(smooth(prob.apply_Q(r))) / Wg - epsilon * z

    s = normal_dir(r, z)
    p = s.copy()
    gamma = np.real(np.sum(np.conj(s) * Wg * s))
    hist = [1.0]
    aug = [1.0]
    for _ in range(max_iters):
        if hist[-1] <= tol or gamma == 0:
            break
        q = prob.forward(w * p)
        delta = prob.energy(q) + epsilon * np.real(np.sum(np.conj(p) * Wg * p))
        if delta <= 0:
            break
        a = gamma / delta
        z = z + a * p
        r = r - a * q
        e = prob.energy(r) / e_target
        hist.append(float(e))
        aug.append(float(e + epsilon * np.real(np.sum(np.conj(z) * Wg * z)) / e_target))
        s = normal_dir(r, z)
        gnew = np.real(np.sum(np.conj(s) * Wg * s))
        p = s + (gnew / gamma) * p
        gamma = gnew
    return z, hist, aug


def solve_control(eta: FrequencySample, beta: CutoffField, prob: HUMProblem, cfg: HUMConfig | None = None):
    """Null control driving ``(β e^{iη·x}, 0)`` to rest at ``T``.

    Certification compares the final leapfrog energy, relative to the initial
    one, against ``cfg.cg_tol``.
    """
    cfg = cfg or prob.cfg
    grid = prob.grid
    X, Y = grid.mesh
    y0 = beta.beta * (eta.phi(X, Y) if eta is not None else 1.0)
    free, e0 = prob.free_final_state(y0)
    shape = (grid.nt + 1, prob.gamma.n_samples)
    if e0 == 0.0:
        g = BoundaryTrace(np.zeros(shape, complex), grid.dt, "control", eta and eta.eta)
        return ControlFunction(g, eta, 0.0, 0, cfg.epsilon, True, [0.0], cfg.cg_tol)
    scale = 1.0 / math.sqrt(e0)
    z, hist, aug = cgls(prob, -free * scale, cfg.cg_tol, cfg.cg_max_iters, cfg.epsilon)
    g = prob.weight * z / scale
    # relative to E(0) of the actual initial state, not of the free final state
    res = hist[-1] * prob.energy(free) / e0
    trace = BoundaryTrace(g, grid.dt, "control", eta and eta.eta)
    trace.meta["augmented_history"] = aug
    cf = ControlFunction(trace, eta, float(res), len(hist) - 1, cfg.epsilon, bool(res <= cfg.cg_tol), hist,
                         cfg.cg_tol)
    log.info("control η=%s: %d iterations, E(T)/E(0)=%.3e, certified=%s", eta and eta.eta, cf.iterations,
             res, cf.certified)
    return cf


def verify_null_control(control: ControlFunction, eta: FrequencySample | None, beta: CutoffField,
                        gamma: BoundaryPartition, c0):
    """Re-simulate the controlled problem with the plain solver and return ``E(T)/E(0)``."""
    grid = gamma.grid
    X, Y = grid.mesh
    y0 = beta.beta * (eta.phi(X, Y) if eta is not None else 1.0)
    f = SampledDirichlet(gamma, control.g.values)
    mv = solve_ivbp(grid, c0, y0, np.zeros(grid.shape, complex), f, store=False)
    e0 = staggered_energy(*mv.initial_levels, c0, grid)
    eT = staggered_energy(*mv.final_levels, c0, grid)
    if e0 == 0:
        return 0.0
    return float(eT / e0)


def control_cache_key(grid: GridSpec, gamma: BoundaryPartition, eta: FrequencySample, beta: CutoffField,
                      cfg: HUMConfig, c0=None):
    h = hashlib.sha256()
    h.update(repr((grid, gamma.gamma_edges, eta.eta if eta else None, cfg)).encode())
    h.update(np.ascontiguousarray(beta.beta).tobytes())
    if c0 is not None:
        h.update(np.ascontiguousarray(c0, float).tobytes())
    return h.hexdigest()[:32]
