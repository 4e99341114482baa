"""Geometry, grids and coefficient fields on a rectangle.

Nodes sit at ``x_i = i*hx`` (``i = 0..nx``) and ``y_j = j*hy``; every grid
field is an array of shape ``(nx + 1, ny + 1)`` indexed ``[i, j]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import CFLError, FrequencyError, GridError, SupportError

DEFAULT_CFL_FACTOR = 0.5
_REL_TOL = 1e-9


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    hx: float
    hy: float
    Lx: float
    Ly: float
    nt: int
    dt: float
    T: float

    def __post_init__(self):
        for name in ("nx", "ny", "nt"):
            if getattr(self, name) <= 0:
                raise GridError(f"{name} must be positive")
        for name in ("hx", "hy", "Lx", "Ly", "dt", "T"):
            if not getattr(self, name) > 0:
                raise GridError(f"{name} must be positive")
        for n, h, L, label in ((self.nx, self.hx, self.Lx, "nx*hx = Lx"),
                               (self.ny, self.hy, self.Ly, "ny*hy = Ly"),
                               (self.nt, self.dt, self.T, "nt*dt = T")):
            if abs(n * h - L) > _REL_TOL * L:
                raise GridError(f"inconsistent grid: {label} violated ({n}*{h!r} != {L!r})")

    @property
    def shape(self):
        return (self.nx + 1, self.ny + 1)

    @property
    def hmin(self):
        return min(self.hx, self.hy)

    @property
    def cell_area(self):
        return self.hx * self.hy

    @cached_property
    def x(self):
        return np.arange(self.nx + 1) * self.hx

    @cached_property
    def y(self):
        return np.arange(self.ny + 1) * self.hy

    @cached_property
    def t(self):
        return np.arange(self.nt + 1) * self.dt

    @cached_property
    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    def max_dt(self, c_min, cfl_factor=DEFAULT_CFL_FACTOR):
        """Largest admissible step; ``c`` multiplies the time derivative so speed is ``1/sqrt(c)``."""
        return cfl_factor * self.hmin * math.sqrt(c_min)

    def check_cfl(self, c_min, cfl_factor=DEFAULT_CFL_FACTOR):
        if c_min <= 0:
            raise CFLError(self.dt, 0.0, "coefficient must be positive for the CFL check")
        limit = self.max_dt(c_min, cfl_factor)
        if self.dt > limit * (1 + 1e-12):
            raise CFLError(self.dt, limit)

    def refined(self, factor=2):
        """Same geometry and final time, spacings and time step divided by ``factor``."""
        return GridSpec(self.nx * factor, self.ny * factor, self.hx / factor, self.hy / factor,
                        self.Lx, self.Ly, self.nt * factor, self.dt / factor, self.T)

    def with_time(self, T):
        nt = max(1, round(T / self.dt))
        return GridSpec(self.nx, self.ny, self.hx, self.hy, self.Lx, self.Ly, nt, T / nt, T)


def build_grid(Lx=1.0, Ly=1.0, nx=64, ny=64, T=4.0, dt=None, *, hx=None, hy=None, nt=None,
               c_min=None, cfl_factor=DEFAULT_CFL_FACTOR, dt_factor=0.4):
    """Build a :class:`GridSpec`.

    ``dt`` defaults to ``dt_factor * min(hx, hy)``; it is then shrunk so that an
    integer number of steps lands exactly on ``T``. Explicit ``hx``/``hy``/``nt``
    are checked for consistency rather than recomputed. When ``c_min`` is given
    the CFL bound is verified here, otherwise it is left to the solver.
    """
    if not (Lx > 0 and Ly > 0 and T > 0) or nx <= 0 or ny <= 0:
        raise GridError("extents, cell counts and T must be positive")
    hx = Lx / nx if hx is None else float(hx)
    hy = Ly / ny if hy is None else float(hy)
    if dt is None:
        dt = dt_factor * min(hx, hy)
    if nt is None:
        nt = math.ceil(T / dt * (1 - 1e-12))
        dt = T / nt
    grid = GridSpec(int(nx), int(ny), hx, hy, float(Lx), float(Ly), int(nt), float(dt), float(T))
    if c_min is not None:
        grid.check_cfl(c_min, cfl_factor)
    return grid


SIDES = ("left", "right", "bottom", "top")
_NORMALS = {"left": (-1.0, 0.0), "right": (1.0, 0.0), "bottom": (0.0, -1.0), "top": (0.0, 1.0)}


def _side_nodes(grid, side):
    nx, ny = grid.nx, grid.ny
    if side == "left":
        return np.zeros(ny + 1, int), np.arange(ny + 1)
    if side == "right":
        return np.full(ny + 1, nx), np.arange(ny + 1)
    if side == "bottom":
        return np.arange(nx + 1), np.zeros(nx + 1, int)
    if side == "top":
        return np.arange(nx + 1), np.full(nx + 1, ny)
    raise GridError(f"unknown side {side!r}; expected one of {SIDES}")


@dataclass(frozen=True)
class BoundaryPartition:
    """Observation/control part Γ of the boundary, given as whole sides.

    Samples are the boundary nodes of each Γ side, corners included; a corner
    shared by two Γ sides appears once per side with that side's normal.
    """

    grid: GridSpec
    gamma_edges: tuple

    def __post_init__(self):
        edges = tuple(self.gamma_edges)
        if not edges:
            raise GridError("Γ must contain at least one side")
        if len(set(edges)) != len(edges):
            raise GridError("Γ sides must be distinct")
        for s in edges:
            if s not in SIDES:
                raise GridError(f"unknown side {s!r}; expected one of {SIDES}")
        object.__setattr__(self, "gamma_edges", edges)

    @cached_property
    def _samples(self):
        ii, jj, nrm, wts, seg = [], [], [], [], []
        for k, side in enumerate(self.gamma_edges):
            i, j = _side_nodes(self.grid, side)
            h = self.grid.hy if side in ("left", "right") else self.grid.hx
            w = np.full(i.size, h)
            w[0] = w[-1] = h / 2
            ii.append(i)
            jj.append(j)
            nrm.append(np.tile(_NORMALS[side], (i.size, 1)))
            wts.append(w)
            seg.append(np.full(i.size, k))
        return (np.concatenate(ii), np.concatenate(jj), np.concatenate(nrm),
                np.concatenate(wts), np.concatenate(seg))

    @property
    def ii(self):
        return self._samples[0]

    @property
    def jj(self):
        return self._samples[1]

    @property
    def normals(self):
        return self._samples[2]

    @property
    def weights(self):
        """Trapezoid arclength weights per sample."""
        return self._samples[3]

    @property
    def segment(self):
        return self._samples[4]

    @property
    def n_samples(self):
        return self.ii.size

    @cached_property
    def coords(self):
        return np.stack([self.grid.x[self.ii], self.grid.y[self.jj]], axis=1)

    @cached_property
    def is_corner(self):
        g = self.grid
        return ((self.ii == 0) | (self.ii == g.nx)) & ((self.jj == 0) | (self.jj == g.ny))

    @cached_property
    def gamma_mask(self):
        m = np.zeros(self.grid.shape, bool)
        m[self.ii, self.jj] = True
        return m

    @cached_property
    def boundary_mask(self):
        m = np.ones(self.grid.shape, bool)
        m[1:-1, 1:-1] = False
        return m

    @property
    def complement_mask(self):
        """Boundary nodes of Γ_c."""
        return self.boundary_mask & ~self.gamma_mask

    @cached_property
    def touches_complement(self):
        """Samples at a corner shared with a Γ_c side."""
        return self.is_corner & np.array(
            [any(s not in self.gamma_edges for s in _corner_sides(self.grid, i, j))
             for i, j in zip(self.ii, self.jj)], bool)

    def to_nodes(self, values):
        """Scatter sample values (``(..., n_samples)``) into a boundary field; zero on Γ_c."""
        values = np.asarray(values)
        out = np.zeros(values.shape[:-1] + self.grid.shape, dtype=np.result_type(values, complex))
        out[..., self.ii, self.jj] = values
        return out

    def from_nodes(self, fieldvals):
        return np.asarray(fieldvals)[..., self.ii, self.jj]

    def integrate(self, values):
        """Trapezoid arclength quadrature over Γ of the last axis."""
        return np.asarray(values) @ self.weights


def _corner_sides(grid, i, j):
    sides = []
    if i == 0:
        sides.append("left")
    if i == grid.nx:
        sides.append("right")
    if j == 0:
        sides.append("bottom")
    if j == grid.ny:
        sides.append("top")
    return sides


@dataclass(frozen=True)
class Subdomain:
    """Inner region Ω′: an axis-aligned rectangle or a disk."""

    kind: str
    center: tuple
    half_width: float = 0.0
    half_height: float = 0.0
    radius: float = 0.0

    @classmethod
    def rectangle(cls, x0, x1, y0, y1):
        return cls("rect", ((x0 + x1) / 2, (y0 + y1) / 2), half_width=(x1 - x0) / 2,
                   half_height=(y1 - y0) / 2)

    @classmethod
    def disk(cls, center, radius):
        return cls("disk", tuple(center), radius=radius)

    def __post_init__(self):
        if self.kind not in ("rect", "disk"):
            raise SupportError(f"unknown subdomain kind {self.kind!r}")
        size = (self.half_width, self.half_height) if self.kind == "rect" else (self.radius,)
        if min(size) <= 0:
            raise SupportError("subdomain must have positive size")

    def mask(self, X, Y, pad=0.0):
        cx, cy = self.center
        if self.kind == "rect":
            return (np.abs(X - cx) <= self.half_width + pad) & (np.abs(Y - cy) <= self.half_height + pad)
        return np.hypot(X - cx, Y - cy) <= self.radius + pad

    def contains_ball(self, center, radius):
        cx, cy = self.center
        px, py = center
        if self.kind == "rect":
            return (abs(px - cx) + radius <= self.half_width + 1e-12
                    and abs(py - cy) + radius <= self.half_height + 1e-12)
        return math.hypot(px - cx, py - cy) + radius <= self.radius + 1e-12

    def distance_to_boundary_of(self, grid):
        """Gap between Ω′ and ∂Ω."""
        cx, cy = self.center
        if self.kind == "rect":
            w, h = self.half_width, self.half_height
        else:
            w = h = self.radius
        return min(cx - w, grid.Lx - cx - w, cy - h, grid.Ly - cy - h)

    @property
    def area(self):
        if self.kind == "rect":
            return 4 * self.half_width * self.half_height
        return math.pi * self.radius ** 2


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """``c_alpha = c0 + alpha * c1`` on the grid, with the exterior constant ``c2`` kept for record."""

    grid: GridSpec
    c0: np.ndarray
    c1: np.ndarray
    alpha: float
    omega_prime: Subdomain
    c2: float = 1.0
    c_star: float | None = None
    M: float = field(init=False)

    def __post_init__(self):
        c0 = np.asarray(self.c0, float)
        c1 = np.asarray(self.c1, float)
        if c0.shape != self.grid.shape or c1.shape != self.grid.shape:
            raise SupportError("c0 and c1 must be grid fields")
        if np.any(c0 <= 0):
            raise SupportError("c0 must be positive")
        X, Y = self.grid.mesh
        inside = self.omega_prime.mask(X, Y)
        if np.any(c1[~inside] != 0):
            raise SupportError("c1 must vanish outside Ω′")
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "c1", c1)
        object.__setattr__(self, "M", float(c1[inside].max()) if inside.any() else 0.0)
        cmin = float(self.calpha.min())
        if self.c_star is None:
            object.__setattr__(self, "c_star", cmin)
        elif cmin < self.c_star:
            raise SupportError(f"c_alpha drops to {cmin:.6g} below c_* = {self.c_star:.6g}")
        if cmin <= 0:
            raise SupportError("c_alpha must stay positive")

    @property
    def calpha(self):
        return self.c0 + self.alpha * self.c1

    def at(self, alpha):
        """The same fields with a different perturbation size; ``c_*`` is re-derived."""
        return CoefficientField(self.grid, self.c0, self.c1, alpha, self.omega_prime, self.c2)

    @property
    def c_min(self):
        return float(min(self.c0.min(), self.calpha.min()))

    @property
    def c_max(self):
        return float(max(self.c0.max(), self.calpha.max()))


def make_bump_c1(grid, center=(0.5, 0.5), radius=0.2, amplitude=1.0, omega_prime=None):
    """Smooth compactly supported bump ``A*exp(1 - 1/(1 - r²/R²))`` for ``r < R``."""
    if radius <= 0:
        raise SupportError("bump radius must be positive")
    if omega_prime is not None and not omega_prime.contains_ball(center, radius):
        raise SupportError("bump support escapes Ω′")
    X, Y = grid.mesh
    s = ((X - center[0]) ** 2 + (Y - center[1]) ** 2) / radius ** 2
    out = np.zeros(grid.shape)
    inside = s < 1
    out[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - s[inside]))
    return out


def bump_function(x, y, center=(0.5, 0.5), radius=0.2, amplitude=1.0):
    """Pointwise evaluation of the bump, for quadrature at arbitrary nodes."""
    s = ((np.asarray(x) - center[0]) ** 2 + (np.asarray(y) - center[1]) ** 2) / radius ** 2
    out = np.zeros(np.broadcast(s).shape)
    inside = s < 1
    out[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - s[inside]))
    return out


def smoothstep5(x):
    """C² smoothstep on [0, 1]; symmetric, ``smoothstep5(0.5) == 0.5``."""
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (10.0 - 15.0 * x + 6.0 * x ** 2)


@dataclass(frozen=True, eq=False)
class CutoffField:
    beta: np.ndarray
    omega_prime: Subdomain
    margin: float


def make_cutoff_beta(grid, omega_prime, margin):
    """β ≡ 1 on Ω′, decaying to 0 over a layer of width ``margin`` outside it."""
    if margin <= 0:
        raise SupportError("margin must be positive")
    if omega_prime.distance_to_boundary_of(grid) <= margin + grid.hmin:
        raise SupportError("Ω′ plus margin does not fit strictly inside Ω")
    X, Y = grid.mesh
    cx, cy = omega_prime.center
    if omega_prime.kind == "rect":
        dx = np.maximum(np.abs(X - cx) - omega_prime.half_width, 0.0)
        dy = np.maximum(np.abs(Y - cy) - omega_prime.half_height, 0.0)
        beta = (1 - smoothstep5(dx / margin)) * (1 - smoothstep5(dy / margin))
    else:
        d = np.maximum(np.hypot(X - cx, Y - cy) - omega_prime.radius, 0.0)
        beta = 1 - smoothstep5(d / margin)
    return CutoffField(beta, omega_prime, margin)


@dataclass(frozen=True)
class FrequencySample:
    eta: tuple

    def __post_init__(self):
        eta = tuple(float(e) for e in self.eta)
        if len(eta) != 2:
            raise FrequencyError("η must be a 2-vector")
        if not math.hypot(*eta) > 0:
            raise FrequencyError("η = 0 is excluded")
        object.__setattr__(self, "eta", eta)

    @property
    def abs_eta(self):
        return math.hypot(*self.eta)

    def phase(self, X, Y):
        return self.eta[0] * X + self.eta[1] * Y

    def phi(self, X, Y):
        return np.exp(1j * self.phase(X, Y))

    def psi(self, X, Y):
        return -1j * self.abs_eta * np.exp(1j * self.phase(X, Y))

    def f(self, X, Y, t):
        return np.exp(1j * (self.phase(X, Y) - self.abs_eta * t))

    def negated(self):
        return FrequencySample((-self.eta[0], -self.eta[1]))
