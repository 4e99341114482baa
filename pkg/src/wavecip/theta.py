"""Weights θ_η on Γ × (0, T) built from a null control g_η.

Two routes: the mixed two-point problem ``θ'' - θ = g' - i|η| g``,
``θ(0) = 0``, ``θ'(T) = 0`` solved with its exact Green's function, and the
integro-differential (Volterra) form solved on the time grid. The second
exists only to cross-check the first.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.integrate import cumulative_trapezoid

from .errors import ShapeMismatchError
from .wave import BoundaryTrace


@dataclass(eq=False)
class ThetaFunction:
    theta: BoundaryTrace
    theta_t: BoundaryTrace
    eta: tuple | None
    method: str = "green"


def _unpack(g, abs_eta, dt):
    """Accept a ControlFunction, a BoundaryTrace or a bare array."""
    eta = None
    if hasattr(g, "g"):  # ControlFunction
        eta = g.eta.eta if g.eta is not None else None
        if abs_eta is None and g.eta is not None:
            abs_eta = g.eta.abs_eta
        g = g.g
    if isinstance(g, BoundaryTrace):
        if dt is not None and abs(dt - g.dt) > 1e-12 * dt:
            raise ShapeMismatchError(f"control sampled with dt={g.dt}, expected {dt}")
        dt = g.dt
        eta = eta if eta is not None else g.eta
        g = g.values
    if dt is None:
        raise ShapeMismatchError("time step unknown; pass dt")
    if abs_eta is None:
        abs_eta = 0.0 if eta is None else float(np.hypot(*eta))
    g = np.asarray(g, complex)
    if g.ndim == 1:
        g = g[:, None]
    if g.shape[0] < 3:
        raise ShapeMismatchError("need at least three time levels")
    return g, float(abs_eta), float(dt), eta


def forcing(g, abs_eta, dt):
    """``e^{i|η|t} ∂t(e^{-i|η|t} g) = g' - i|η| g`` with second-order differences."""
    return np.gradient(g, dt, axis=0, edge_order=2) - 1j * abs_eta * g


def solve_theta_ode(g, abs_eta=None, dt=None, nt=None):
    """θ and θ' from the Green's function of ``d²/dt² - 1`` with θ(0) = 0, θ'(T) = 0.

    With ``A(t) = ∫₀ᵗ sinh(s) h ds`` and ``B(t) = ∫ₜᵀ cosh(T-s) h ds``::

        θ(t)  = -[cosh(T-t) A(t) + sinh(t) B(t)] / cosh(T)
        θ'(t) = -[-sinh(T-t) A(t) + cosh(t) B(t)] / cosh(T)

    Integrals are cumulative trapezoid sums, independently per Γ sample.
    """
    gv, k, dt, eta = _unpack(g, abs_eta, dt)
    if nt is not None and gv.shape[0] != nt + 1:
        raise ShapeMismatchError(f"control has {gv.shape[0]} time levels, grid has {nt + 1}")
    t = np.arange(gv.shape[0]) * dt
    T = t[-1]
    h = forcing(gv, k, dt)
    A = cumulative_trapezoid(np.sinh(t)[:, None] * h, dx=dt, axis=0, initial=0)
    Cc = cumulative_trapezoid(np.cosh(T - t)[:, None] * h, dx=dt, axis=0, initial=0)
    B = Cc[-1] - Cc
    ch = np.cosh(T)
    theta = -(np.cosh(T - t)[:, None] * A + np.sinh(t)[:, None] * B) / ch
    theta_t = -(-np.sinh(T - t)[:, None] * A + np.cosh(t)[:, None] * B) / ch
    theta[0] = 0.0
    theta_t[-1] = 0.0
    return ThetaFunction(BoundaryTrace(theta, dt, "theta", eta), BoundaryTrace(theta_t, dt, "theta_t", eta), eta)


def volterra_matrices(n_levels, dt, abs_eta):
    """Dense operators of the discretised integral equation in the unknown φ = θ'.

    ``C`` integrates φ from 0 (trapezoid, so θ(0) = 0), ``K`` is the trapezoid
    quadrature of ``∫ₜᵀ e^{-i|η|(s-t)} (·)(s) ds`` row by row.
    """
    N = n_levels - 1
    t = np.arange(n_levels) * dt
    C = np.tril(np.full((n_levels, n_levels), dt))
    C[:, 0] = dt / 2
    C[np.arange(n_levels), np.arange(n_levels)] = dt / 2
    C[0] = 0.0
    W = np.triu(np.full((n_levels, n_levels), dt))
    W[np.arange(n_levels), np.arange(n_levels)] = dt / 2
    W[:, N] = dt / 2
    W[N, N] = 0.0
    kern = np.exp(-1j * abs_eta * (t[None, :] - t[:, None]))
    K = W * kern
    return C, K


def solve_theta_volterra(g, abs_eta=None, dt=None, method="auto", max_fixed_point=60, fp_tol=1e-12):
    """θ from ``θ'(t) + ∫ₜᵀ e^{-i|η|(s-t)} (θ - i|η| θ')(s) ds = g(t)``, ``θ(0) = 0``.

    Unknown is φ = θ' on the time grid with θ = ∫₀ᵗ φ. ``method`` is
    ``"fixed-point"``, ``"dense"`` or ``"auto"`` (fixed point, falling back to a
    dense LU solve when the iteration does not contract).
    """
    gv, k, dt, eta = _unpack(g, abs_eta, dt)
    n = gv.shape[0]
    C, K = volterra_matrices(n, dt, k)
    M = K @ (C - 1j * k * np.eye(n))
    used = "dense"
    phi = None
    if method in ("auto", "fixed-point"):
        phi = gv.copy()
        ok = False
        for _ in range(max_fixed_point):
            nxt = gv - M @ phi
            step = np.abs(nxt - phi).max()
            phi = nxt
            if not np.isfinite(step):
                break
            if step <= fp_tol * max(1.0, np.abs(phi).max()):
                ok = True
                break
        if ok:
            used = "fixed-point"
        elif method == "fixed-point":
            raise RuntimeError("fixed-point iteration for θ did not converge")
        else:
            phi = None
    if phi is None:
        phi = scipy.linalg.lu_solve(scipy.linalg.lu_factor(np.eye(n) + M), gv)
    theta = C @ phi
    return ThetaFunction(BoundaryTrace(theta, dt, "theta", eta), BoundaryTrace(phi, dt, "theta_t", eta), eta,
                         used)


def ode_residual(theta: ThetaFunction, g, abs_eta=None):
    """Discrete ``θ'' - θ - h`` (interior levels), θ'' by centred differences of θ."""
    gv, k, dt, _ = _unpack(g, abs_eta, theta.theta.dt)
    th = theta.theta.values
    h = forcing(gv, k, dt)
    tt = (th[2:] - 2 * th[1:-1] + th[:-2]) / dt ** 2
    return tt - th[1:-1] - h[1:-1]
