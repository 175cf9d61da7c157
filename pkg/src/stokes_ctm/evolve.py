"""Modal evolution of the Stokes semigroup and of the wave system with pressure.

Forcing is piecewise linear in time on a declared grid, and every Duhamel
integral is evaluated exactly for that interpolant (exponential / trigonometric
integrators).  A small implicit MAC time stepper serves as an independent
cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import ControlMask, DomainSpec
from .errors import AdmissibilityError, ConvergenceError, GridError
from .stokesop import StokesModes, operators


@dataclass(frozen=True)
class StokesState:
    t: float
    velocity: np.ndarray
    pressure: np.ndarray | None = None


@dataclass(frozen=True)
class WaveState:
    t: float
    u: np.ndarray
    ut: np.ndarray


# -- exact interval weights ----------------------------------------------------
def _series(z, coef_fn, nterms=10):
    out = np.zeros_like(z)
    for n in range(nterms):
        out += coef_fn(n) * z**n
    return out


def heat_interval_weights(lam, h):
    """Weights of a linear forcing over one interval of length ``h``.

    Returns ``(decay, w_left, w_right)`` with
    ``x(h) = decay*x(0) + w_left*f(0) + w_right*f(h)`` for ``x' = -lam x + f``.
    """
    lam = np.asarray(lam, dtype=float)
    z = lam * h
    small = z < 0.05
    zs = np.where(small, z, 1.0)
    zl = np.where(small, 1.0, z)
    phi1 = np.where(small, _series(zs, lambda n: (-1) ** n / math.factorial(n + 1)),
                    -np.expm1(-zl) / zl)
    phi2 = np.where(small, _series(zs, lambda n: (-1) ** n * (n + 1) / math.factorial(n + 2)),
                    (1.0 - np.exp(-zl) * (1.0 + zl)) / zl**2)
    w_left = h * phi2
    w_right = h * phi1 - w_left
    return np.exp(-z), w_left, w_right


def wave_interval_weights(omega, h):
    """Propagator and linear-forcing weights for ``x'' = -omega^2 x + f``.

    Returns ``(c, s, p_left, p_right, v_left, v_right)``: over one interval
    ``x1 = c x0 + s/omega v0 + p_left f0 + p_right f1`` and
    ``v1 = -omega s x0 + c v0 + v_left f0 + v_right f1``.
    """
    w = np.asarray(omega, dtype=float)
    th = w * h
    c, s = np.cos(th), np.sin(th)
    small = th < 0.05
    ws = np.where(small, w, 1.0)
    # integrals over sigma in [0, h] of sin(w s), s sin(w s), s cos(w s)
    k = np.arange(8)[:, None]
    fact = np.array([math.factorial(2 * i + 1) for i in range(8)], dtype=float)[:, None]
    facte = np.array([math.factorial(2 * i) for i in range(8)], dtype=float)[:, None]
    sgn = (-1.0) ** k
    Is0_s = np.sum(sgn * ws ** (2 * k + 1) * h ** (2 * k + 2) / (fact * (2 * k + 2)), axis=0)
    Is1_s = np.sum(sgn * ws ** (2 * k + 1) * h ** (2 * k + 3) / (fact * (2 * k + 3)), axis=0)
    Ic1_s = np.sum(sgn * ws ** (2 * k) * h ** (2 * k + 2) / (facte * (2 * k + 2)), axis=0)
    Is0 = np.where(small, Is0_s, (1.0 - c) / w)
    Is1 = np.where(small, Is1_s, (s - th * c) / w**2)
    Ic1 = np.where(small, Ic1_s, (c + th * s - 1.0) / w**2)
    Ic0 = s / w
    p_left = Is1 / (h * w)
    p_right = (Is0 - Is1 / h) / w
    v_left = Ic1 / h
    v_right = Ic0 - Ic1 / h
    return c, s, p_left, p_right, v_left, v_right


# -- modal integrators ---------------------------------------------------------
def _check_grid(times, fhat, t):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0):
        raise GridError("forcing grid must be strictly increasing with >= 2 nodes")
    if fhat.shape[0] != times.size:
        raise GridError(f"forcing has {fhat.shape[0]} samples for {times.size} grid nodes")
    if times[0] != 0.0 or t > times[-1] * (1 + 1e-12):
        raise GridError("forcing grid must start at 0 and cover [0, t]")
    return times


def _segments(times, t):
    """Yield (k, h, theta) covering [0, t]; theta=1 for full intervals."""
    for k in range(times.size - 1):
        a, b = times[k], times[k + 1]
        if a >= t:
            break
        if b <= t * (1 + 1e-14):
            yield k, b - a, 1.0
        else:
            yield k, t - a, (t - a) / (b - a)
            break


def heat_modal(lam, x0, t, times=None, fhat=None, trajectory=False):
    """Coefficients of x' = -lam x + fhat(t) at t (or at every grid node).

    ``fhat`` has shape ``(n_nodes, M)`` (modal forcing at grid nodes).
    """
    lam = np.asarray(lam, dtype=float)
    x = np.array(x0, dtype=float)
    if t < 0:
        raise AdmissibilityError("parabolic evolution needs t >= 0")
    if fhat is None:
        if trajectory:
            times = np.asarray(times, dtype=float)
            return np.exp(-np.outer(times, lam)) * x
        return np.exp(-lam * t) * x
    fhat = np.asarray(fhat, dtype=float)
    times = _check_grid(times, fhat, t)
    traj = [x.copy()] if trajectory else None
    for k, h, frac in _segments(times, t):
        f_end = fhat[k] + frac * (fhat[k + 1] - fhat[k])
        dec, wl, wr = heat_interval_weights(lam, h)
        x = dec * x + wl * fhat[k] + wr * f_end
        if trajectory:
            traj.append(x.copy())
    return np.array(traj) if trajectory else x


def wave_modal(omega, x0, v0, t, times=None, fhat=None, trajectory=False):
    """Position/velocity coefficients of x'' = -omega^2 x + fhat(t)."""
    w = np.asarray(omega, dtype=float)
    x, v = np.array(x0, dtype=float), np.array(v0, dtype=float)
    if fhat is None:
        if trajectory:
            tt = np.asarray(times, dtype=float)[:, None]
            c, s = np.cos(tt * w), np.sin(tt * w)
            return c * x + s / w * v, -w * s * x + c * v
        c, s = np.cos(w * t), np.sin(w * t)
        return c * x + s / w * v, -w * s * x + c * v
    if t < 0:
        raise AdmissibilityError("forced wave evolution needs t >= 0")
    fhat = np.asarray(fhat, dtype=float)
    times = _check_grid(times, fhat, t)
    xs, vs = ([x.copy()], [v.copy()]) if trajectory else (None, None)
    cache = {}
    for k, h, frac in _segments(times, t):
        f_end = fhat[k] + frac * (fhat[k + 1] - fhat[k])
        key = round(h, 15)
        if key not in cache:
            cache[key] = wave_interval_weights(w, h)
        c, s, pl, pr, vl, vr = cache[key]
        x, v = (c * x + s / w * v + pl * fhat[k] + pr * f_end,
                -w * s * x + c * v + vl * fhat[k] + vr * f_end)
        if trajectory:
            xs.append(x.copy())
            vs.append(v.copy())
    if trajectory:
        return np.array(xs), np.array(vs)
    return x, v


def _modal_forcing(modes: StokesModes, forcing, mask: ControlMask | None):
    """Project node-sampled fields (n_faces, n_nodes) onto modes as (n_nodes, M)."""
    g = np.asarray(forcing, dtype=float)
    if g.shape[0] != modes.domain.n_faces:
        raise GridError("forcing fields do not match the grid")
    if mask is not None:
        g = mask.faces[:, None] * g
    return (modes.fields.T @ g).T * modes.domain.cell_area


# -- public field-level API ----------------------------------------------------
def stokes_evolve(modes: StokesModes, y0, t, forcing=None, times=None, mask=None) -> StokesState:
    """Solve y_t = A y + P(chi g) on the retained modes."""
    if t < 0:
        raise AdmissibilityError("t must be nonnegative")
    a0 = modes.coefficients(y0)
    fhat = None if forcing is None else _modal_forcing(modes, forcing, mask)
    a = heat_modal(modes.lam, a0, t, times, fhat)
    return StokesState(t, modes.synthesize(a))


def wave_evolve(modes: StokesModes, state0: WaveState, t, forcing=None, times=None,
                mask=None) -> WaveState:
    """Solve u_tt = A u + P(chi h) on the retained modes."""
    a0 = modes.coefficients(state0.u)
    b0 = modes.coefficients(state0.ut)
    fhat = None if forcing is None else _modal_forcing(modes, forcing, mask)
    a, b = wave_modal(modes.omega, a0, b0, t, times, fhat)
    return WaveState(state0.t + t, modes.synthesize(a), modes.synthesize(b))


def adjoint_wave_evolve(modes: StokesModes, phi0_coef, phi1_coef, times, mask=None):
    """Free adjoint wave from modal data in H x V'.

    Returns the final :class:`WaveState` and the omega-restricted trace
    ``chi * phi`` at every requested time, shape ``(n_faces, n_times)``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    a, b = wave_modal(modes.omega, phi0_coef, phi1_coef, None, times, None, trajectory=True)
    phi = modes.fields @ a.T
    trace = phi if mask is None else mask.faces[:, None] * phi
    last = WaveState(float(times[-1]), phi[:, -1], modes.fields @ b[-1])
    return last, trace


def adjoint_via_potential(modes: StokesModes, phi0_coef, phi1_coef, times):
    """Same solution built as phi = psi_t with psi(0) = A^{-1} phi1, psi_t(0) = phi0."""
    lam, w = modes.lam, modes.omega
    psi0 = -np.asarray(phi1_coef, dtype=float) / lam     # A = -diag(lam)
    psi1 = np.asarray(phi0_coef, dtype=float)
    tt = np.atleast_1d(np.asarray(times, dtype=float))[:, None]
    psi_t = -w * np.sin(tt * w) * psi0 + np.cos(tt * w) * psi1
    return modes.fields @ psi_t.T


def wave_energy(modes: StokesModes, a, b) -> float:
    """|u_t|_H^2 + ||u||_V^2 from modal coefficients."""
    return float(np.sum(b**2) + np.sum(modes.lam * a**2))


def reconstruct_pressure(domain: DomainSpec, u, forcing=None):
    """Zero-mean pressure of the wave (or Stokes) system at one instant.

    The pressure gradient is the gradient part of ``L u + forcing``.
    """
    ops = operators(domain)
    raw = ops.lap @ u
    if forcing is not None:
        raw = raw + forcing
    return ops.solve_pressure(ops.div @ raw)


# -- implicit MAC reference stepper ------------------------------------------
@lru_cache(maxsize=8)
def _kkt_factor(domain: DomainSpec, coeff: float):
    """LU of [[I - coeff L, G'], [D', 0]] with the first pressure cell pinned."""
    ops = operators(domain)
    n = domain.n_faces
    top = sp.hstack([sp.identity(n) - coeff * ops.lap, ops.grad[:, 1:]])
    bot = sp.hstack([ops.div[1:], sp.csr_matrix((ops.n_cells - 1, ops.n_cells - 1))])
    return spla.splu(sp.vstack([top, bot]).tocsc())


def _kkt_solve(domain, coeff, rhs):
    lu = _kkt_factor(domain, float(coeff))
    n = domain.n_faces
    sol = lu.solve(np.concatenate([rhs, np.zeros(operators(domain).n_cells - 1)]))
    if not np.all(np.isfinite(sol)):
        raise ConvergenceError("reference stepper saddle-point solve failed")
    return sol[:n]


def mac_step_reference(domain: DomainSpec, system: str, state, dt: float):
    """One implicit step on the MAC grid; the pressure acts as a multiplier.

    ``system='parabolic'``: implicit Euler, ``state`` is a velocity vector.
    ``system='hyperbolic'``: implicit midpoint, ``state`` is ``(u, u_t)``.
    """
    ops = operators(domain)
    if system == "parabolic":
        return _kkt_solve(domain, dt, np.asarray(state, dtype=float))
    if system == "hyperbolic":
        u, w = (np.asarray(s, dtype=float) for s in state)
        rhs = w + dt * (ops.lap @ u) + 0.25 * dt**2 * (ops.lap @ w)
        w_new = _kkt_solve(domain, 0.25 * dt**2, rhs)
        return u + 0.5 * dt * (w + w_new), w_new
    raise ValueError(f"unknown system tag {system!r}")


def energy_balance_residual(omega, x0, v0, times, fhat, W=None, n_gauss: int = 8) -> float:
    """Relative residual of ``E(T) - E(0) - 2 int_0^T (f, x') dt`` for a forced wave.

    ``E = |x'|^2 + sum omega^2 x^2`` with ``f`` piecewise linear on ``times``;
    ``fhat`` holds modal forcing, or control coefficients mapped by ``W``.
    The power integral uses ``n_gauss`` Gauss-Legendre points per interval.
    """
    w = np.asarray(omega, dtype=float)
    times = np.asarray(times, dtype=float)
    f = np.asarray(fhat, dtype=float)
    if W is not None:
        f = f @ W
    g, gw = np.polynomial.legendre.leggauss(n_gauss)
    h = np.diff(times)
    pts = (times[:-1, None] + 0.5 * h[:, None] * (g + 1)).ravel()
    wts = (0.5 * h[:, None] * gw).ravel()
    fine = np.union1d(times, pts)
    f_fine = np.column_stack([np.interp(fine, times, f[:, j]) for j in range(f.shape[1])])
    xs, vs = wave_modal(w, x0, v0, times[-1], fine, f_fine, trajectory=True)
    idx = np.searchsorted(fine, pts)
    f_pts = f_fine[idx]
    power = np.sum(wts * np.einsum("ni,ni->n", f_pts, vs[idx]))
    e0 = np.sum(np.asarray(v0) ** 2) + np.sum(w**2 * np.asarray(x0) ** 2)
    eT = np.sum(vs[-1] ** 2) + np.sum(w**2 * xs[-1] ** 2)
    return float(abs(eT - e0 - 2 * power) / e0)
