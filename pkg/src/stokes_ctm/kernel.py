"""Controlled fundamental solution of the 1D heat equation on [-L, L].

``k_t = k_ss`` starts from a grid delta (height 1/ds at s = 0) and is driven
to zero at time T by equal Dirichlet values ``b(t)`` at ``s = +-L``.  The
space discretization is the three-point Laplacian; in time the semi-discrete
system is integrated exactly in its sine eigenbasis for piecewise-linear
``b``.  The boundary trace is the minimal-norm (penalized HUM) choice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.fft as sfft

from .errors import AdmissibilityError, ConvergenceError, GridError
from .evolve import heat_interval_weights
from .fitting import LinearFit, fit_linear


@dataclass(frozen=True)
class TransmutationKernel:
    T: float
    L: float
    s: np.ndarray
    t: np.ndarray
    values: np.ndarray          # (n_t, n_s), endpoints hold the boundary trace
    boundary: np.ndarray        # b(t) on the t grid
    eta: float
    terminal_ratio: float       # ||k(T)|| / ||k(0)|| (discrete L2)
    ctrl_t: np.ndarray = dc_field(repr=False)
    ctrl_b: np.ndarray = dc_field(repr=False)

    @property
    def ds(self) -> float:
        return 2 * self.L / (self.s.size - 1)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def s_weights(self) -> np.ndarray:
        """Quadrature in s.  Endpoints carry the Dirichlet trace, a null set in L2."""
        w = np.full(self.s.size, self.ds)
        w[0] = w[-1] = 0.0
        return w

    def row_norm(self, i: int) -> float:
        return math.sqrt(float(np.sum(self.s_weights * self.values[i] ** 2)))

    @property
    def norm_sq(self) -> float:
        """||k||^2 over (0,T) x (-L,L), trapezoid in both variables."""
        rows = self.values**2 @ self.s_weights
        return float(np.trapezoid(rows, self.t))

    def row(self, t: float) -> np.ndarray:
        """k(t, .) with extension by zero outside [0, T]; linear in t between nodes."""
        if t < 0 or t > self.T:
            return np.zeros(self.s.size)
        i = min(int(np.searchsorted(self.t, t, side="right")) - 1, self.t.size - 2)
        th = (t - self.t[i]) / (self.t[i + 1] - self.t[i])
        return (1 - th) * self.values[i] + th * self.values[i + 1]

    def refine(self, factor: int) -> "TransmutationKernel":
        """Same semi-discrete kernel sampled on a t grid ``factor`` times finer."""
        t_new = np.linspace(0.0, self.T, (self.t.size - 1) * factor + 1)
        b_new = np.interp(t_new, self.ctrl_t, self.ctrl_b)
        vals = _trajectory(self.L, self.s.size, t_new, b_new)
        return TransmutationKernel(self.T, self.L, self.s, t_new, vals, b_new, self.eta,
                                   self.terminal_ratio, self.ctrl_t, self.ctrl_b)

    def heat_residual(self, core: float = 0.8) -> float:
        """max |k_t - k_ss| on |s| <= core*L, Crank-Nicolson-centered differences.

        The first two layers of the construction grid are skipped (the delta
        is not resolved there), and so is the wall layer, whose time scale
        ds^2 is far below any practical dt.
        """
        k = self.values
        kt = (k[1:] - k[:-1]) / self.dt
        kss = (k[:, 2:] - 2 * k[:, 1:-1] + k[:, :-2]) / self.ds**2
        res = kt[:, 1:-1] - 0.5 * (kss[1:] + kss[:-1])
        rows = self.t[:-1] >= 2 * (self.ctrl_t[1] - self.ctrl_t[0]) - 1e-12
        cols = np.abs(self.s[1:-1]) <= core * self.L
        return float(np.abs(res[np.ix_(rows, cols)]).max())

    def evenness(self) -> float:
        k = self.values
        scale = np.abs(k).max(axis=1)
        scale[scale == 0] = 1.0
        return float((np.abs(k - k[:, ::-1]).max(axis=1) / scale).max())


def _sine_setup(n_s: int, ds: float):
    N = n_s - 2
    n = np.arange(1, N + 1)
    mu = (4.0 / ds**2) * np.sin(n * np.pi / (2 * (N + 1))) ** 2
    e = np.zeros(N)
    e[0] = e[-1] = 1.0 / ds**2
    beta = sfft.dst(e, type=1, norm="ortho")
    k0 = np.zeros(N)
    k0[(N + 1) // 2 - 1] = 1.0 / ds
    return mu, beta, sfft.dst(k0, type=1, norm="ortho")


def _trajectory(L, n_s, t, b):
    ds = 2 * L / (n_s - 1)
    mu, beta, kh = _sine_setup(n_s, ds)
    out = np.empty((t.size, n_s))
    out[0] = 0.0
    out[0, n_s // 2] = 1.0 / ds       # the grid delta, stored exactly
    out[0, 0] = out[0, -1] = b[0]
    cache = {}
    for i in range(t.size - 1):
        h = t[i + 1] - t[i]
        key = round(h, 14)
        if key not in cache:
            cache[key] = heat_interval_weights(mu, h)
        dec, wl, wr = cache[key]
        kh = dec * kh + beta * (wl * b[i] + wr * b[i + 1])
        out[i + 1, 1:-1] = sfft.dst(kh, type=1, norm="ortho")
        out[i + 1, 0] = out[i + 1, -1] = b[i + 1]
    return out


def check_admissible(L: float, T: float):
    if not 0.0 < T <= min(math.pi / 2, L) ** 2:
        raise AdmissibilityError(f"T={T} outside (0, min(pi/2, L)^2] for L={L}")


def build_kernel(L: float, T: float, n_s: int = 1001, n_t: int = 257, tol: float = 1e-7,
                 max_level: int = 14) -> TransmutationKernel:
    check_admissible(L, T)
    if n_s % 2 == 0:
        raise GridError("n_s must be odd so that s = 0 is a node")
    if n_s < 8 * L / math.sqrt(T):
        raise GridError(f"n_s={n_s} does not resolve sqrt(T) (need >= {8 * L / math.sqrt(T):.0f})")
    if n_t < 8:
        raise GridError("n_t too small")
    ds = 2 * L / (n_s - 1)
    mu, beta, kh0 = _sine_setup(n_s, ds)
    t = np.linspace(0.0, T, n_t)
    h = t[1] - t[0]
    dec, wl, wr = heat_interval_weights(mu, h)
    # response of k(T) to each boundary node value; b(0) = 0 for compatibility
    G = np.zeros((mu.size, n_t))
    for i in range(n_t - 1):
        decay = np.exp(-mu * (T - t[i + 1]))
        G[:, i] += beta * wl * decay
        G[:, i + 1] += beta * wr * decay
    G = G[:, 1:]
    kfree = np.exp(-mu * T) * kh0
    # b lives on both ends: squared L2 norm 2 * sum m_i b_i^2 (lumped trapezoid)
    m = np.full(n_t - 1, h)
    m[-1] = 0.5 * h
    scale = np.sqrt(2 * m)
    Gs = math.sqrt(ds) * G / scale
    U, S, Vt = np.linalg.svd(Gs, full_matrices=False)
    c = U.T @ (math.sqrt(ds) * kfree)
    k0n = np.linalg.norm(kh0)
    resid_perp = math.sqrt(max(np.sum((math.sqrt(ds) * kfree) ** 2) - np.sum(c**2), 0.0))
    for level in range(1, max_level + 1):
        eta = 10.0 ** (-2 * level)
        x = -(S / (S**2 + eta)) * c
        bt = Vt.T @ x / scale
        kT = kfree + G @ bt
        ratio = float(np.linalg.norm(kT) / k0n)
        if ratio <= tol:
            break
    else:
        raise ConvergenceError(f"kernel control reached only {ratio:.3e} (floor {resid_perp:.1e})",
                               ratio)
    b = np.concatenate([[0.0], bt])
    vals = _trajectory(L, n_s, t, b)
    s = np.linspace(-L, L, n_s)
    return TransmutationKernel(T, L, s, t, vals, b, eta, ratio, t, b)


def gaussian(s, t):
    return np.exp(-(s**2) / (4 * t)) / np.sqrt(4 * np.pi * t)


def _core(kernel: TransmutationKernel, core: float) -> np.ndarray:
    return kernel.s_weights * (np.abs(kernel.s) <= core * kernel.L)


def early_time_gaussian_error(kernel: TransmutationKernel, t: float | None = None,
                              core: float = 0.5) -> float:
    """Relative L2 distance to the free 1D heat kernel on |s| <= core*L.

    The boundary layer next to s = +-L carries the actuation from the first
    step on; the core is the region it has not reached yet.
    """
    if t is None:
        t = 0.1 * min(kernel.T, kernel.L**2)
    i = int(np.argmin(np.abs(kernel.t - t)))
    g = gaussian(kernel.s, kernel.t[i])
    w = _core(kernel, core)
    return math.sqrt(np.sum(w * (kernel.values[i] - g) ** 2) / np.sum(w * g**2))


def core_mass(kernel: TransmutationKernel, i: int = 1, core: float = 0.5) -> float:
    return float(np.sum(_core(kernel, core) * kernel.values[i]))


@dataclass(frozen=True)
class KernelScalingReport:
    L: float
    T: np.ndarray
    norm_sq: np.ndarray
    fit: LinearFit

    @property
    def ok(self) -> bool:
        return self.fit.slope > 0 and self.fit.r2 >= 0.95


def fit_kernel_norms(L, T_list, norm_sq) -> KernelScalingReport:
    T = np.asarray(T_list, dtype=float)
    if T.size < 4:
        raise ValueError("kernel scaling needs at least 4 horizons")
    fit = fit_linear(L**2 / T, np.log(np.asarray(norm_sq, dtype=float)))
    return KernelScalingReport(L, T, np.asarray(norm_sq, dtype=float), fit)


def kernel_norm_scaling(L: float, T_list, n_s: int = 1001, n_t: int = 257,
                        tol: float = 1e-7) -> KernelScalingReport:
    """Fit log ||k||^2 = a + b L^2/T over the listed horizons."""
    if len(T_list) < 4:
        raise ValueError("kernel scaling needs at least 4 horizons")
    norms = [build_kernel(L, T, n_s, n_t, tol).norm_sq for T in T_list]
    return fit_kernel_norms(L, T_list, norms)
