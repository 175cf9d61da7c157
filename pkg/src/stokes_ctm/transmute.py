"""Parabolic controls from pseudo-time wave controls through the kernel integral.

With ``u`` the controlled wave trajectory in pseudo-time ``s`` (extended
evenly to [-L, L]) and ``k`` the controlled fundamental solution,

    y(t) = int k(t, s) u(s) ds,    g(t) = int k(t, s) h(s) ds

solve the Stokes system with interior control ``g``.  Discretely, the wave
is the leapfrog scheme on the kernel's s grid; summation by parts then leaves
no boundary terms because ``u`` vanishes on the last two nodes, so the pair
solves the modal Stokes system exactly in t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .domain import ControlMask
from .errors import AdmissibilityError, GridError
from .hum import ControlSignal, leapfrog_null_control
from .kernel import TransmutationKernel, build_kernel, check_admissible
from .stokesop import StokesModes, operators


@dataclass
class TransmutedSolution:
    """Modal trajectory ``y`` and control ``g = chi * sum g_coef e_j`` on ``times``."""

    T: float
    L: float
    times: np.ndarray
    coef: np.ndarray
    g_coef: np.ndarray
    modes: StokesModes = dc_field(repr=False)
    mask: ControlMask = dc_field(repr=False)
    kernel: TransmutationKernel | None = dc_field(default=None, repr=False)
    wave: ControlSignal | None = dc_field(default=None, repr=False)
    segment: int = 1
    y0_norm: float = 1.0
    info: dict = dc_field(default_factory=dict)

    @property
    def weight_matrix(self):
        return self.modes.mask_matrix(self.mask)

    @property
    def terminal(self) -> float:
        """|y(T)|_H / |y0|_H."""
        return float(np.linalg.norm(self.coef[-1]) / self.y0_norm) if self.y0_norm > 0 else 0.0

    @property
    def cost(self) -> float:
        """int_0^T int_omega |g|^2, trapezoid in t."""
        W = self.weight_matrix
        dens = np.einsum("ni,ij,nj->n", self.g_coef, W, self.g_coef)
        return float(np.trapezoid(dens, self.times))

    def field(self, i: int) -> np.ndarray:
        return self.modes.synthesize(self.coef[i])

    def control_field(self, i: int) -> np.ndarray:
        return self.mask.faces * self.modes.synthesize(self.g_coef[i])


def reflect_extend(u: np.ndarray, h: np.ndarray, tol: float = 1e-8):
    """Even extension of node arrays on s = 0..L (rows) to s = -L..L.

    ``u`` must vanish on its last two rows (null state and pseudo-velocity);
    otherwise the extension by zero beyond +-L would jump.
    """
    u = np.asarray(u, dtype=float)
    h = np.asarray(h, dtype=float)
    scale = max(np.abs(u).max(), 1e-300)
    if np.abs(u[-2:]).max() > tol * scale:
        raise AdmissibilityError("terminal state is not null; extension would be discontinuous")
    return np.concatenate([u[:0:-1], u]), np.concatenate([h[:0:-1], h])


def _padded_wave(modes, y0, L, n_steps, pad, mask, M_f) -> ControlSignal:
    ds = L / n_steps
    wave = leapfrog_null_control(modes, y0, ds * (n_steps - pad), n_steps - pad, mask, M_f)
    if pad:
        M = wave.coef.shape[1]
        wave.info["trajectory"] = np.vstack([wave.info["trajectory"], np.zeros((pad, M))])
        wave.coef = np.vstack([wave.coef, np.zeros((pad, M))])
        wave.times = ds * np.arange(n_steps + 1)
    wave.info["ds"] = ds
    return wave


def _assemble(kernel: TransmutationKernel, wave: ControlSignal):
    lf_ds = wave.info["ds"]
    if abs(lf_ds - kernel.ds) > 1e-12 * kernel.ds:
        raise GridError(f"kernel s-step {kernel.ds} does not match pseudo-time step {lf_ds}")
    u_hat, c_hat = reflect_extend(wave.info["trajectory"], wave.coef)
    # endpoints carry zero state and are excluded from the kernel quadrature
    K = kernel.values[:, 1:-1] * kernel.ds
    return K @ u_hat[1:-1], K @ c_hat[1:-1]


def transmute(modes: StokesModes, y0, T: float, L: float, mask: ControlMask, M_f: int,
              n_s: int = 1001, n_t: int = 129, refine: int = 2, kernel_tol: float = 1e-7,
              tol: float = 1e-4, kernel: TransmutationKernel | None = None,
              t0: float = 0.0, rest_margin: float = 0.2) -> TransmutedSolution:
    """Null control of the filtered Stokes system on (t0, t0+T) from y0 at t0.

    The wave is brought to rest ``rest_margin`` pseudo-time before L, so the
    trajectory vanishes on a neighbourhood of s = +-L where the kernel has
    its stiff boundary layer; y and g are then smooth in t.
    """
    check_admissible(L, T)
    if refine < 1:
        raise GridError("refine must be a positive integer")
    if kernel is None:
        kernel = build_kernel(L, T, n_s, n_t, kernel_tol)
    elif abs(kernel.T - T) > 1e-12 or abs(kernel.L - L) > 1e-12:
        raise GridError("kernel built for a different (L, T)")
    fine = kernel.refine(refine) if refine > 1 else kernel
    n_steps = (kernel.s.size - 1) // 2
    pad = int(round(rest_margin / kernel.ds))
    if not 0 <= pad < n_steps // 2:
        raise GridError("rest margin must leave at least half of the pseudo-time grid")
    wave = _padded_wave(modes, y0, L, n_steps, pad, mask, M_f)
    y, g = _assemble(fine, wave)
    fm = wave.modes
    a0 = fm.coefficients(y0)
    sol = TransmutedSolution(T, L, t0 + fine.t, y, g, fm, mask, kernel, wave, refine,
                             float(np.linalg.norm(a0)))
    sol.info.update(sifting_error=float(np.abs(y[0] - a0).max()),
                    kernel_norm_sq=kernel.norm_sq, wave_cost=wave.cost,
                    converged=sol.terminal <= tol)
    return sol


@dataclass(frozen=True)
class ResidualReport:
    stokes: float            # max_t max_j |<y_t - Ay - P(chi g), e_j>|
    relative: float          # stokes / max_t |y_t|
    divergence: float
    n_checked: int


def verify_transmuted(sol: TransmutedSolution, n_div: int = 9, skip: int = 2) -> ResidualReport:
    """Modal residual by centered differences inside control segments.

    Only nodes whose three-point stencil stays within one segment of the
    construction grid are used; the control is piecewise linear, so the
    trajectory is not C^3 across segment ends.  The first ``skip`` segments,
    where the kernel is still close to the grid delta, are left out.
    """
    y, g, t = sol.coef, sol.g_coef, sol.times
    lam, W = sol.modes.lam, sol.weight_matrix
    idx = np.arange(1, t.size - 1)
    if sol.segment > 1:
        idx = idx[idx % sol.segment != 0]
    idx = idx[idx > skip * sol.segment]
    dt = t[idx + 1] - t[idx - 1]
    yt = (y[idx + 1] - y[idx - 1]) / dt[:, None]
    res = yt + lam * y[idx] - g[idx] @ W
    scale = np.abs(yt).max()
    ops = operators(sol.modes.domain)
    picks = np.unique(np.linspace(0, t.size - 1, n_div).astype(int))
    div = max(float(np.abs(ops.div @ sol.field(i)).max()) for i in picks)
    stokes = float(np.abs(res).max()) if idx.size else 0.0
    return ResidualReport(stokes, stokes / scale if scale > 0 else 0.0, div, int(idx.size))


def smoothing_bound(eps: float) -> float:
    """eps * exp(2/eps), the factor in ||y(eps)||_V^2 <= bound * |y0|_H^2."""
    return eps * math.exp(2.0 / eps)


def regularize_then_control(modes: StokesModes, y0, eps: float | None, T: float, L: float,
                            mask: ControlMask, M_f: int, n_free: int = 33,
                            **kw) -> TransmutedSolution:
    """Free decay on (0, eps), transmuted control on (eps, T).

    The smoothing inequality is evaluated on every retained mode of ``modes``
    and recorded in ``info``; a violation is reported, not raised.
    """
    if eps is None:
        eps = T / 4
    if not 0.0 <= eps < T:
        raise AdmissibilityError(f"eps={eps} must lie in [0, T)")
    check_admissible(L, T - eps)
    a_all = modes.coefficients(y0)
    y0_norm = float(np.linalg.norm(a_all))
    if eps == 0.0:
        sol = transmute(modes, y0, T, L, mask, M_f, **kw)
        sol.info.update(eps=0.0, vnorm_sq=float(np.sum(modes.lam * a_all**2)))
        return sol
    a_eps = np.exp(-modes.lam * eps) * a_all
    vnorm_sq = float(np.sum(modes.lam * a_eps**2))
    bound = smoothing_bound(eps) * y0_norm**2
    sol = transmute(modes, modes.synthesize(a_eps), T - eps, L, mask, M_f, t0=eps, **kw)
    fm = sol.modes
    a0 = a_all[: fm.count]
    t_free = np.linspace(0.0, eps, n_free)[:-1]
    y_free = np.exp(-np.outer(t_free, fm.lam)) * a0
    full = TransmutedSolution(T, L, np.concatenate([t_free, sol.times]),
                              np.vstack([y_free, sol.coef]),
                              np.vstack([np.zeros_like(y_free), sol.g_coef]),
                              fm, mask, sol.kernel, sol.wave, 1,
                              float(np.linalg.norm(a0)), dict(sol.info))
    full.info.update(eps=eps, vnorm_sq=vnorm_sq, smoothing_bound=bound,
                     smoothing_ok=vnorm_sq <= bound, y0_norm_all=y0_norm,
                     controlled=sol, converged=full.terminal <= kw.get("tol", 1e-4))
    return full
