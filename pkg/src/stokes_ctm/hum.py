"""Hilbert Uniqueness Method on the filtered Stokes modes.

Wave (hyperbolic) data are handled in scaled modal coordinates: an adjoint
datum ``(p, q)`` stands for ``phi(0) = sum p_j e_j`` and
``phi_t(0) = sum omega_j q_j e_j``, so that
``|phi(0)|_H^2 + ||phi_t(0)||_{V'}^2 = |p|^2 + |q|^2`` and the observed
adjoint is ``phi(t) = sum (p_j cos(omega_j t) + q_j sin(omega_j t)) e_j``.

Controls are always ``h = chi_omega * phi`` with ``phi`` in the span of the
retained modes; their action on the filtered system is ``W c(t)`` with
``W = (chi e_j, e_k)_H``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.linalg as sla

from .domain import ControlMask
from .errors import ControlTimeError, ConvergenceError, AdmissibilityError
from .evolve import heat_modal, wave_modal
from .stokesop import StokesModes


# -- data types ----------------------------------------------------------------
@dataclass
class AdjointDatum:
    coef: np.ndarray
    iterations: int = 0
    residual: float = 0.0
    lam_min_estimate: float = float("nan")

    @property
    def p(self):
        return self.coef[: self.coef.size // 2]

    @property
    def q(self):
        return self.coef[self.coef.size // 2 :]


@dataclass
class GramianOperator:
    T: float
    mask: ControlMask | None
    M_f: int
    matrix: np.ndarray
    observe: str = "position"
    n_quad: int = 0
    under_resolved: bool = False

    def __matmul__(self, x):
        return self.matrix @ x

    @property
    def eigenvalues(self):
        return np.linalg.eigvalsh(self.matrix)

    @property
    def lam_min(self) -> float:
        return float(self.eigenvalues[0])


@dataclass
class ControlSignal:
    """Control ``h(t_n) = chi * sum_j coef[n, j] e_j`` on a time grid."""

    times: np.ndarray
    coef: np.ndarray
    modes: StokesModes = dc_field(repr=False)
    mask: ControlMask = dc_field(repr=False)
    cost: float = 0.0
    terminal: float = 0.0
    converged: bool = True
    info: dict = dc_field(default_factory=dict)

    @property
    def weight_matrix(self):
        return self.modes.mask_matrix(self.mask)

    def modal_forcing(self) -> np.ndarray:
        """(n_times, M_f) forcing of the filtered system."""
        return self.coef @ self.weight_matrix

    def field(self, n: int) -> np.ndarray:
        return self.mask.faces * (self.modes.fields @ self.coef[n])

    def fields(self) -> np.ndarray:
        return self.mask.faces[:, None] * (self.modes.fields @ self.coef.T)

    def quadrature_cost(self) -> float:
        """Trapezoid estimate of the squared L2(omega x (0,T)) norm from the nodes."""
        W = self.weight_matrix
        dens = np.einsum("ni,ij,nj->n", self.coef, W, self.coef)
        return float(np.trapezoid(dens, self.times))


# -- quadrature ---------------------------------------------------------------
def time_quadrature(T: float, omega_max: float, points_per_period: int = 8):
    """Composite Gauss-Legendre nodes on [0, T].

    One panel per shortest period of a product of two modal oscillations,
    i.e. ``pi / omega_max``.
    """
    if T <= 0:
        raise AdmissibilityError("horizon must be positive")
    period = math.pi / omega_max
    panels = max(1, math.ceil(T / period))
    x, w = np.polynomial.legendre.leggauss(points_per_period)
    edges = np.linspace(0.0, T, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _observation_basis(omega, t, observe):
    """Per-time modal factors (first, second half of the datum)."""
    c, s = np.cos(np.outer(t, omega)), np.sin(np.outer(t, omega))
    if observe == "position":        # data (p, q) in H x V'
        return c, s
    if observe == "velocity":        # data (omega p, q) in V x H, observe phi_t
        return -s, c
    if observe == "position_vh":     # data (omega p, omega q) in V x H, observe phi
        return c / omega, s / omega
    raise ValueError(f"unknown observation {observe!r}")


def _assemble(omega, W, T, observe, points_per_period):
    t, w = time_quadrature(T, float(omega.max()), points_per_period)
    F1, F2 = _observation_basis(omega, t, observe)
    blocks = [[W * ((F1 * w[:, None]).T @ F1), W * ((F1 * w[:, None]).T @ F2)],
              [None, W * ((F2 * w[:, None]).T @ F2)]]
    blocks[1][0] = blocks[0][1].T
    G = np.block(blocks)
    return 0.5 * (G + G.T), t.size


def assemble_wave_gramian(modes: StokesModes, T: float, mask: ControlMask | None, M_f: int,
                          observe: str = "position", weight: np.ndarray | None = None,
                          points_per_period: int = 8, check: bool = True) -> GramianOperator:
    """Gramian of ``int_0^T (W phi, phi) dt`` in the chosen data coordinates.

    ``weight`` overrides the spatial form (e.g. the boundary flux form); by
    default it is the omega mask matrix.
    """
    fm = modes.filtered(M_f)
    W = fm.mask_matrix(mask) if weight is None else weight[:M_f, :M_f]
    G, nq = _assemble(fm.omega, W, T, observe, points_per_period)
    flag = False
    if check:
        G2, _ = _assemble(fm.omega, W, T, observe, 2 * points_per_period)
        scale = np.abs(G2).max()
        flag = bool(np.abs(G - G2).max() > 1e-8 * scale)
        if flag:
            warnings.warn(f"Gramian quadrature under-resolved at T={T}", RuntimeWarning)
    return GramianOperator(T, mask, M_f, G, observe, nq, flag)


# -- conjugate gradients --------------------------------------------------------
def cg_solve(gramian, rhs, tol: float = 1e-12, maxiter: int | None = None,
             history: list | None = None) -> AdjointDatum:
    """Plain CG for a symmetric positive definite Gramian.

    The smallest Ritz value of the Lanczos tridiagonal built from the CG
    coefficients is returned as the ``lam_min`` estimate.
    """
    A = gramian.matrix if isinstance(gramian, GramianOperator) else np.asarray(gramian)
    b = np.asarray(rhs, dtype=float)
    n = b.size
    maxiter = 10 * n if maxiter is None else maxiter
    x = np.zeros(n)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return AdjointDatum(x, 0, 0.0)
    r = b.copy()
    p = r.copy()
    rr = r @ r
    alphas, betas = [], []
    for k in range(1, maxiter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise ConvergenceError("Gramian is not positive definite along a CG direction",
                                   math.sqrt(rr) / bnorm)
        alpha = rr / pAp
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        alphas.append(alpha)
        if history is not None:
            history.append(x.copy())
        if math.sqrt(rr_new) <= tol * bnorm:
            break
        beta = rr_new / rr
        betas.append(beta)
        p = r + beta * p
        rr = rr_new
    else:
        raise ConvergenceError(f"CG did not converge in {maxiter} iterations",
                               math.sqrt(rr_new) / bnorm)
    # Lanczos tridiagonal from CG coefficients
    m = len(alphas)
    diag = np.array([1 / alphas[0]] + [1 / alphas[i] + betas[i - 1] / alphas[i - 1]
                                       for i in range(1, m)])
    off = np.array([math.sqrt(betas[i]) / alphas[i] for i in range(m - 1)])
    ritz = sla.eigh_tridiagonal(diag, off, eigvals_only=True)
    return AdjointDatum(x, m, math.sqrt(rr_new) / bnorm, float(ritz[0]))


# -- wave null control ------------------------------------------------------------
def default_control_nodes(T: float, omega_max: float, base: int = 256) -> int:
    # piecewise-linear sampling error of the control ~ (omega dt)^2 / 12
    return max(base, math.ceil(T * omega_max / 0.01)) + 1


def _wave_terminal(omega, W, a0, b0, datum, T, points_per_period=16):
    """Terminal coefficients under h = chi*phi, Duhamel by Gauss-Legendre."""
    t, w = time_quadrature(T, float(omega.max()), points_per_period)
    p, q = datum[: omega.size], datum[omega.size :]
    c = np.cos(np.outer(t, omega)) * p + np.sin(np.outer(t, omega)) * q
    f = c @ W                                           # (nq, M)
    kern_x = np.sin(np.outer(T - t, omega)) / omega
    kern_v = np.cos(np.outer(T - t, omega))
    a, b = wave_modal(omega, a0, b0, T)
    a = a + (w[:, None] * kern_x * f).sum(axis=0)
    b = b + (w[:, None] * kern_v * f).sum(axis=0)
    return a, b


def wave_null_control(modes: StokesModes, u0, u1, T: float, mask: ControlMask, M_f: int,
                      tol: float = 1e-4, cg_tol: float = 1e-12, n_nodes: int | None = None,
                      lam_floor: float = 1e-10) -> ControlSignal:
    """Drive the filtered wave system from (u0, u1) in V x H to rest at T.

    ``u0``/``u1`` are velocity fields; only their filtered components are
    controlled.  The Euler-Lagrange system of the quadratic functional is
    ``Lambda d = (-u1, omega*u0)`` in scaled coordinates.
    """
    fm = modes.filtered(M_f)
    om = fm.omega
    a0, b0 = fm.coefficients(u0), fm.coefficients(u1)
    G = assemble_wave_gramian(modes, T, mask, M_f)
    ev = G.eigenvalues
    if ev[-1] <= 0 or ev[0] <= lam_floor * ev[-1]:
        ratio = ev[0] / ev[-1] if ev[-1] > 0 else 0.0
        raise ControlTimeError(f"horizon T={T} below empirical control time "
                               f"(lam_min/lam_max={ratio:.3e})")
    rhs = np.concatenate([-b0, om * a0])
    datum = cg_solve(G, rhs, tol=cg_tol)
    n = default_control_nodes(T, om.max()) if n_nodes is None else n_nodes
    times = np.linspace(0.0, T, n)
    coef = np.cos(np.outer(times, om)) * datum.p + np.sin(np.outer(times, om)) * datum.q
    W = fm.mask_matrix(mask)
    aT, bT = _wave_terminal(om, W, a0, b0, datum.coef, T)
    scale = math.sqrt(np.sum(fm.lam * a0**2)) + math.sqrt(np.sum(b0**2))
    terminal = math.sqrt(np.sum(aT**2) + np.sum(bT**2)) / scale if scale > 0 else 0.0
    cost = float(datum.coef @ (G.matrix @ datum.coef))
    return ControlSignal(times, coef, fm, mask, cost, terminal, terminal <= tol,
                         {"datum": datum, "gramian_lam_min": float(ev[0]),
                          "iterations": datum.iterations, "scheme": "exact"})


def resimulate_wave(control: ControlSignal, u0, u1):
    """Run the filtered wave system under the piecewise-linear sampled control."""
    fm = control.modes
    a0, b0 = fm.coefficients(u0), fm.coefficients(u1)
    T = float(control.times[-1])
    return wave_modal(fm.omega, a0, b0, T, control.times, control.modal_forcing())


# -- leapfrog (pseudo-time discrete) null control ------------------------------------
def leapfrog_null_control(modes: StokesModes, y0, L: float, n_steps: int, mask: ControlMask,
                          M_f: int, lam_floor: float = 1e-13) -> ControlSignal:
    """Exact null control of the leapfrog-discretized wave in pseudo-time.

    Nodes ``s_m = m*ds`` (``m = 0..n_steps``), recursion
    ``u[m+1] = 2u[m] - u[m-1] + ds^2 (-lam u[m] + W c[m])`` started evenly
    (``u[-1] = u[1]``) from ``u[0] = y0`` with zero pseudo-velocity.  The
    control drives ``u[n-1] = u[n] = 0`` with minimal weighted norm
    ``sum w_m c_m^T W c_m`` (``w_0 = ds/2``).  The returned signal carries the
    state trajectory in ``info['trajectory']``.
    """
    fm = modes.filtered(M_f)
    lam = fm.lam
    ds = L / n_steps
    if ds**2 * lam.max() >= 4.0:
        raise AdmissibilityError("leapfrog unstable: ds too large for the retained modes")
    W = fm.mask_matrix(mask)
    a0 = fm.coefficients(y0)
    theta = np.arccos(1.0 - 0.5 * ds**2 * lam)
    m = np.arange(n_steps)                      # control nodes 0..N-1
    wts = np.full(n_steps, ds)
    wts[0] = 0.5 * ds

    def response(p):
        lag = p - m
        R = ds**2 * np.sin(np.outer(np.maximum(lag, 0), theta)) / np.sin(theta)
        R[0] = 0.5 * ds**2 * np.sin(p * theta) / np.sin(theta)
        return R

    R1, R2 = response(n_steps - 1), response(n_steps)
    Rs = [R1, R2]
    inv_w = 1.0 / wts
    Gam = np.block([[W * ((Ra * inv_w[:, None]).T @ Rb) for Rb in Rs] for Ra in Rs])
    Gam = 0.5 * (Gam + Gam.T)
    d = np.concatenate([np.cos((n_steps - 1) * theta) * a0, np.cos(n_steps * theta) * a0])
    ev = np.linalg.eigvalsh(Gam)
    if ev[0] <= lam_floor * ev[-1]:
        raise ControlTimeError(f"pseudo-time L={L} below the discrete control time "
                               f"(lam_min/lam_max={ev[0] / ev[-1]:.3e})")
    psi = sla.solve(Gam, d, assume_a="pos")
    M = lam.size
    coef = -(R1 * psi[:M] + R2 * psi[M:]) * inv_w[:, None]
    coef = np.vstack([coef, np.zeros(M)])       # node N carries no control
    f = coef @ W
    u = np.empty((n_steps + 1, M))
    u[0] = a0
    u[1] = a0 + 0.5 * ds**2 * (-lam * a0 + f[0])
    for k in range(1, n_steps):
        u[k + 1] = 2 * u[k] - u[k - 1] + ds**2 * (-lam * u[k] + f[k])
    dens = np.einsum("ni,ij,nj->n", coef[:-1], W, coef[:-1])
    cost = float(np.sum(wts * dens))
    scale = math.sqrt(np.sum(lam * a0**2))
    term = math.sqrt(np.sum(u[-1] ** 2) + np.sum(((u[-1] - u[-2]) / ds) ** 2))
    times = ds * np.arange(n_steps + 1)
    return ControlSignal(times, coef, fm, mask, cost, term / scale if scale > 0 else 0.0,
                         True, {"trajectory": u, "scheme": "leapfrog", "ds": ds,
                                "terminal_nodes": (float(np.abs(u[-2]).max()),
                                                   float(np.abs(u[-1]).max()))})


# -- parabolic (direct) null control ---------------------------------------------
def parabolic_gramian(lam, W, T):
    s = lam[:, None] + lam[None, :]
    return W * (-np.expm1(-s * T) / s)


def penalized_control(lam, W, x0, T, tol, max_level=12):
    """Penalized HUM for x' = -lam x + W c: minimize cost + |x(T)|^2 / eta.

    eta runs through 10^(-2k) until |x(T)| <= tol * |exp(-lam T) x0|, i.e. the
    control must remove all but a fraction ``tol`` of what free decay leaves
    (a bound relative to |x0| alone is met by free decay for moderate T).  Returns
    ``(phi_T, x_T, cost, eta, converged)``; the control is
    ``c(t) = exp(-lam (T - t)) phi_T``.
    """
    G = parabolic_gramian(lam, W, T)
    D, V = np.linalg.eigh(0.5 * (G + G.T))
    D = np.clip(D, 0.0, None)
    z = np.exp(-lam * T) * x0
    zc = V.T @ z
    x0n = np.linalg.norm(x0)
    if x0n == 0.0:
        return np.zeros_like(x0), np.zeros_like(x0), 0.0, 0.0, True
    for k in range(1, max_level + 1):
        eta = 10.0 ** (-2 * k)
        phi = -V @ (zc / (D + eta))
        xT = V @ (eta / (D + eta) * zc)
        if np.linalg.norm(xT) <= tol * np.linalg.norm(z):
            return phi, xT, float(phi @ G @ phi), eta, True
    return phi, xT, float(phi @ G @ phi), eta, False


def stokes_null_control_direct(modes: StokesModes, y0, T: float, mask: ControlMask, M_f: int,
                               tol: float = 1e-4, n_nodes: int = 257) -> ControlSignal:
    if T <= 0:
        raise AdmissibilityError("horizon must be positive")
    fm = modes.filtered(M_f)
    W = fm.mask_matrix(mask)
    a0 = fm.coefficients(y0)
    phi, xT, cost, eta, ok = penalized_control(fm.lam, W, a0, T, tol)
    if not ok:
        warnings.warn(f"direct Stokes control at T={T} reached only "
                      f"{np.linalg.norm(xT) / np.linalg.norm(a0):.3e}", RuntimeWarning)
    times = np.linspace(0.0, T, n_nodes)
    coef = np.exp(-np.outer(T - times, fm.lam)) * phi
    nrm = np.linalg.norm(a0)
    return ControlSignal(times, coef, fm, mask, cost,
                         float(np.linalg.norm(xT) / nrm) if nrm > 0 else 0.0, ok,
                         {"eta": eta, "phi_T": phi, "scheme": "penalized"})


def resimulate_stokes(control: ControlSignal, y0):
    fm = control.modes
    T = float(control.times[-1])
    return heat_modal(fm.lam, fm.coefficients(y0), T, control.times, control.modal_forcing())


def heat1d_null_control_cost(T: float, half_width: float, collar: float, n_modes: int,
                             tol: float = 1e-4, n_quad: int = 4000):
    """Scalar heat equation on (-a, a), control on the collar; unit datum in mode 1.

    Baseline for the cost curves: same penalized machinery on the sine modes.
    """
    a = half_width
    k = np.arange(1, n_modes + 1)
    lam = (k * np.pi / (2 * a)) ** 2
    x = np.linspace(-a, a, n_quad + 1)
    modes = np.sqrt(1.0 / a) * np.sin(np.outer(x + a, k * np.pi / (2 * a)))
    chi = (a - np.abs(x) <= collar + 1e-12).astype(float)
    W = np.trapezoid(modes[:, :, None] * modes[:, None, :] * chi[:, None, None], x, axis=0)
    x0 = np.zeros(n_modes)
    x0[0] = 1.0
    _, xT, cost, _, ok = penalized_control(lam, W, x0, T, tol)
    return cost, float(np.linalg.norm(xT)), ok
