"""Multiplier identities, observability constants and control-time estimates.

Wave data are handled in the scaled coordinates of :mod:`stokes_ctm.hum`; for
the V x H energy the datum ``x = (P, Q)`` stands for
``phi(t) = sum (P_j cos(w_j t) + Q_j sin(w_j t)) / w_j e_j`` and
``E(0) = |x|^2``.  Every constant below is a ratio of two quadratic forms in
``x`` and therefore an eigenvalue of a filtered Gramian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .domain import ControlMask, DomainSpec
from .errors import AdmissibilityError
from .hum import assemble_wave_gramian, time_quadrature
from .stokesop import StokesModes, operators


# -- multiplier fields ---------------------------------------------------------------
def _smoothstep(x):
    """C^2 quintic step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10 - 15 * x + 6 * x**2)


def _smoothstep_d(x):
    inside = (x > 0) & (x < 1)
    x = np.clip(x, 0.0, 1.0)
    return np.where(inside, 30 * x**2 * (1 - x) ** 2, 0.0)


@dataclass(frozen=True)
class MultiplierField:
    """Vector multiplier ``eta(t) q(x)``; ``jac[k][j] = d q_k / d x_j``."""

    q: Callable
    jac: Callable
    eta: Callable | None = None
    eta_t: Callable | None = None
    name: str = "custom"

    def div(self, x, y):
        J = self.jac(x, y)
        return J[0][0] + J[1][1]

    def time_factor(self, t):
        t = np.asarray(t, dtype=float)
        if self.eta is None:
            return np.ones_like(t), np.zeros_like(t)
        return self.eta(t), self.eta_t(t)


def radial_multiplier(center=(0.0, 0.0)) -> MultiplierField:
    """m(x) = x - x0."""
    cx, cy = center

    def q(x, y):
        return x - cx, y - cy

    def jac(x, y):
        one, zero = np.ones_like(x), np.zeros_like(x)
        return ((one, zero), (zero, one))

    return MultiplierField(q, jac, name="radial")


def constant_multiplier(vec) -> MultiplierField:
    a, b = vec

    def q(x, y):
        return a * np.ones_like(x), b * np.ones_like(x)

    def jac(x, y):
        zero = np.zeros_like(x)
        return ((zero, zero), (zero, zero))

    return MultiplierField(q, jac, name="constant")


def time_bump(T: float, eps: float):
    """C^2 cutoff: 0 at t = 0 and t = T, 1 on [eps, T - eps]."""
    if not 0 < eps <= T / 2:
        raise ValueError("need 0 < eps <= T/2")

    def eta(t):
        return _smoothstep(t / eps) * _smoothstep((T - t) / eps)

    def eta_t(t):
        return (_smoothstep_d(t / eps) * _smoothstep((T - t) / eps)
                - _smoothstep(t / eps) * _smoothstep_d((T - t) / eps)) / eps

    return eta, eta_t


def collar_multiplier(domain: DomainSpec, T: float, eps: float | None = None) -> MultiplierField:
    """theta = eta(t) h(x): h = outward normal at the wall, 0 off the collar."""
    hw, w = domain.half_width, domain.collar_width

    def prof(d):
        return 1.0 - _smoothstep(d / w)

    def prof_d(d):
        return -_smoothstep_d(d / w) / w

    def q(x, y):
        return np.sign(x) * prof(hw - np.abs(x)), np.sign(y) * prof(hw - np.abs(y))

    def jac(x, y):
        zero = np.zeros_like(x)
        # d/dx [sign(x) prof(hw - |x|)] = -prof'(hw - |x|)
        return ((-prof_d(hw - np.abs(x)), zero), (zero, -prof_d(hw - np.abs(y))))

    eta, eta_t = time_bump(T, T / 4 if eps is None else eps)
    return MultiplierField(q, jac, eta, eta_t, name="collar")


def collar_cutoff(domain: DomainSpec, inner: float | None = None):
    """rho = squared smoothstep: 1 within ``inner`` of the wall, 0 off the collar."""
    w = domain.collar_width
    inner = 0.5 * w if inner is None else inner
    if not 0 < inner < w:
        raise ValueError("inner width must lie in (0, collar)")

    def rho(x, y):
        d = domain.wall_distance(x, y)
        return (1.0 - _smoothstep((d - inner) / (w - inner))) ** 2

    return rho


def check_multiplier(field: MultiplierField, domain: DomainSpec, T: float, n: int = 64) -> dict:
    """theta.nu >= 0 on the wall and theta(0) = theta(T) = 0 when time-dependent."""
    hw = domain.half_width
    s = np.linspace(-hw, hw, n)
    out = []
    for nx_, ny_ in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        x = np.full(n, nx_ * hw) if nx_ else s
        y = np.full(n, ny_ * hw) if ny_ else s
        qx, qy = field.q(x, y)
        out.append(np.min(qx * nx_ + qy * ny_))
    e0, _ = field.time_factor(np.array([0.0, T]))
    vanish = True if field.eta is None else bool(np.abs(e0).max() < 1e-14)
    return {"min_normal": float(min(out)), "normal_ok": min(out) >= -1e-14, "vanishes_at_ends": vanish}


# -- grid calculus at cell centres -----------------------------------------------
def cell_velocity(domain: DomainSpec, fields: np.ndarray):
    """Face fields (n_faces, ...) averaged to cell centres: (U, V) of shape (ny, nx, ...)."""
    u, v = domain.split(fields)
    rest = u.shape[2:]
    zu = np.zeros((domain.ny, 1) + rest)
    zv = np.zeros((1, domain.nx) + rest)
    uf = np.concatenate([zu, u, zu], axis=1)
    vf = np.concatenate([zv, v, zv], axis=0)
    return 0.5 * (uf[:, 1:] + uf[:, :-1]), 0.5 * (vf[1:] + vf[:-1])


def _wall_gradient(domain: DomainSpec, F: np.ndarray):
    """(dF/dx, dF/dy) at cell centres for F vanishing on the wall."""
    hw = domain.half_width
    xs = np.concatenate([[-hw], domain.x_centers, [hw]])
    ys = np.concatenate([[-hw], domain.y_centers, [hw]])
    pad = [(1, 1), (1, 1)] + [(0, 0)] * (F.ndim - 2)
    Fe = np.pad(F, pad)
    gy, gx = np.gradient(Fe, ys, xs, axis=(0, 1))
    return gx[1:-1, 1:-1], gy[1:-1, 1:-1]


def _free_gradient(domain: DomainSpec, P: np.ndarray):
    gy, gx = np.gradient(P, domain.dy, domain.dx, axis=(0, 1), edge_order=2)
    return gx, gy


def _bcast(a, like):
    return a.reshape(a.shape + (1,) * (like.ndim - a.ndim))


@dataclass(frozen=True)
class MultiplierForms:
    """Modal bilinear forms entering the multiplier identity for one field q."""

    flux: np.ndarray       # 1/2 int_dOmega (q.nu) d_nu e_j . d_nu e_k
    adv: np.ndarray        # (e_j, q . grad e_k)
    jac: np.ndarray        # int dq_k/dx_j d_k e^i d_j e^i (symmetrised)
    div_u: np.ndarray      # int div q e_j . e_k
    div_grad: np.ndarray   # int div q grad e_j : grad e_k
    pressure: np.ndarray   # int d_i p_j q_k d_k e_k'^i


def multiplier_forms(modes: StokesModes, field: MultiplierField) -> MultiplierForms:
    d = modes.domain
    ops = operators(d)
    E = modes.fields
    X, Y = d.cell_centers
    qx, qy = field.q(X, Y)
    J = field.jac(X, Y)
    dq = J[0][0] + J[1][1]
    U, V = cell_velocity(d, E)
    Ux, Uy = _wall_gradient(d, U)
    Vx, Vy = _wall_gradient(d, V)
    # pressures of the modes: L e_j - G p_j = -lam_j e_j
    P = np.column_stack([ops.solve_pressure(ops.div @ (ops.lap @ E[:, j])) for j in range(modes.count)])
    P = P.reshape(d.ny, d.nx, -1)
    Px, Py = _free_gradient(d, P)
    A = d.cell_area
    M = modes.count

    def pair(f, g, w=None):
        f = f.reshape(-1, M)
        g = g.reshape(-1, M)
        if w is not None:
            f = f * w.reshape(-1, 1)
        return f.T @ g * A

    b = lambda a: _bcast(a, U)  # noqa: E731
    adv_u = b(qx) * Ux + b(qy) * Uy
    adv_v = b(qx) * Vx + b(qy) * Vy
    adv = pair(U, adv_u) + pair(V, adv_v)
    # sum_{i,j,k} J[k][j] d_k e^i d_j e^i
    grads = ((Ux, Uy), (Vx, Vy))
    jac = np.zeros((M, M))
    for gi in grads:
        for k in range(2):
            for j in range(2):
                jac += pair(gi[k], gi[j], J[k][j])
    jac = 0.5 * (jac + jac.T)
    div_u = pair(U, U, dq) + pair(V, V, dq)
    div_grad = sum(pair(g, g, dq) for gi in grads for g in gi)
    pressure = pair(Px, adv_u) + pair(Py, adv_v)
    pts = modes.trace_points
    qnx, qny = field.q(pts[:, 0], pts[:, 1])
    qn = qnx * modes.trace_normals[:, 0] + qny * modes.trace_normals[:, 1]
    B = modes.traces
    flux = 0.5 * B.T @ ((modes.trace_weights * qn)[:, None] * B)
    return MultiplierForms(flux, adv, jac, div_u, div_grad, pressure)


def free_wave_trajectory(modes: StokesModes, a, b):
    """t -> (c, c_t) for the free wave from coefficients (a, b)."""
    om = modes.omega
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)

    def traj(t):
        wt = np.outer(np.atleast_1d(t), om)
        c, s = np.cos(wt), np.sin(wt)
        return a * c + (b / om) * s, -a * om * s + b * c

    return traj


def multiplier_identity_residual(modes: StokesModes, traj, T: float, field: MultiplierField,
                                 forcing=None, forms: MultiplierForms | None = None,
                                 points_per_period: int = 16) -> float:
    """|LHS - RHS| / E(0) for u_tt - Lap u + grad p = h with multiplier eta q . grad u.

    ``traj(t) -> (c, c_t)`` gives modal coefficients of a solution; ``forcing``,
    if given, maps t to modal coefficients of h (a field in the span of the
    modes, so the pressure is that of the modal solution).
    """
    if forms is None:
        forms = multiplier_forms(modes, field)
    t, w = time_quadrature(T, float(modes.omega.max()), points_per_period)
    c, ct = traj(t)
    eta, eta_t = field.time_factor(t)

    def quad(x, B, y, wt):
        return float(np.sum(wt * np.einsum("ni,ij,nj->n", x, B, y)))

    lhs = quad(c, forms.flux, c, w * eta)
    ends = np.array([0.0, T])
    ce, cte = traj(ends)
    ee, _ = field.time_factor(ends)
    rhs = (ee[1] * cte[1] @ forms.adv @ ce[1] - ee[0] * cte[0] @ forms.adv @ ce[0])
    rhs -= quad(ct, forms.adv, c, w * eta_t)
    rhs += quad(c, forms.jac, c, w * eta)
    rhs += 0.5 * (quad(ct, forms.div_u, ct, w * eta) - quad(c, forms.div_grad, c, w * eta))
    rhs += quad(c, forms.pressure, c, w * eta)
    if forcing is not None:
        rhs -= quad(forcing(t), forms.adv, c, w * eta)
    c0, ct0 = traj(np.array([0.0]))
    E0 = float(np.sum(modes.lam * c0[0] ** 2) + np.sum(ct0[0] ** 2))
    if E0 == 0.0:
        return abs(lhs - rhs)
    return abs(lhs - rhs) / E0


def single_mode_multiplier_residual(domain: DomainSpec, j: int, T: float,
                                    field: MultiplierField | None = None) -> float:
    """Residual for the free wave started from e_j at rest."""
    from .stokesop import eig_modes

    m = eig_modes(domain, j + 1).filtered(j + 1)
    m = StokesModes(domain, m.lam[j:], m.fields[:, j:], m.traces[:, j:], m.trace_weights,
                    m.trace_normals, m.trace_points)
    field = radial_multiplier() if field is None else field
    return multiplier_identity_residual(m, free_wave_trajectory(m, [1.0], [0.0]), T, field)


def pressure_pairings(domain: DomainSpec, p: np.ndarray, U: np.ndarray, V: np.ndarray,
                      field: MultiplierField):
    """(<grad p, m.grad phi>, <grad p, phi.grad m>, <grad p, phi div m>) on cell centres.

    ``p``, ``U``, ``V`` are cell-centre samples; phi vanishes on the wall.
    """
    X, Y = domain.cell_centers
    mx, my = field.q(X, Y)
    J = field.jac(X, Y)
    px, py = _free_gradient(domain, p)
    Ux, Uy = _wall_gradient(domain, U)
    Vx, Vy = _wall_gradient(domain, V)
    A = domain.cell_area
    t1 = np.sum(px * (mx * Ux + my * Uy) + py * (mx * Vx + my * Vy)) * A
    # d_k p phi^i d_i m_k
    t2 = np.sum(px * (U * J[0][0] + V * J[0][1]) + py * (U * J[1][0] + V * J[1][1])) * A
    t3 = np.sum((px * U + py * V) * (J[0][0] + J[1][1])) * A
    return float(t1), float(t2), float(t3)


def pressure_identity_residual(domain: DomainSpec, p, U, V, field: MultiplierField) -> float:
    """|<grad p, m.grad phi> - <grad p, phi.grad m> + <grad p, phi div m>|, normalised.

    Integration by parts with div phi = 0 and phi = 0 on the wall gives
    ``<grad p, m.grad phi> = <grad p, phi.grad m> - <grad p, phi div m>``.
    """
    t1, t2, t3 = pressure_pairings(domain, p, U, V, field)
    scale = abs(t1) + abs(t2) + abs(t3)
    return abs(t1 - t2 + t3) / scale if scale > 0 else 0.0


def manufactured_pressure_case(domain: DomainSpec):
    """Smooth (p, phi, m) with phi = curl(sin^2 sin^2) vanishing with its flux on the wall."""
    hw = domain.half_width
    X, Y = domain.cell_centers
    k = math.pi / (2 * hw)
    sx, sy = np.sin(k * (X + hw)), np.sin(k * (Y + hw))
    cx, cy = np.cos(k * (X + hw)), np.cos(k * (Y + hw))
    # psi = sx^2 sy^2; phi = (d_y psi, -d_x psi)
    U = 2 * k * sx**2 * sy * cy
    V = -2 * k * sx * cx * sy**2
    p = np.cos(math.pi * X) * np.sin(2 * math.pi * Y) + X * Y**2

    def q(x, y):
        return x + y**2, np.sin(y) * x

    def jac(x, y):
        return ((np.ones_like(x), 2 * y), (np.sin(y), x * np.cos(y)))

    return p, U, V, MultiplierField(q, jac, name="manufactured")


# -- observability constants ------------------------------------------------------
@dataclass
class ObservabilityReport:
    T: float
    M_f: int
    kind: str
    measured: float
    bound: float = math.nan
    ratios: np.ndarray = dc_field(default_factory=lambda: np.zeros(0), repr=False)
    passed: bool = True
    violations: int = 0
    notes: str = ""


def _unit_samples(n_dim: int, n: int, rng: np.random.Generator) -> np.ndarray:
    X = rng.standard_normal((n, n_dim))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def flux_gramian(modes: StokesModes, T: float, M_f: int):
    """Boundary flux Gramian in V x H energy coordinates."""
    return assemble_wave_gramian(modes, T, None, M_f, observe="position_vh",
                                 weight=modes.flux_matrix())


def boundary_constant(R0: float, T: float) -> float:
    if T <= 2 * R0:
        raise AdmissibilityError(f"T={T} <= 2 R0={2 * R0:.4f}: boundary constant undefined")
    return R0 / (2 * (T - 2 * R0))


def boundary_observability_check(modes: StokesModes, T: float, M_f: int, samples: int = 100,
                                 rng: np.random.Generator | None = None,
                                 slack: float = 0.15) -> ObservabilityReport:
    """E(0) <= R0/(2(T - 2R0)) * boundary flux, on random filtered data."""
    R0 = modes.domain.R0
    C = boundary_constant(R0, T)
    rng = np.random.default_rng(0) if rng is None else rng
    G = flux_gramian(modes, T, M_f).matrix
    X = _unit_samples(2 * M_f, samples, rng)
    flux = np.einsum("ni,ij,nj->n", X, G, X)
    ratios = 1.0 / flux
    limit = C * (1 + slack)
    bad = int(np.sum(ratios > limit))
    worst = 1.0 / np.linalg.eigvalsh(G)[0]
    note = "bound vacuous" if not math.isfinite(C) or C > 1e6 else ""
    return ObservabilityReport(T, M_f, "boundary", float(ratios.max()), C, ratios, bad == 0, bad,
                               f"{note} worst-case ratio {worst:.4g}".strip())


def direct_inequality_ratio(modes: StokesModes, T: float, M_f: int, samples: int = 100,
                            rng: np.random.Generator | None = None, data=None) -> float:
    """max flux / E(0) over samples (the hidden-regularity constant, h = 0).

    ``data`` may hold rows of scaled V x H coordinates; zero rows are skipped.
    """
    G = flux_gramian(modes, T, M_f).matrix
    if data is None:
        rng = np.random.default_rng(0) if rng is None else rng
        data = _unit_samples(2 * M_f, samples, rng)
    data = np.atleast_2d(np.asarray(data, dtype=float))
    E = np.sum(data**2, axis=1)
    keep = E > 0
    if not np.any(keep):
        return math.nan
    flux = np.einsum("ni,ij,nj->n", data[keep], G, data[keep])
    return float(np.max(flux / E[keep]))


def internal_observability_constant(modes: StokesModes, T: float, mask: ControlMask | None,
                                    M_f: int, mode: str = "velocity") -> float:
    """1/lam_min of the interior Gramian; inf when it is singular.

    ``velocity``: data in V x H, observe phi_t.  ``position``: data in H x V',
    observe phi.  ``composite``: data in V x H, observe phi_t and phi with
    equal weights.
    """
    if mode == "velocity":
        G = assemble_wave_gramian(modes, T, mask, M_f, observe="velocity").matrix
    elif mode == "position":
        G = assemble_wave_gramian(modes, T, mask, M_f, observe="position").matrix
    elif mode == "composite":
        G = (assemble_wave_gramian(modes, T, mask, M_f, observe="velocity").matrix
             + assemble_wave_gramian(modes, T, mask, M_f, observe="position_vh").matrix)
    else:
        raise ValueError(f"unknown observation mode {mode!r}")
    ev = np.linalg.eigvalsh(G)
    if ev[0] <= 1e-14 * ev[-1]:
        return math.inf
    return float(1.0 / ev[0])


def potential_permutation(M_f: int) -> np.ndarray:
    """Signed permutation P with G_velocity = P^T G_position P (phi = psi_t)."""
    P = np.zeros((2 * M_f, 2 * M_f))
    I = np.eye(M_f)
    P[:M_f, M_f:] = I          # p' = Q
    P[M_f:, :M_f] = -I         # q' = -P
    return P


@dataclass
class ControlTimeReport:
    T_hat: float | None
    T_grid: np.ndarray
    ratio: np.ndarray
    ratio_refined: np.ndarray
    threshold: float

    @property
    def beyond_grid(self) -> bool:
        return self.T_hat is None


def empirical_control_time(modes: StokesModes, mask: ControlMask | None, M_f: int, T_grid,
                           threshold: float = 1e-8, M_refined: int | None = None) -> ControlTimeReport:
    """Smallest T with lam_min/lam_max above ``threshold`` for M_f and a refined filter."""
    T_grid = np.asarray(T_grid, dtype=float)
    if np.any(np.diff(T_grid) <= 0):
        raise ValueError("T grid must be ascending")
    M2 = min(modes.count, M_refined if M_refined is not None else int(1.5 * M_f))

    def ratio(T, M):
        ev = assemble_wave_gramian(modes, T, mask, M, check=False).eigenvalues
        return ev[0] / ev[-1]

    r1 = np.array([ratio(T, M_f) for T in T_grid])
    r2 = np.array([ratio(T, M2) for T in T_grid])
    ok = (r1 > threshold) & (r2 > threshold)
    T_hat = float(T_grid[np.argmax(ok)]) if ok.any() else None
    return ControlTimeReport(T_hat, T_grid, r1, r2, threshold)


def observability_sweep(modes: StokesModes, mask: ControlMask, M_f: int, T_list) -> list[dict]:
    rows = []
    for T in T_list:
        row = {"T": float(T),
               "C_velocity": internal_observability_constant(modes, T, mask, M_f, "velocity"),
               "C_position": internal_observability_constant(modes, T, mask, M_f, "position"),
               "C_composite": internal_observability_constant(modes, T, mask, M_f, "composite"),
               "C_direct": direct_inequality_ratio(modes, T, M_f)}
        G = flux_gramian(modes, T, M_f).matrix
        row["C_boundary_measured"] = float(1.0 / np.linalg.eigvalsh(G)[0])
        row["C_boundary_bound"] = (boundary_constant(modes.domain.R0, T)
                                   if T > 2 * modes.domain.R0 else math.inf)
        rows.append(row)
    return rows
