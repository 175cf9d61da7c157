"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed even
when output capture is on).
"""

import math
import time

import numpy as np
import pytest
import scipy.linalg as sla

from stokes_ctm.config import ExperimentConfig
from stokes_ctm.domain import build_domain, control_mask, h_norm
from stokes_ctm.evolve import (WaveState, energy_balance_residual, heat_modal,
                               mac_step_reference, stokes_evolve, wave_evolve, wave_modal)
from stokes_ctm.experiments import cost_sweep
from stokes_ctm.hum import (assemble_wave_gramian, cg_solve, resimulate_wave,
                            wave_null_control)
from stokes_ctm.kernel import build_kernel, early_time_gaussian_error, fit_kernel_norms
from stokes_ctm.observability import (boundary_observability_check, manufactured_pressure_case,
                                      pressure_identity_residual,
                                      single_mode_multiplier_residual)
from stokes_ctm.stokesop import eig_modes, leray_project, operators, random_divfree
from stokes_ctm.transmute import regularize_then_control, transmute, verify_transmuted

# max cost / (||u0||_V^2 + |u1|_H^2) over the 20 criterion-3 data (rng seed 2024)
WAVE_COST_CONSTANT = 3.540


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


def grid_order(values, grids):
    return float(np.polyfit(np.log(1.0 / np.asarray(grids, float)), np.log(values), 1)[0])


def test_criterion_01_structural_invariants(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    d = build_domain(0.5, 0.15, 32)
    modes = eig_modes(d, 200)
    mask = control_mask(d)
    ops = operators(d)
    raw = rng.standard_normal(d.n_faces)
    P = leray_project(d, raw)
    idem = np.abs(leray_project(d, P) - P).max() / np.abs(P).max()
    G = assemble_wave_gramian(modes, 2.0, mask, 40).matrix
    sym = np.abs(G - G.T).max()
    orth = np.abs(modes.fields.T @ modes.fields * d.cell_area - np.eye(200)).max()
    y0 = random_divfree(d, rng)
    y0 = modes.synthesize(modes.coefficients(y0))
    g = rng.standard_normal((d.n_faces, 33))
    times = np.linspace(0, 0.5, 33)
    y = stokes_evolve(modes, y0, 0.5, g, times, mask).velocity
    w = wave_evolve(modes, WaveState(0.0, y0, y0), 1.0, g, np.linspace(0, 1, 33), mask)
    div = max(np.abs(ops.div @ v).max() for v in (P, y, w.u, w.ut))
    elapsed = time.perf_counter() - t0
    ok = idem <= 1e-10 and sym <= 1e-12 and orth <= 1e-10 and div <= 1e-10 and elapsed < 300
    report(capsys, 1, ok, f"idempotence {idem:.1e}, Gramian asymmetry {sym:.1e}, "
                          f"orthonormality {orth:.1e}, divergence {div:.1e}, {elapsed:.1f} s")


def test_criterion_02_energy_identity(capsys, modes32, mask32):
    rng = np.random.default_rng(2)
    W = modes32.mask_matrix(mask32)
    times = np.linspace(0.0, 2.5, 257)
    c = 10 * rng.standard_normal((257, 200))
    a0 = rng.standard_normal(200) / modes32.omega
    b0 = rng.standard_normal(200)
    res = energy_balance_residual(modes32.omega, a0, b0, times, c, W)
    report(capsys, 2, res <= 1e-8, f"energy balance residual {res:.2e} E(0) (limit 1e-8)")


def test_criterion_03_wave_null_control(capsys, modes32, mask32):
    rng = np.random.default_rng(2024)
    fm = modes32.filtered(40)
    ratios, terms = [], []
    for _ in range(20):
        u0 = fm.synthesize(rng.standard_normal(40) / np.sqrt(fm.lam))
        u1 = fm.synthesize(rng.standard_normal(40))
        ctrl = wave_null_control(modes32, u0, u1, 2.0, mask32, 40)
        a0, b0 = fm.coefficients(u0), fm.coefficients(u1)
        x, v = resimulate_wave(ctrl, u0, u1)
        scale = math.sqrt(np.sum(fm.lam * a0**2)) + math.sqrt(np.sum(b0**2))
        terms.append(max(ctrl.terminal, math.sqrt(np.sum(x**2) + np.sum(v**2)) / scale))
        ratios.append(ctrl.cost / (np.sum(fm.lam * a0**2) + np.sum(b0**2)))
    C = max(ratios)
    ok = max(terms) <= 1e-4 and abs(C / WAVE_COST_CONSTANT - 1) <= 0.10
    report(capsys, 3, ok, f"max terminal {max(terms):.1e}, cost constant {C:.4f} "
                          f"(frozen {WAVE_COST_CONSTANT} +-10%)")


def test_criterion_04_boundary_observability(capsys, modes32):
    rep = boundary_observability_check(modes32, 2.0, 40, 100, np.random.default_rng(4))
    ok = rep.violations == 0 and rep.bound == pytest.approx(0.6036, abs=5e-5)
    report(capsys, 4, ok, f"max E(0)/flux {rep.measured:.4f} vs 1.15 x {rep.bound:.4f}, "
                          f"{rep.violations} violations")


def test_criterion_05_kernel(capsys):
    L, horizons = 2.5, (0.2, 0.3, 0.5, 0.8, 1.2)
    ks = [build_kernel(L, T, 1001, 257) for T in horizons]
    mid = ks[0].s.size // 2
    delta = all(k.values[0, mid] == 1 / k.ds
                and np.count_nonzero(np.abs(k.values[0]) > 1e-12 / k.ds) == 1 for k in ks)
    term = max(k.row_norm(-1) / k.row_norm(0) for k in ks)
    gauss = max(early_time_gaussian_error(k) for k in ks)
    fit = fit_kernel_norms(L, horizons, [k.norm_sq for k in ks]).fit
    ok = delta and term <= 1e-6 and gauss <= 0.02 and fit.r2 >= 0.95 and fit.slope > 0
    report(capsys, 5, ok, f"delta start {delta}, terminal {term:.1e}, Gaussian error {gauss:.2%}, "
                          f"fit slope {fit.slope:.3f} R2 {fit.r2:.4f}")


def test_criterion_06_transmutation(capsys, modes32, mask32):
    fm = modes32.filtered(40)
    y0 = fm.synthesize(np.random.default_rng(6).standard_normal(40))
    worst_term, orders = 0.0, []
    for T in (0.3, 0.5, 0.8):
        k = build_kernel(2.5, T, 1001, 129)
        res = []
        for r in (8, 16, 32):
            sol = transmute(modes32, y0, T, 2.5, mask32, 40, kernel=k, refine=r)
            worst_term = max(worst_term, sol.terminal)
            res.append(verify_transmuted(sol).stokes)
        orders.append(math.log2(res[-2] / res[-1]))
    ok = worst_term <= 1e-4 and min(orders) >= 1.9
    report(capsys, 6, ok, f"max terminal {worst_term:.1e}, residual orders "
                          + ", ".join(f"{o:.2f}" for o in orders))


def test_criterion_07_cost_scaling(capsys, tmp_path):
    t0 = time.perf_counter()
    cfg = ExperimentConfig().with_overrides(out=str(tmp_path))
    curve = cost_sweep(cfg, ("transmuted",))
    rep = curve.fits("transmuted")
    elapsed = time.perf_counter() - t0
    T, cost = curve.method("transmuted")
    ok = (rep.inv_T.r2 >= 0.9 and rep.inv_T.rss < rep.inv_T4.rss and elapsed < 1800
          and np.all(np.diff(cost) < 0))
    report(capsys, 7, ok, f"1/T fit R2 {rep.inv_T.r2:.4f} rss {rep.inv_T.rss:.3g}; "
                          f"1/T^4 rss {rep.inv_T4.rss:.3g}; {elapsed:.1f} s")


def test_criterion_08_rough_data(capsys, modes32, mask32):
    rng = np.random.default_rng(8)
    violations, worst = 0, 0.0
    for _ in range(10):
        y0 = modes32.synthesize(rng.standard_normal(200))
        for eps in (0.05, 0.1, 0.2):
            sol = regularize_then_control(modes32, y0, eps, 0.5, 2.5, mask32, 40)
            violations += not sol.info["smoothing_ok"]
            worst = max(worst, sol.terminal)
    ok = violations == 0 and worst <= 1e-4
    report(capsys, 8, ok, f"{violations} smoothing violations, max terminal {worst:.1e}")


def test_criterion_09_identity_residuals(capsys):
    grids = (24, 32, 48)
    mult, press = [], []
    for n in grids:
        d = build_domain(0.5, 0.15, n)
        mult.append(single_mode_multiplier_residual(d, 0, 1.0))
        p, U, V, f = manufactured_pressure_case(d)
        press.append(pressure_identity_residual(d, p, U, V, f))
    om, op = grid_order(mult, grids), grid_order(press, grids)
    report(capsys, 9, om >= 0.9 and op >= 0.9,
           f"multiplier order {om:.2f}, pressure order {op:.2f}")


def test_criterion_10_oracles(capsys, modes32, mask32, modes16):
    rng = np.random.default_rng(10)
    leray = 0.0
    for n in (8, 12, 16):
        d = build_domain(0.5, 0.25, n)
        raw = rng.standard_normal(d.n_faces)
        D = operators(d).div.toarray()[1:]
        m = D.shape[0]
        K = np.block([[np.eye(d.n_faces), D.T], [D, np.zeros((m, m))]])
        ref = sla.solve(K, np.concatenate([raw, np.zeros(m)]))[: d.n_faces]
        leray = max(leray, np.abs(leray_project(d, raw) - ref).max())
    cg = 0.0
    for M_f in (20, 40, 60):
        G = assemble_wave_gramian(modes32, 2.0, mask32, M_f)
        b = rng.standard_normal(2 * M_f)
        x = sla.solve(G.matrix, b, assume_a="pos")
        cg = max(cg, np.abs(cg_solve(G, b, tol=1e-13).coef - x).max() / np.abs(x).max())
    d = modes16.domain
    y0 = modes16.synthesize(np.concatenate([rng.standard_normal(20), np.zeros(40)]))
    exact = stokes_evolve(modes16, y0, 0.02).velocity
    e_par = []
    for n in (8, 16, 32):
        y = y0
        for _ in range(n):
            y = mac_step_reference(d, "parabolic", y, 0.02 / n)
        e_par.append(h_norm(d, y - exact))
    a0 = np.concatenate([rng.standard_normal(10) / modes16.omega[:10], np.zeros(50)])
    b0 = np.concatenate([rng.standard_normal(10), np.zeros(50)])
    xe, _ = wave_modal(modes16.omega, a0, b0, 0.5)
    e_hyp = []
    for n in (20, 40, 80):
        u, w = modes16.synthesize(a0), modes16.synthesize(b0)
        for _ in range(n):
            u, w = mac_step_reference(d, "hyperbolic", (u, w), 0.5 / n)
        e_hyp.append(h_norm(d, u - modes16.synthesize(xe)))
    p_par = math.log2(e_par[-2] / e_par[-1])
    p_hyp = math.log2(e_hyp[-2] / e_hyp[-1])
    ok = leray <= 1e-8 and cg <= 1e-8 and p_par >= 0.9 and p_hyp >= 1.9
    report(capsys, 10, ok, f"Leray vs KKT {leray:.1e}, CG vs dense {cg:.1e}, "
                           f"implicit Euler order {p_par:.2f}, midpoint order {p_hyp:.2f}")
