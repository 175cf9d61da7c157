"""Experiment runners shared by the command line and the scripts."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .domain import ControlMask, DomainSpec, build_domain, control_mask
from .fitting import CostModelReport, fit_cost_models
from .hum import heat1d_null_control_cost, stokes_null_control_direct
from .kernel import build_kernel
from .stokesop import StokesModes, eig_modes
from .transmute import transmute, verify_transmuted

METHODS = ("direct-stokes", "transmuted", "direct-heat-1d")
COST_COLUMNS = ("T", "method", "cost", "terminal", "iterations")


@dataclass(frozen=True)
class Setup:
    domain: DomainSpec
    modes: StokesModes
    mask: ControlMask


@lru_cache(maxsize=4)
def _setup(half_width, collar_width, nx, M) -> Setup:
    d = build_domain(half_width, collar_width, nx)
    return Setup(d, eig_modes(d, M), control_mask(d))


def setup(cfg: ExperimentConfig) -> Setup:
    return _setup(cfg.half_width, cfg.collar_width, cfg.nx, cfg.M)


def filtered_datum(s: Setup, M_f: int, rng: np.random.Generator) -> np.ndarray:
    """Random field in the span of the first M_f modes with ||y0||_V = 1."""
    fm = s.modes.filtered(M_f)
    a = rng.standard_normal(M_f)
    a /= math.sqrt(np.sum(fm.lam * a**2))
    return fm.synthesize(a)


def vnorm_sq(s: Setup, y0, M_f: int) -> float:
    fm = s.modes.filtered(M_f)
    return float(np.sum(fm.lam * fm.coefficients(y0) ** 2))


# -- csv -------------------------------------------------------------------
def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path, rows, columns) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        conv = {}
        for k, v in r.items():
            try:
                conv[k] = float(v)
            except ValueError:
                conv[k] = v
        out.append(conv)
    return out


# -- cost curves -------------------------------------------------------------
@dataclass
class CostCurve:
    rows: list = field(default_factory=list)
    wall_time: dict = field(default_factory=dict)

    def method(self, name):
        sel = [r for r in self.rows if r["method"] == name]
        return np.array([r["T"] for r in sel]), np.array([r["cost"] for r in sel])

    def fits(self, name) -> CostModelReport:
        T, c = self.method(name)
        return fit_cost_models(T, c)

    def to_csv(self, path) -> Path:
        return write_csv(path, self.rows, COST_COLUMNS)

    @classmethod
    def from_csv(cls, path) -> "CostCurve":
        rows = read_csv(path)
        for r in rows:
            if r["cost"] < 0:
                raise ValueError("negative cost row")
        return cls(rows)


def cost_point(cfg: ExperimentConfig, T: float, method: str, y0) -> dict:
    s = setup(cfg)
    t0 = time.perf_counter()
    if method == "transmuted":
        sol = transmute(s.modes, y0, T, cfg.L, s.mask, cfg.M_f, n_s=cfg.n_s, n_t=cfg.n_t,
                        refine=cfg.refine, kernel_tol=cfg.kernel_tol, tol=cfg.tol)
        cost = sol.cost / vnorm_sq(s, y0, cfg.M_f)
        row = dict(T=T, method=method, cost=cost, terminal=sol.terminal, iterations=0)
    elif method == "direct-stokes":
        ctrl = stokes_null_control_direct(s.modes, y0, T, s.mask, cfg.M_f, tol=cfg.tol)
        level = int(round(-math.log10(ctrl.info["eta"]) / 2))
        row = dict(T=T, method=method, cost=ctrl.cost / vnorm_sq(s, y0, cfg.M_f),
                   terminal=ctrl.terminal, iterations=level)
    elif method == "direct-heat-1d":
        cost, term, _ = heat1d_null_control_cost(T, cfg.half_width, cfg.collar_width, cfg.M_f,
                                                 tol=cfg.tol)
        row = dict(T=T, method=method, cost=cost, terminal=term, iterations=0)
    else:
        raise ValueError(f"unknown method {method!r}")
    row["wall_time"] = time.perf_counter() - t0
    return row


def cost_sweep(cfg: ExperimentConfig, methods=METHODS) -> CostCurve:
    """One row per (T, method); the same datum for every horizon."""
    s = setup(cfg)
    y0 = filtered_datum(s, cfg.M_f, np.random.default_rng(cfg.seed))
    jobs = [(T, m) for m in methods for T in cfg.T_list]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        rows = list(pool.map(lambda job: cost_point(cfg, job[0], job[1], y0), jobs))
    curve = CostCurve()
    for r in rows:
        curve.wall_time[f"{r['method']}@{r['T']:g}"] = r.pop("wall_time")
        curve.rows.append(r)
    return curve


def transmute_rows(cfg: ExperimentConfig) -> list[dict]:
    s = setup(cfg)
    y0 = filtered_datum(s, cfg.M_f, np.random.default_rng(cfg.seed))

    def one(T):
        sol = transmute(s.modes, y0, T, cfg.L, s.mask, cfg.M_f, n_s=cfg.n_s, n_t=cfg.n_t,
                        refine=cfg.refine, kernel_tol=cfg.kernel_tol, tol=cfg.tol)
        rep = verify_transmuted(sol)
        return dict(T=T, L=cfg.L, terminal=sol.terminal, cost=sol.cost,
                    cost_ratio=sol.cost / vnorm_sq(s, y0, cfg.M_f),
                    residual=rep.stokes, divergence=rep.divergence,
                    sifting=sol.info["sifting_error"], kernel_norm_sq=sol.info["kernel_norm_sq"])

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(one, cfg.T_list))


def kernel_rows(cfg: ExperimentConfig) -> list[dict]:
    def one(T):
        k = build_kernel(cfg.L, T, cfg.n_s, cfg.n_t, cfg.kernel_tol)
        return dict(T=T, L=cfg.L, norm_sq=k.norm_sq, terminal_ratio=k.terminal_ratio,
                    eta=k.eta, max_boundary=float(np.abs(k.boundary).max()))

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(one, cfg.T_list))
