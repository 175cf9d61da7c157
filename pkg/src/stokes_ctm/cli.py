"""Command-line front end.

Every subcommand writes CSV files plus ``manifest.json`` (resolved config,
seed, outputs) into ``--out``.  Exit codes: 0 success, 2 configuration
error, 3 numerical failure; failures also write ``error.json``.
"""

from __future__ import annotations

import argparse
import json
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from .config import ExperimentConfig, load_config
from .errors import (AdmissibilityError, ConfigError, ControlTimeError, ConvergenceError,
                     GridError)
from .experiments import (METHODS, CostCurve, cost_sweep, filtered_datum, kernel_rows, setup,
                          transmute_rows, vnorm_sq, write_csv)
from .hum import stokes_null_control_direct, wave_null_control
from .kernel import build_kernel
from .observability import boundary_observability_check, observability_sweep
from .snapshot import write_snapshot

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _modes(cfg, out):
    s = setup(cfg)
    write_snapshot(out / "modes_fields.snap", s.modes.fields)
    rows = [dict(j=j, lam=float(l)) for j, l in enumerate(s.modes.lam)]
    return [write_csv(out / "modes.csv", rows, ("j", "lam")), out / "modes_fields.snap"]


def _wave_control(cfg, out):
    s = setup(cfg)
    rng = np.random.default_rng(cfg.seed)
    fm = s.modes.filtered(cfg.M_f)
    rows = []
    for i in range(cfg.samples):
        u0 = fm.synthesize(rng.standard_normal(cfg.M_f) / np.sqrt(fm.lam))
        u1 = fm.synthesize(rng.standard_normal(cfg.M_f))
        ctrl = wave_null_control(s.modes, u0, u1, cfg.T_wave, s.mask, cfg.M_f, tol=cfg.tol,
                                 cg_tol=cfg.cg_tol)
        energy = float(np.sum(fm.lam * fm.coefficients(u0) ** 2) + np.sum(fm.coefficients(u1) ** 2))
        rows.append(dict(sample=i, T=cfg.T_wave, terminal=ctrl.terminal, cost=ctrl.cost,
                         cost_ratio=ctrl.cost / energy, iterations=ctrl.info["iterations"]))
    return [write_csv(out / "wave_control.csv", rows,
                      ("sample", "T", "terminal", "cost", "cost_ratio", "iterations"))]


def _direct_control(cfg, out):
    s = setup(cfg)
    y0 = filtered_datum(s, cfg.M_f, np.random.default_rng(cfg.seed))
    rows = []
    for T in cfg.T_list:
        c = stokes_null_control_direct(s.modes, y0, T, s.mask, cfg.M_f, tol=cfg.tol)
        rows.append(dict(T=T, cost=c.cost, cost_ratio=c.cost / vnorm_sq(s, y0, cfg.M_f),
                         terminal=c.terminal, eta=c.info["eta"]))
    return [write_csv(out / "direct_control.csv", rows, ("T", "cost", "cost_ratio", "terminal", "eta"))]


def _build_kernel(cfg, out):
    rows = kernel_rows(cfg)
    paths = [write_csv(out / "kernels.csv", rows,
                       ("T", "L", "norm_sq", "terminal_ratio", "eta", "max_boundary"))]
    k = build_kernel(cfg.L, cfg.T_list[0], cfg.n_s, cfg.n_t, cfg.kernel_tol)
    paths.append(write_snapshot(out / f"kernel_T{cfg.T_list[0]:g}.snap", k.values))
    return paths


def _transmute(cfg, out):
    rows = transmute_rows(cfg)
    return [write_csv(out / "transmute.csv", rows,
                      ("T", "L", "terminal", "cost", "cost_ratio", "residual", "divergence",
                       "sifting", "kernel_norm_sq"))]


def _cost_sweep(cfg, out, methods=METHODS):
    curve = cost_sweep(cfg, methods)
    path = curve.to_csv(out / "cost_sweep.csv")
    _print_fits(curve)
    return [path], {"wall_time": curve.wall_time}


def _observability(cfg, out):
    s = setup(cfg)
    rows = observability_sweep(s.modes, s.mask, cfg.M_f, cfg.T_obs)
    cols = ("T", "C_velocity", "C_position", "C_composite", "C_direct", "C_boundary_measured",
            "C_boundary_bound")
    paths = [write_csv(out / "observability.csv", rows, cols)]
    rep = boundary_observability_check(s.modes, cfg.T_wave, cfg.M_f, 100,
                                       np.random.default_rng(cfg.seed))
    brow = [dict(T=rep.T, measured=rep.measured, bound=rep.bound, violations=rep.violations)]
    paths.append(write_csv(out / "boundary_check.csv", brow, ("T", "measured", "bound", "violations")))
    return paths


def _print_fits(curve: CostCurve):
    for m in sorted({r["method"] for r in curve.rows}):
        T, c = curve.method(m)
        if T.size < 4:
            print(f"{m}: fewer than 4 horizons, no fit")
            continue
        if np.any(c <= 0):
            print(f"{m}: non-positive cost rows, no fit")
            continue
        rep = curve.fits(m)
        for name, f in (("1/T", rep.inv_T), ("1/T^4", rep.inv_T4)):
            print(f"{m}: log cost = {f.intercept:.4g} + {f.slope:.4g} * {name}  "
                  f"R2={f.r2:.4f} rss={f.rss:.4g}")
        print(f"{m}: preferred model {rep.preferred}")


def _report(cfg, out, input_path=None):
    path = Path(input_path) if input_path else out / "cost_sweep.csv"
    if not path.is_file():
        raise ConfigError(f"cost CSV {path} not found")
    _print_fits(CostCurve.from_csv(path))
    return []


COMMANDS = {
    "modes": _modes,
    "wave-control": _wave_control,
    "direct-control": _direct_control,
    "build-kernel": _build_kernel,
    "transmute": _transmute,
    "cost-sweep": _cost_sweep,
    "observability": _observability,
    "report": _report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stokes-ctm", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=sorted(COMMANDS))
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--T", type=float, nargs="+", help="horizons (overrides T_list)")
    p.add_argument("--L", type=float, help="pseudo-time half-length")
    p.add_argument("--modes", type=int, help="filtered mode count M_f")
    p.add_argument("--methods", nargs="+", choices=METHODS, help="cost-sweep methods")
    p.add_argument("--input", help="cost CSV for the report subcommand")
    return p


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig().validate()
    over = dict(out=args.out, seed=args.seed, threads=args.threads, L=args.L, M_f=args.modes)
    if args.T:
        over["T_list"] = tuple(args.T)
    return cfg.with_overrides(**over)


def _error(out, code, exc, subcommand):
    rec = {"status": code, "subcommand": subcommand, "error": type(exc).__name__,
           "message": str(exc)}
    res = getattr(exc, "residual", None)
    if res is not None:
        rec["residual"] = res
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(json.dumps(rec, indent=2))
        except OSError:
            pass
    print(json.dumps(rec), file=sys.stderr)
    return code


def run(subcommand: str, cfg: ExperimentConfig, **kw) -> int:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        res = COMMANDS[subcommand](cfg, out, **kw)
        paths, extra = (res if isinstance(res, tuple) else (res, {}))
        manifest = {"subcommand": subcommand, "config": cfg.to_dict(), "seed": cfg.seed,
                    "outputs": [str(Path(p).name) for p in paths],
                    "versions": {"python": platform.python_version(), "numpy": np.__version__,
                                 "scipy": scipy.__version__},
                    "elapsed_s": time.perf_counter() - t0, **extra}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=float))
        return EXIT_OK
    except (ConfigError, GridError, AdmissibilityError) as exc:
        return _error(out, EXIT_CONFIG, exc, subcommand)
    except (ConvergenceError, ControlTimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return _error(out, EXIT_NUMERIC, exc, subcommand)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
    except (ConfigError, GridError, AdmissibilityError, TypeError) as exc:
        return _error(Path(args.out) if args.out else None, EXIT_CONFIG, exc, args.subcommand)
    kw = {}
    if args.subcommand == "report":
        kw["input_path"] = args.input
    if args.subcommand == "cost-sweep" and args.methods:
        kw["methods"] = tuple(args.methods)
    return run(args.subcommand, cfg, **kw)


if __name__ == "__main__":
    sys.exit(main())
