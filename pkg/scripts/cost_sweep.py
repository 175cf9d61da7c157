"""Control cost versus horizon for the transmuted, direct Stokes and 1D heat controls."""

import argparse
from pathlib import Path

from stokes_ctm.config import ExperimentConfig, load_config
from stokes_ctm.experiments import METHODS, cost_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--out", default="runs/cost_sweep")
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--methods", nargs="+", default=list(METHODS), choices=METHODS)
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = cfg.with_overrides(out=args.out, threads=args.threads)
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    curve = cost_sweep(cfg, tuple(args.methods))
    curve.to_csv(Path(cfg.out) / "cost_sweep.csv")
    for m in args.methods:
        T, c = curve.method(m)
        print(m, " ".join(f"{t:g}:{v:.3e}" for t, v in zip(T, c)))
        rep = curve.fits(m)
        print(f"  1/T   R2={rep.inv_T.r2:.4f} rss={rep.inv_T.rss:.4g} slope={rep.inv_T.slope:.4g}")
        print(f"  1/T^4 R2={rep.inv_T4.r2:.4f} rss={rep.inv_T4.rss:.4g}")
        print(f"  preferred: {rep.preferred}")


if __name__ == "__main__":
    main()
