"""Squared kernel norm against L^2/T, with a grid-robustness check in n_s."""

import argparse

import numpy as np

from stokes_ctm.kernel import build_kernel, early_time_gaussian_error, fit_kernel_norms


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--L", type=float, default=2.5)
    ap.add_argument("--T", type=float, nargs="+", default=[0.2, 0.3, 0.5, 0.8, 1.2])
    ap.add_argument("--n-s", type=int, default=1001)
    ap.add_argument("--n-t", type=int, default=257)
    args = ap.parse_args()
    reports = []
    for n_s in (args.n_s, 2 * args.n_s - 1):
        norms = []
        for T in args.T:
            k = build_kernel(args.L, T, n_s, args.n_t)
            norms.append(k.norm_sq)
            print(f"n_s={n_s} T={T:g} |k|^2={k.norm_sq:.4e} |k(T)|/|k(0)|={k.terminal_ratio:.2e} "
                  f"gauss={early_time_gaussian_error(k):.2e} max|b|={np.abs(k.boundary).max():.3e}")
        rep = fit_kernel_norms(args.L, args.T, norms)
        reports.append(rep)
        print(f"  fit: a={rep.fit.intercept:.4f} b={rep.fit.slope:.4f} R2={rep.fit.r2:.4f} ok={rep.ok}")
    b0, b1 = reports[0].fit.slope, reports[1].fit.slope
    print(f"slope change under n_s refinement: {abs(b1 / b0 - 1):.2%}")


if __name__ == "__main__":
    main()
