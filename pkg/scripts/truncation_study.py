"""How much beta-truncation keeps, and what it costs.

Part 1: retained pole count per degree for several beta, plus the
dropped-term bound sum |z_j| exp(Re z_j t / t_unit) at a few times.
Part 2: residual of the manufactured-family pipeline with truncated
kernels, next to the exact-kernel residual.
"""
import argparse

import numpy as np

from nrbc.convolution import ConvolutionConfig
from nrbc.etm import KernelOptions, run_residual
from nrbc.manufactured import standard_family
from nrbc.vsh import build_grid
from nrbc.zeros import filter_zeros, find_zeros


def pole_table(ls, betas, times):
    print("l    " + "  ".join(f"beta={b:<5g}" for b in betas))
    for l in ls:
        p = find_zeros(l)
        print(f"{l:<4d} " + "  ".join(f"{len(filter_zeros(p, b)):<10d}" for b in betas))
    print("\ndropped-term bound, l = 100, beta = 0.4 (t in units of b/c)")
    p = find_zeros(100)
    f = filter_zeros(p, 0.4)
    dropped = p.zeros[p.zeros.real < f.diagnostics["threshold"]]
    for t in times:
        print(f"  t = {t:<5g} bound = {np.sum(np.abs(dropped) * np.exp(dropped.real * t)):.3e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--beta", type=float, default=0.4)
    ap.add_argument("--b", type=float, default=3.0)
    ap.add_argument("--t", type=float, nargs="+", default=[0.5, 1.0, 2.0, 4.0, 10.0])
    ap.add_argument("--skip-pipeline", action="store_true")
    args = ap.parse_args()

    pole_table([1, 5, 10, 20, 40, 60, 100, 150, 200], [0.2, 0.4, 0.6, 0.8, 1.0],
               [0.1, 0.25, 0.5, 1.0])
    if args.skip_pipeline:
        return
    a, c, b = 2.0, 5.0, args.b
    grid = build_grid(40, 80)
    modes = standard_family(c, a, b)
    cfg = ConvolutionConfig(order=6)
    print(f"\npipeline residual, b = {b:g}, t0 = 0.5 b/c = {0.5 * b / c:g}")
    for name, opts in (("exact", KernelOptions("exact", convolution=cfg)),
                       (f"beta={args.beta:g}", KernelOptions("truncated", beta=args.beta,
                                                           t0=0.5 * b / c, convolution=cfg))):
        _, e, op = run_residual(modes, b, grid, 20, 0.005, args.t, opts)
        kept = sum(op.pole_counts().values())
        print(f"  {name:<10s} poles={kept:<4d} " + "  ".join(f"{x:.2e}" for x in e))


if __name__ == "__main__":
    main()
