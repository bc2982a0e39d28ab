"""Command-line front end: ``nrbc <command> ...``.

Every command that writes files puts a ``manifest.json`` next to them.
Exit codes: 0 success, 2 usage, 3 numerical failure, 4 identity violation.
"""
import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .bessel import laplace_symbols
from .convolution import ConvolutionConfig, ConvolutionState, direct_convolve
from .errors import IdentityViolation, NrbcError, UsageError
from .etm import KernelOptions, run_residual
from .kernels import (compressed_kernels, eval_kernel, kernel_laplace, load_compressed_table,
                      omega_kernel, sigma_kernel)
from .manufactured import (assemble_frames, family_spec, modes_from_spec, normalize_modes,
                           tm_terms, MultipoleField, PolyExp)
from .vsh import build_grid, write_frame_csv
from .zeros import filter_zeros, find_zeros


def _fmt(x):
    return f"{x:.16e}"


def _write_csv(path, header, rows, index=False):
    os.makedirs(_out_dir(path), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for j, row in enumerate(rows, start=1):
            cells = [_fmt(float(v)) for v in row]
            fh.write(",".join([str(j)] * index + cells) + "\n")


class Manifest:
    """Run description written as sorted-key JSON next to the outputs."""

    def __init__(self, command, args):
        params = {k: v for k, v in vars(args).items() if k not in ("func",)}
        self.data = {"command": command, "parameters": params, "version": __version__,
                     "threads": int(os.environ.get("NRBC_THREADS", "1")), "timings": {}}
        self._t = time.perf_counter()

    def phase(self, name):
        now = time.perf_counter()
        self.data["timings"][name] = now - self._t
        self._t = now

    def write(self, directory):
        os.makedirs(directory or ".", exist_ok=True)
        with open(os.path.join(directory or ".", "manifest.json"), "w") as fh:
            json.dump(self.data, fh, sort_keys=True, indent=2, default=str)
            fh.write("\n")


def _out_dir(path):
    return os.path.dirname(os.path.abspath(path))


def _kernels_from_args(l, b, c, beta=None, compressed=None):
    if compressed:
        with open(compressed) as fh:
            return compressed_kernels(load_compressed_table(fh), l, b, c)
    p = find_zeros(l)
    t0 = None
    if beta is not None:
        p = filter_zeros(p, beta)
    return sigma_kernel(l, b, c, p, t0), omega_kernel(l, b, c, p, t0)


def cmd_zeros(args):
    m = Manifest("zeros", args)
    p = find_zeros(args.l)
    if args.beta is not None:
        p = filter_zeros(p, args.beta)
    m.phase("zeros")
    rows = [(z.real, z.imag, r) for z, r in zip(p.zeros, p.residuals)]
    header = ["j", "re", "im", "residual"]
    if args.out:
        _write_csv(args.out, header, rows, index=True)
        m.data["poles"] = {str(args.l): len(p)}
        m.write(_out_dir(args.out))
    else:
        print(",".join(header))
        for j, row in enumerate(rows, start=1):
            print(",".join([str(j)] + [_fmt(v) for v in row]))
    return 0


def cmd_kernel(args):
    m = Manifest("kernel", args)
    sigma, omega = _kernels_from_args(args.l, args.b, args.c, args.beta, args.compressed)
    t = np.linspace(0.0, args.tmax, args.samples)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = np.column_stack([t, eval_kernel(sigma, t), eval_kernel(omega, t)])
    _write_csv(args.out, ["t", "sigma", "omega_smooth"], rows)
    m.data["provenance"] = sigma.provenance.as_dict()
    m.data["poles"] = {str(args.l): len(sigma)}
    m.data["omega_instantaneous"] = omega.instantaneous.real
    m.phase("kernel")
    m.write(_out_dir(args.out))
    return 0


def _parse_kernel_spec(spec):
    """'sigma,l=3,b=1,c=1[,beta=0.4][,table=file]' -> kernel."""
    parts = [s.strip() for s in spec.split(",") if s.strip()]
    if not parts or parts[0] not in ("sigma", "omega"):
        raise UsageError(f"kernel spec must start with sigma or omega: {spec!r}")
    kv = {}
    for p in parts[1:]:
        if "=" not in p:
            raise UsageError(f"bad kernel spec item {p!r}")
        k, v = p.split("=", 1)
        kv[k] = v
    try:
        l = int(kv.get("l", 1))
        b, c = float(kv.get("b", 1.0)), float(kv.get("c", 1.0))
        beta = float(kv["beta"]) if "beta" in kv else None
    except ValueError:
        raise UsageError(f"bad number in kernel spec {spec!r}") from None
    sigma, omega = _kernels_from_args(l, b, c, beta, kv.get("table"))
    return sigma if parts[0] == "sigma" else omega


def _read_signal(path):
    data = np.genfromtxt(path, delimiter=",", names=None, skip_header=0)
    if data.ndim == 1 or np.isnan(data[0]).any():
        data = np.genfromtxt(path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    if data.shape[1] < 2:
        raise UsageError(f"{path}: expected columns t,g")
    return data[:, 0], data[:, 1]


def cmd_convolve(args):
    m = Manifest("convolve", args)
    k = _parse_kernel_spec(args.kernel)
    t, g = _read_signal(args.signal)
    if len(t) > 1 and not np.allclose(np.diff(t), args.dt, rtol=1e-9, atol=0):
        raise UsageError("signal spacing does not match --dt")
    st = ConvolutionState(k, ConvolutionConfig(order=args.order), g0=g[0])
    vals = [st.value()]
    for gi in g[1:]:
        st.advance(gi, args.dt)
        vals.append(st.value())
    m.phase("convolve")
    cols, header = [t, vals], ["t", "value"]
    if args.oracle:
        cols.append(direct_convolve(k, (t, g), oversample=4))
        header.append("oracle")
        m.phase("oracle")
    _write_csv(args.out, header, np.column_stack(cols))
    m.data["provenance"] = k.provenance.as_dict()
    m.write(_out_dir(args.out))
    return 0


def _kernel_options(spec, order):
    cfg = ConvolutionConfig(order=order)
    if spec == "exact":
        return KernelOptions("exact", convolution=cfg)
    if spec.startswith("beta="):
        return KernelOptions("truncated", beta=float(spec[5:]), convolution=cfg)
    if spec.startswith("compressed="):
        with open(spec[11:]) as fh:
            table = load_compressed_table(fh)
        return KernelOptions("compressed", table=table, convolution=cfg)
    raise UsageError(f"--kernel must be exact, beta=<b> or compressed=<file>, got {spec!r}")


def _load_modes(args, b):
    if args.spec:
        with open(args.spec) as fh:
            spec = json.load(fh)
        return modes_from_spec(spec, args.c, args.a)
    return normalize_modes(modes_from_spec(family_spec(), args.c, args.a), b)


def cmd_etm_residual(args):
    m = Manifest("etm-residual", args)
    grid = build_grid(args.ntheta, args.nphi or 2 * args.ntheta)
    L = args.lmax or grid.band_limit
    modes = _load_modes(args, args.b)
    opts = _kernel_options(args.kernel, args.order)
    if opts.mode == "truncated":
        opts = KernelOptions("truncated", beta=opts.beta, t0=0.5 * args.b / args.c,
                             convolution=opts.convolution)
    n_every = max(1, int(round(args.every / args.dt)))
    n_max = int(round(args.tmax / args.dt))
    t_out = [n * args.dt for n in range(n_every, n_max + 1, n_every)]
    m.phase("setup")
    ts, es, op = run_residual(modes, args.b, grid, L, args.dt, t_out, opts)
    m.phase("run")
    _write_csv(args.out, ["t", "e"], np.column_stack([ts, es]))
    prov = op.provenance()
    m.data["provenance"] = {k: v for k, v in prov.items() if k != "poles"}
    m.data["poles"] = {str(k): v for k, v in prov["poles"].items()}
    m.data["max_residual"] = float(np.max(es))
    m.write(_out_dir(args.out))
    return 0


def cmd_manufactured(args):
    m = Manifest("manufactured", args)
    grid = build_grid(args.ntheta, args.nphi or 2 * args.ntheta)
    modes = _load_modes(args, args.b)
    E, lhs = assemble_frames(modes, grid, args.b, args.t)
    os.makedirs(args.out, exist_ok=True)
    write_frame_csv(E, os.path.join(args.out, "E.csv"))
    write_frame_csv(lhs, os.path.join(args.out, "lhs.csv"))
    with open(os.path.join(args.out, "grid.json"), "w") as fh:
        json.dump(grid.manifest(), fh, sort_keys=True)
    m.phase("assemble")
    m.write(args.out)
    return 0


def identity_report(lmax, points=20, seed=0):
    """Worst relative errors of the Laplace-domain identities for l <= lmax."""
    rng = np.random.default_rng(seed)
    z = rng.uniform(0.1, 10.0, points) + 1j * rng.uniform(-10.0, 10.0, points)
    worst = {"sigma_partial_fractions": 0.0, "omega_partial_fractions": 0.0,
             "rho_factorization": 0.0, "tm_ratio": 0.0}
    for l in range(1, lmax + 1):
        p = find_zeros(l)
        sym = laplace_symbols(l, z)
        sig = kernel_laplace(sigma_kernel(l, 1.0, 1.0, p), z)
        om = kernel_laplace(omega_kernel(l, 1.0, 1.0, p), z)
        rel = lambda a, b: float(np.max(np.abs(a - b) / np.abs(b)))
        worst["sigma_partial_fractions"] = max(worst["sigma_partial_fractions"], rel(sig, sym.sigma_hat))
        worst["omega_partial_fractions"] = max(worst["omega_partial_fractions"], rel(om, sym.omega_hat))
        lhs = sym.rho_hat * l * (l + 1)
        worst["rho_factorization"] = max(worst["rho_factorization"], rel(lhs, sym.omega_hat * sym.etm_ratio))
        if l <= 20:
            d = tm_terms(MultipoleField(l, 0, "TM", PolyExp(1, 1.0), 1.0, 0.0))
            ratio = np.array([d["er"].laplace(1.0, zi) / d["e1"].laplace(1.0, zi) for zi in z])
            worst["tm_ratio"] = max(worst["tm_ratio"], rel(ratio, sym.etm_ratio))
    return worst


IDENTITY_TOL = {"sigma_partial_fractions": 1e-10, "omega_partial_fractions": 1e-10,
                "rho_factorization": 1e-12, "tm_ratio": 1e-10}


def cmd_identities(args):
    m = Manifest("identities", args)
    worst = identity_report(args.lmax, args.points, args.seed)
    m.phase("sweep")
    failed = [k for k, v in worst.items() if v > IDENTITY_TOL[k]]
    for k, v in worst.items():
        print(f"{k}: worst relative error {v:.3e} (tol {IDENTITY_TOL[k]:.0e})"
              f" {'FAIL' if k in failed else 'ok'}")
    m.data["worst"] = worst
    if args.out:
        m.write(args.out)
    if failed:
        raise IdentityViolation("identity violated: " + ", ".join(failed))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="nrbc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("zeros", help="zeros of K_{l+1/2}")
    s.add_argument("--l", type=int, required=True)
    s.add_argument("--beta", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_zeros)

    s = sub.add_parser("kernel", help="sample sigma_l and omega_l")
    s.add_argument("--l", type=int, required=True)
    s.add_argument("--b", type=float, required=True)
    s.add_argument("--c", type=float, required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--beta", type=float)
    g.add_argument("--compressed")
    s.add_argument("--tmax", type=float, required=True)
    s.add_argument("--samples", type=int, default=201)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_kernel)

    s = sub.add_parser("convolve", help="recursive convolution of a sampled signal")
    s.add_argument("--kernel", required=True, help="e.g. sigma,l=3,b=1,c=1[,beta=0.4]")
    s.add_argument("--signal", required=True, help="CSV with columns t,g")
    s.add_argument("--dt", type=float, required=True)
    s.add_argument("--order", type=int, default=2)
    s.add_argument("--oracle", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_convolve)

    for name, func in (("etm-residual", cmd_etm_residual), ("manufactured", cmd_manufactured)):
        s = sub.add_parser(name)
        s.add_argument("--a", type=float, default=2.0)
        s.add_argument("--c", type=float, default=5.0)
        s.add_argument("--b", type=float, required=True)
        s.add_argument("--ntheta", type=int, default=40)
        s.add_argument("--nphi", type=int)
        s.add_argument("--spec", help="modes JSON; default is the built-in family")
        s.add_argument("--out", required=True)
        s.set_defaults(func=func)
        if name == "etm-residual":
            s.add_argument("--tmax", type=float, default=10.0)
            s.add_argument("--dt", type=float, default=0.005)
            s.add_argument("--every", type=float, default=0.5, help="output spacing")
            s.add_argument("--lmax", type=int, help="default: grid band limit")
            s.add_argument("--order", type=int, default=6)
            s.add_argument("--kernel", default="exact")
        else:
            s.add_argument("--t", type=float, required=True)

    s = sub.add_parser("identities", help="Laplace-domain identity sweep")
    s.add_argument("--lmax", type=int, default=60)
    s.add_argument("--points", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_identities)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NrbcError as e:
        print(f"nrbc: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"nrbc: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
