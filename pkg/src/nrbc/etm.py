"""Streaming electric-to-magnetic boundary operator on the sphere r = b.

Per mode (l, m) the operator needs only V^r and V^(2) of the incoming
field:

    T_b[E] = (c/b) sum_lm [ (omega_l * E^r_lm) / (l(l+1)) grad_S Y
                            + (sigma_l * E^(2)_lm) T ],

where * is the causal time convolution. Each step analyses the frame,
advances two convolution banks (one for omega, one for sigma) and
synthesizes the tangential result. The output at t_n uses samples up to
and including t_n, so a caller coupling it to an implicit scheme must
treat it as explicit data.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .convolution import ConvolutionConfig, ConvolutionState
from .errors import UsageError
from .manufactured import coefficients_from_values, mode_values
from .kernels import compressed_kernels, omega_kernel, sigma_kernel
from .vsh import (FieldFrame, VshCoefficients, discrete_l2_norm, vsh_analyze,
                  vsh_synthesize, zero_frame)
from .zeros import filter_zeros, find_zeros

TIME_RTOL = 1e-9


@dataclass(frozen=True)
class KernelOptions:
    """How the per-degree kernels are built.

    mode: "exact", "truncated" (needs ``beta``) or "compressed" (needs ``table``).
    """

    mode: str = "exact"
    beta: float = None
    t0: float = None
    table: object = None
    convolution: ConvolutionConfig = field(default_factory=ConvolutionConfig)

    def __post_init__(self):
        if self.mode not in ("exact", "truncated", "compressed"):
            raise UsageError(f"unknown kernel mode {self.mode!r}")
        if self.mode == "truncated" and self.beta is None:
            raise UsageError("truncated kernels need beta")
        if self.mode == "compressed" and self.table is None:
            raise UsageError("compressed kernels need a table")

    def describe(self):
        out = {"mode": self.mode, "order": self.convolution.order,
               "pair_reduce": self.convolution.pair_reduce}
        if self.mode == "truncated":
            out.update(beta=self.beta, t0=self.t0)
        return out


def build_kernels(l, b, c, options):
    """(sigma_l, omega_l) for one degree according to ``options``."""
    if options.mode == "compressed":
        return compressed_kernels(options.table, l, b, c)
    p = find_zeros(l, l_max=max(l, 200))
    if options.mode == "truncated":
        p = filter_zeros(p, options.beta)
    return sigma_kernel(l, b, c, p, options.t0), omega_kernel(l, b, c, p, options.t0)


def _threads():
    try:
        return max(1, int(os.environ.get("NRBC_THREADS", "1")))
    except ValueError:
        raise UsageError("NRBC_THREADS must be an integer") from None


class EtmOperator:
    """T_b for degrees 1..L_max on a fixed grid; one logical time stream."""

    def __init__(self, b, c, L_max, grid, options=KernelOptions(), threads=None):
        if not (b > 0 and c > 0):
            raise UsageError(f"b and c must be positive, got b={b}, c={c}")
        if int(L_max) != L_max or L_max < 1:
            raise UsageError(f"L_max must be a positive integer, got {L_max}")
        if L_max > grid.band_limit:
            raise UsageError(f"L_max = {L_max} exceeds the grid band limit {grid.band_limit}"
                             f" (N_theta = {grid.n_theta}, N_phi = {grid.n_phi})")
        self.b, self.c, self.L_max, self.grid = float(b), float(c), int(L_max), grid
        self.options = options
        self.threads = _threads() if threads is None else int(threads)
        self.sigma, self.omega = {}, {}
        for l in range(1, self.L_max + 1):
            self.sigma[l], self.omega[l] = build_kernels(l, self.b, self.c, options)
        self._reset_states()

    def _reset_states(self):
        cfg = self.options.convolution
        L = self.L_max
        self.omega_bank = ConvolutionState([(self.omega[l], 2 * l + 1) for l in range(1, L + 1)], cfg)
        self.sigma_bank = ConvolutionState([(self.sigma[l], 2 * l + 1) for l in range(1, L + 1)], cfg)
        self.t = 0.0
        self.steps = 0
        self.last_channels = None
        self.last_input = None

    @property
    def n_states(self):
        """Logical (l, m, channel) convolution streams: 2 L_max (L_max + 2)."""
        return self.omega_bank.n_streams + self.sigma_bank.n_streams

    def pole_counts(self):
        return {l: len(self.sigma[l]) for l in self.sigma}

    def provenance(self):
        return dict(self.options.describe(), b=self.b, c=self.c, L_max=self.L_max,
                    poles=self.pole_counts())

    # stream layout per l: Re c_l0, Re c_l1, Im c_l1, ..., Re c_ll, Im c_ll
    def _pack(self, coeffs):
        L = self.L_max
        parts = []
        for l in range(1, L + 1):
            row = coeffs[l, L:L + l + 1]
            parts.append(np.concatenate([[row[0].real], np.column_stack([row[1:].real, row[1:].imag]).ravel()]))
        return np.concatenate(parts)

    def _unpack(self, flat):
        L = self.L_max
        out = np.zeros((L + 1, 2 * L + 1), dtype=complex)
        pos = 0
        for l in range(1, L + 1):
            seg = flat[pos:pos + 2 * l + 1]
            pos += 2 * l + 1
            m = np.arange(1, l + 1)
            pos_m = seg[1::2] + 1j * seg[2::2]
            out[l, L] = seg[0]
            out[l, L + m] = pos_m
            out[l, L - m] = (-1.0) ** m * np.conj(pos_m)
        return out

    def step(self, frame, dt=None, synthesize=True):
        """Consume E(t_n) and return T_b[E](t_n) as a tangential frame.

        With ``synthesize=False`` only ``last_channels`` is updated and None
        is returned, which saves the synthesis when the frame is not needed.
        """
        if frame.grid.shape != self.grid.shape:
            raise UsageError("frame grid does not match the operator grid")
        if self.steps == 0 and self.last_input is None:
            if abs(frame.t) > 0:
                raise UsageError(f"first frame must be at t = 0, got t = {frame.t}")
            if frame.max_abs() != 0:
                raise UsageError("the t = 0 frame must vanish (zero initial history)")
            self.last_input = frame.t
            self.last_channels = VshCoefficients.zeros(self.L_max)
            return zero_frame(self.grid, 0.0)
        if dt is None:
            dt = frame.t - self.t
        if not dt > 0:
            raise UsageError(f"dt must be positive, got {dt}")
        if abs(frame.t - (self.t + dt)) > TIME_RTOL * max(1.0, abs(frame.t)):
            raise UsageError(f"frame time {frame.t} does not match t + dt = {self.t + dt}")
        coeffs = vsh_analyze(frame, L=self.L_max)
        g_r = self._pack(coeffs.er)
        g_2 = self._pack(coeffs.e2)
        if self.threads > 1:
            with ThreadPoolExecutor(2) as pool:
                a = pool.submit(self.omega_bank.advance, g_r, dt)
                s = pool.submit(self.sigma_bank.advance, g_2, dt)
                a.result(), s.result()
        else:
            self.omega_bank.advance(g_r, dt)
            self.sigma_bank.advance(g_2, dt)
        self.t += dt
        self.steps += 1
        return self._output(frame.t, synthesize)

    def _output(self, t, synthesize=True):
        L = self.L_max
        k = self.c / self.b
        l = np.arange(L + 1)
        ll = np.where(l > 0, l * (l + 1), 1)[:, None]
        grad = k * self._unpack(self.omega_bank.value()) / ll
        tang = k * self._unpack(self.sigma_bank.value())
        zero = np.zeros_like(grad)
        self.last_channels = VshCoefficients(L, zero, grad, tang)
        if not synthesize:
            return None
        out = vsh_synthesize(self.last_channels, self.grid, t=t)
        return FieldFrame(self.grid, np.zeros(self.grid.shape), out.vtheta, out.vphi, t)


def create_etm(b, c, L_max, grid, options=KernelOptions(), threads=None):
    return EtmOperator(b, c, L_max, grid, options, threads)


def step(op, frame, dt=None, synthesize=True):
    return op.step(frame, dt, synthesize)


def residual(lhs_frame, etm_frame):
    """Discrete L2 norm of lhs - T_b[E] on the shared grid."""
    if lhs_frame.grid.shape != etm_frame.grid.shape:
        raise UsageError("frames live on different grids")
    if abs(lhs_frame.t - etm_frame.t) > TIME_RTOL * max(1.0, abs(lhs_frame.t)):
        raise UsageError(f"frame times differ: {lhs_frame.t} vs {etm_frame.t}")
    return discrete_l2_norm(lhs_frame - etm_frame)


def run_residual(modes, b, grid, L_max, dt, t_out, options=KernelOptions(), threads=None):
    """e(b, t) for manufactured modes at the requested output times.

    The operator is stepped from t = 0 with uniform ``dt``; every output
    time must be a multiple of ``dt``. Returns (times, residuals, operator).
    """
    if not modes:
        raise UsageError("no modes given")
    c = modes[0].c
    if any(mf.c != c for mf in modes):
        raise UsageError("all modes must share the wave speed c")
    idx = []
    for t in t_out:
        n = int(round(t / dt))
        if abs(n * dt - t) > TIME_RTOL * max(1.0, t):
            raise UsageError(f"output time {t} is not a multiple of dt = {dt}")
        idx.append(n)
    n_steps = max(idx)
    times = np.arange(n_steps + 1) * dt
    values = np.stack([mode_values(mf, b, times) for mf in modes])  # (modes, 5, steps)
    op = EtmOperator(b, c, L_max, grid, options, threads)
    wanted = set(idx)
    out = {}
    for n, t in enumerate(times):
        field_c, lhs_c = coefficients_from_values(modes, values[:, :, n], L_max)
        frame = vsh_synthesize(field_c, grid, t=t)
        etm_frame = op.step(frame, dt if n else None, synthesize=n in wanted)
        if n in wanted:
            out[n] = residual(vsh_synthesize(lhs_c, grid, t=t), etm_frame)
    return np.array([n * dt for n in idx]), np.array([out[n] for n in idx]), op
