"""Recursive convolution with exponential-sum kernels.

For a pole p (1/time) the history integral

    f(t) = int_0^t exp(p (t - tau)) g(tau) dtau

obeys f(t + dt) = exp(p dt) f(t) + int_t^{t+dt} exp(p (t + dt - tau)) g(tau) dtau,
so a kernel with J poles needs J complex numbers of memory, whatever the
number of steps. The local integral is done exactly for a polynomial
interpolant of g through the newest ``order`` samples; with order=2 this is
the piecewise-linear rule. The exact weights are

    W_k(x) = int_0^1 exp(x (1 - u)) l_k(u) du = sum_m c_km m! phi_{m+1}(x),

x = p dt, l_k the Lagrange basis on nodes u = 1, 0, -1, ... and phi_m the
exponential-integrator phi-functions.
"""
from collections import deque
from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import ConjugacyError, UsageError
from .kernels import ExponentialKernel, conjugate_partner

SERIES_RADIUS = 4.0
SERIES_TERMS = 40
VALUE_RTOL = 1e-9


def phi_functions(x, n):
    """phi_1..phi_n at x (array), shape (n,) + x.shape.

    Taylor series inside |x| < SERIES_RADIUS, where the upward recurrence
    phi_{k+1} = (phi_k - 1/k!) / x cancels badly; the recurrence elsewhere.
    """
    x = np.asarray(x, dtype=complex)
    out = np.empty((n,) + x.shape, dtype=complex)
    small = np.abs(x) < SERIES_RADIUS
    xs = x[small]
    for k in range(1, n + 1):
        # phi_k(x) = sum_i x^i / (i + k)!
        acc = np.zeros_like(xs)
        for i in range(SERIES_TERMS, -1, -1):
            acc = acc * xs + 1.0 / factorial(i + k)
        out[k - 1][small] = acc
    xl = x[~small]
    phi = np.expm1(xl) / xl
    for k in range(1, n + 1):
        out[k - 1][~small] = phi
        phi = (phi - 1.0 / factorial(k)) / xl
    return out


def _lagrange_monomials(nodes):
    """c[k, m]: coefficient of u^m in the Lagrange basis l_k on ``nodes``."""
    nodes = np.asarray(nodes, dtype=float)
    q = len(nodes)
    c = np.zeros((q, q))
    for k in range(q):
        others = np.delete(nodes, k)
        poly = np.polynomial.polynomial.polyfromroots(others)
        c[k] = poly / np.prod(nodes[k] - others)
    return c


def local_weights(x, q, nodes=None):
    """W_k(x) for k = 0..q-1; shape (q,) + x.shape.

    By default node k sits at u = 1 - k, i.e. at t_{n+1-k} for the step
    [t_n, t_{n+1}] mapped to u in [0, 1].
    """
    c = _lagrange_monomials(1.0 - np.arange(q) if nodes is None else nodes)
    phi = phi_functions(x, q)
    fact = np.array([factorial(m) for m in range(q)], dtype=float)
    return np.tensordot(c * fact, phi, axes=([1], [0]))


@dataclass(frozen=True)
class ConvolutionConfig:
    """order: interpolation nodes per step (2 = linear, the default).

    pair_reduce: carry one accumulator per conjugate pole pair and double
    its real part, instead of one per pole.
    """

    order: int = 2
    pair_reduce: bool = True

    def __post_init__(self):
        if not 2 <= self.order <= 8:
            raise UsageError(f"order must lie in [2, 8], got {self.order}")


def _reduce(kernel, pair_reduce):
    """(rates, weights, multiplicity) for the accumulators of one kernel."""
    p = np.asarray(kernel.poles)
    w = np.asarray(kernel.weights)
    if not pair_reduce or len(p) == 0:
        return kernel.scale * p, w, np.ones(len(p))
    partner = conjugate_partner(p)
    if partner is None:
        raise ConjugacyError("kernel poles are not conjugate-closed")
    idx = np.arange(len(p))
    # keep the real poles and one member of each pair
    keep = partner >= idx
    mult = np.where(partner[keep] == idx[keep], 1.0, 2.0)
    return kernel.scale * p[keep], w[keep], mult


class ConvolutionState:
    """Streaming (kernel * g)(t_n) for a bank of kernels and real input streams.

    ``kernels`` is a list of (kernel, n_streams). Inputs to ``advance`` and
    outputs of ``value`` are flat real arrays with one entry per stream, in
    kernel order. A single kernel with one stream takes and returns scalars.
    """

    def __init__(self, kernels, config=ConvolutionConfig(), g0=0.0):
        if isinstance(kernels, ExponentialKernel):
            kernels = [(kernels, 1)]
            self._scalar = True
        else:
            self._scalar = False
        self.kernels = [k for k, _ in kernels]
        self.config = config
        rates, weights, mult, stream, inst = [], [], [], [], []
        s0 = 0
        for k, n in kernels:
            r, w, m = _reduce(k, config.pair_reduce)
            for s in range(n):
                rates.append(r)
                weights.append(k.scale * w * m)
                stream.append(np.full(len(r), s0 + s))
            inst.append(np.full(n, k.instantaneous.real))
            s0 += n
        cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)
        self.rates = cat(rates, complex)
        self.weights = cat(weights, complex)
        self.stream = cat(stream, int)
        self.instantaneous = cat(inst, float)
        self.n_streams = s0
        self.f = np.zeros(len(self.rates), dtype=complex)
        self.t = 0.0
        self.steps = 0
        self.dt = None
        self._decay = None
        self._weights = None
        self.history = deque([self._as_samples(g0)], maxlen=config.order)

    def _as_samples(self, g):
        g = np.asarray(g, dtype=float).reshape(-1)
        if g.size == 1 and self.n_streams != 1:
            g = np.full(self.n_streams, float(g[0]))
        if g.shape != (self.n_streams,):
            raise UsageError(f"expected {self.n_streams} samples, got {g.shape}")
        return g.copy()

    @property
    def n_accumulators(self):
        return len(self.f)

    def _prepare(self, dt):
        if self.dt is not None and abs(self.dt - dt) <= 1e-9 * self.dt:
            return
        if self.dt is not None and self.config.order > 2:
            raise UsageError("non-uniform steps are not supported for order > 2")
        x = self.rates * dt
        self._decay = np.exp(x)
        # one weight table per available stencil size, used during start-up
        self._weights = {q: dt * local_weights(x, q) for q in range(2, self.config.order + 1)}
        self.dt = dt

    def advance(self, g_next, dt):
        """Step to t + dt given g(t + dt) for every stream."""
        if not dt > 0:
            raise UsageError(f"dt must be positive, got {dt}")
        self._prepare(float(dt))
        g_next = self._as_samples(g_next)
        q = min(self.config.order, len(self.history) + 1)
        w = self._weights[q]
        inc = w[0] * g_next[self.stream]
        for k, g in enumerate(reversed(self.history), start=1):
            if k >= q:
                break
            inc += w[k] * g[self.stream]
        self.f = self._decay * self.f + inc
        self.history.append(g_next)
        self.t += dt
        self.steps += 1
        if self.steps == self.config.order - 1 and self.config.order > 2:
            self._restart()
        return self

    def _restart(self):
        # The first order-2 steps had short stencils. Now that `order` samples
        # exist, redo those intervals with the full (partly forward) stencil.
        q = self.config.order
        x = self.rates * self.dt
        g = list(self.history)
        f = np.zeros_like(self.f)
        for k in range(q - 1):
            w = self.dt * local_weights(x, q, nodes=np.arange(q) - k)
            inc = sum(w[j] * g[j][self.stream] for j in range(q))
            f = self._decay * f + inc
        self.f = f

    def value(self, g_current=None):
        """scale * sum_j w_j f_j + instantaneous * g(t), per stream."""
        g = self.history[-1] if g_current is None else self._as_samples(g_current)
        terms = self.weights * self.f
        re = np.bincount(self.stream, weights=terms.real, minlength=self.n_streams)
        if not self.config.pair_reduce:
            im = np.bincount(self.stream, weights=terms.imag, minlength=self.n_streams)
            mag = np.bincount(self.stream, weights=np.abs(terms), minlength=self.n_streams)
            if np.any(np.abs(im) > VALUE_RTOL * np.maximum(mag, 1e-300)):
                raise ConjugacyError("convolution value has a significant imaginary part")
        out = re + self.instantaneous * g
        return float(out[0]) if self._scalar else out


def init_state(k, g0=0.0, config=ConvolutionConfig()):
    """Zeroed state for one kernel and one stream, holding g(0) = g0."""
    return ConvolutionState(k, config, g0)


def advance(s, g_next, dt):
    return s.advance(g_next, dt)


def value(s, g_current=None):
    return s.value(g_current)


def direct_convolve(k, samples, oversample=4, g=None, at=None, nodes=8):
    """Brute-force (kernel * g)(t_n) by composite Gauss-Legendre quadrature.

    Parameters
    ----------
    k : ExponentialKernel
    samples : (times, values)
        Uniformly spaced sample times starting at 0, and g at those times.
    oversample : int
        Quadrature panels per sample interval.
    g : callable, optional
        Exact input; if omitted, g is the piecewise-linear interpolant of
        the samples.
    at : sequence of int, optional
        Sample indices to evaluate (all by default). Cost is O(n) per index.
    nodes : int
        Gauss points per panel.
    """
    t, gv = (np.asarray(a, dtype=float) for a in samples)
    if t.shape != gv.shape or t.ndim != 1 or len(t) == 0:
        raise UsageError("samples must be two 1-D arrays of equal length")
    if t[0] != 0:
        raise UsageError("samples must start at t = 0")
    if len(t) > 1:
        dt = t[1] - t[0]
        if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=0):
            raise UsageError("samples must be uniformly spaced")
    if oversample < 1:
        raise UsageError("oversample must be >= 1")
    func = g if g is not None else (lambda x: np.interp(x, t, gv))
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    idx = range(len(t)) if at is None else at
    rates = k.rates
    out = []
    for n in idx:
        tn = t[n]
        total = k.instantaneous.real * gv[n]
        if n > 0:
            edges = np.linspace(0.0, tn, n * oversample + 1)
            mid = 0.5 * (edges[1:] + edges[:-1])
            half = 0.5 * (edges[1:] - edges[:-1])
            tau = (mid[:, None] + half[:, None] * xg).ravel()
            wq = (half[:, None] * wg).ravel()
            kern = (k.weights * np.exp(np.multiply.outer(tn - tau, rates))).sum(axis=1)
            total += k.scale * float(np.sum(wq * kern.real * func(tau)))
        out.append(total)
    return out
