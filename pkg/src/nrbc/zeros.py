"""Zeros of K_{l+1/2}, i.e. the roots of the reversed Bessel polynomial theta_l.

Roots are found by simultaneous (Aberth) iteration started on the
eye-shaped curve the zeros cluster around, then polished by Newton.

Evaluating theta_l/theta_l' in the left half-plane needs care: every
three-term recurrence for theta_l loses accuracy there exponentially in l
(about half a digit per degree), because a root is a near-cancellation of
two large components. Writing w = -z (Re w > 0),

    theta_l(-w) = e^{-w} [ (-1)^l 2 w^{l+1} i_l(w) + e^{-w} theta_l(w) ],

where i_l is the modified spherical Bessel function of the first kind, and
computing both components to full relative precision (theta_l(w) by the
forward ratio recurrence, which is stable for Re w > 0; i_l(w) by a
backward continued fraction) keeps the Newton ratio accurate to ~1e-13 up
to l = 200. In the closed right half-plane the plain forward recurrence

    r_1 = z + 1,   r_k = (2k - 1) + z^2 / r_{k-1}      (r_k = theta_k/theta_{k-1})
    theta_l / theta_l' = r_l / (r_l - z)               (theta_l' = theta_l - z theta_{l-1})

is used directly.
"""
from dataclasses import dataclass, field, replace
from functools import lru_cache
from math import lgamma, log

import numpy as np

from .bessel import L_MAX_DEFAULT, _check_degree
from .errors import NumericalError, UsageError

EYE_A = 0.66274
MAX_ITER = 500


@dataclass(frozen=True, eq=False)
class PoleSet:
    """Zeros z_j^l of K_{l+1/2}, sorted by (imag, real).

    ``full_sum`` is the sum over all l zeros and survives filtering, since
    the Dirac term of the truncated omega kernel still needs it.
    """

    l: int
    zeros: np.ndarray
    residuals: np.ndarray
    full_sum: complex
    beta: float = None
    a: float = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def filtered(self):
        return self.beta is not None

    def __len__(self):
        return len(self.zeros)


class _LogProduct:
    """Running product kept as mantissa * exp(log_scale) to avoid overflow.

    Multiplying and rescaling loses less than summing complex logs term by
    term, which matters at large l.
    """

    def __init__(self, like):
        self.m = np.ones_like(like)
        self.log_scale = np.zeros(np.shape(like))
        self.count = 0

    def mul(self, x):
        # factors stay within ~1e+-12, so checking every 8 steps is safe
        self.m = self.m * x
        self.count += 1
        if self.count % 8 == 0:
            a = np.abs(self.m)
            if np.any((a > 1e100) | (a < 1e-100)):
                self.log_scale = self.log_scale + np.log(a)
                self.m = self.m / a

    def log(self):
        return np.log(self.m) + self.log_scale


def _forward_ratio(l, z):
    """(log theta_l(z), r_l(z)) by the forward ratio recurrence."""
    r = z + 1.0
    prod = _LogProduct(z)
    prod.mul(r)
    z2 = z * z
    for k in range(2, l + 1):
        r = (2 * k - 1) + z2 / r
        prod.mul(r)
    return prod.log(), r


def _log_sinh_over(w):
    """log(sinh(w) / w) without overflow, Re w > 0."""
    small = np.abs(w) < 1.0
    ws = np.where(small, w, 1.0)
    wl = np.where(small, 1.0, w)
    direct = np.log(np.sinh(ws) / ws)
    far = wl - np.log(2.0 * wl) + np.log(-np.expm1(-2.0 * wl))
    return np.where(small, direct, far)


def _log_i(l, w):
    """(log i_l(w), i_l/i_{l-1}) for Re w > 0."""
    depth = int(l + np.max(np.abs(w), initial=0.0) + 60)
    q = np.zeros_like(w)
    prod = _LogProduct(w)
    for k in range(depth, 0, -1):
        q = 1.0 / ((2 * k + 1) / w + q)
        if k == l:
            q_l = q
        if k <= l:
            prod.mul(q)
    return _log_sinh_over(w) + prod.log(), q_l


def _ratio_left(l, z):
    w = -z
    log_theta, r = _forward_ratio(l, w)
    log_i, q = _log_i(l, w)
    w_pow = _LogProduct(w)
    for _ in range(l + 1):
        w_pow.mul(w)
    log_rho = np.log(2.0) + w_pow.log() + log_i + w - log_theta + 1j * np.pi * l
    # rho = first component / second component; divide through by the larger one
    big = log_rho.real > 0
    rho = np.exp(np.where(big, -log_rho, log_rho))
    a = 1.0 / q - 1.0
    b = 1.0 + w / r
    return np.where(big,
                    -(1.0 + rho) / (a - b * rho),
                    -(rho + 1.0) / (rho * a - b))


def newton_ratio(l, z):
    """theta_l(z) / theta_l'(z), elementwise, accurate in both half-planes."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    left = (z.real < 0) & (np.abs(z) > 1e-3)
    if np.any(~left):
        _, r = _forward_ratio(l, z[~left])
        out[~left] = r / (r - z[~left])
    if np.any(left):
        out[left] = _ratio_left(l, z[left])
    return out


def _initial_guess(l, a=EYE_A):
    phi = np.pi / 2 + np.pi * (np.arange(1, l + 1) - 0.5) / l
    return l * (a * np.cos(phi) + 1j * np.sin(phi))


def _aberth(l, z, tol=1e-14, max_iter=MAX_ITER):
    # Steps bottom out at a rounding floor near tol; once below 1e-9 we
    # allow a few extra sweeps and then stop.
    z = z.copy()
    eye = np.eye(l, dtype=bool)
    settled = 0
    for it in range(1, max_iter + 1):
        n = newton_ratio(l, z)
        diff = z[:, None] - z[None, :]
        diff[eye] = 1.0
        inv = 1.0 / diff
        inv[eye] = 0.0
        w = n / (1.0 - n * inv.sum(axis=1))
        z -= w
        step = np.max(np.abs(w) / np.maximum(1.0, np.abs(z)))
        if step <= tol:
            return z, it
        if step <= 1e-9:
            settled += 1
            if settled > 3:
                return z, it
    raise NumericalError(
        f"Aberth iteration for theta_{l} did not converge in {max_iter} steps",
        {"l": l, "max_step": float(np.max(np.abs(w))), "iterations": max_iter})


def _polish(l, z, sweeps=3):
    for _ in range(sweeps):
        z = z - newton_ratio(l, z)
    return z


def _symmetrize(l, z):
    z = z[np.argsort(z.imag, kind="stable")]
    upper = z[l - l // 2:]
    if l // 2 and np.min(upper.imag) <= 0:
        raise NumericalError(f"theta_{l}: roots not separated by the real axis",
                             {"l": l, "min_upper_imag": float(np.min(upper.imag))})
    parts = [np.conj(upper), upper]
    if l % 2:
        x = float(z[l // 2].real)
        for _ in range(4):
            x -= float(newton_ratio(l, x).real)
        parts.insert(1, np.array([x + 0j]))
    return np.concatenate(parts)


def _order(z):
    return z[np.lexsort((z.real, z.imag))]


@lru_cache(maxsize=None)
def _find(l):
    z0 = _initial_guess(l)
    z, iterations = _aberth(l, z0)
    z = _order(_symmetrize(l, _polish(l, z)))
    z.setflags(write=False)
    res = np.abs(newton_ratio(l, z))
    res.setflags(write=False)
    return z, res, iterations


def find_zeros(l, l_max=L_MAX_DEFAULT):
    """All l zeros of K_{l+1/2}: conjugate-closed, left half-plane, sorted.

    Results are memoised per l (the cache is shared and read-only).

    Raises
    ------
    NumericalError
        If the simultaneous iteration fails to converge.
    """
    l = _check_degree(l, l_max, lo=1)
    z, res, iterations = _find(l)
    if np.any(z.real >= 0):
        raise NumericalError(f"theta_{l}: root with non-negative real part",
                             {"l": l, "max_real": float(z.real.max())})
    return PoleSet(l=l, zeros=z, residuals=res, full_sum=complex(z.sum().real),
                   diagnostics={"iterations": iterations})


def filter_zeros(p, beta, a=EYE_A):
    """Keep the zeros with Re z_j >= -beta * l * a.

    The result may be empty; ``full_sum`` keeps the sum over all zeros.
    """
    if p.filtered:
        raise UsageError("pole set is already filtered")
    if not 0 < beta <= 1:
        raise UsageError(f"beta must lie in (0, 1], got {beta}")
    keep = p.zeros.real >= -beta * p.l * a
    z = p.zeros[keep]
    res = p.residuals[keep]
    z.setflags(write=False)
    res.setflags(write=False)
    diag = dict(p.diagnostics, threshold=-beta * p.l * a, kept=int(keep.sum()),
                empty=not keep.any())
    return replace(p, zeros=z, residuals=res, beta=float(beta), a=float(a),
                   diagnostics=diag)


def sum_rule_error(p):
    """|sum z_j + l(l+1)/2| / (l(l+1)/2)."""
    half = p.l * (p.l + 1) / 2
    return abs(complex(np.sum(p.zeros)) + half) / half


def log_product_error(p):
    """Relative error of |prod z_j| against (2l)!/(l! 2^l), in log form."""
    l = p.l
    exact = lgamma(2 * l + 1) - lgamma(l + 1) - l * log(2.0)
    got = float(np.sum(np.log(np.abs(p.zeros))))
    return abs(np.expm1(got - exact))


def eye_shape_report(p):
    """Soft diagnostics for the eye-shaped distribution (never raises)."""
    l = p.l
    return {
        "max_abs_imag": float(np.max(np.abs(p.zeros.imag))),
        "min_real": float(np.min(p.zeros.real)),
        "imag_ok": bool(np.max(np.abs(p.zeros.imag)) <= l + 2),
        "real_ok": bool(np.min(p.zeros.real) >= -0.70 * l),
    }
