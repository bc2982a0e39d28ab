"""Modified spherical Bessel function k_l(z) through its polynomial factor.

We work with the normalisation-free form

    k_l(z) = e^{-z} theta_l(z) / z^{l+1},

where theta_l is the reversed Bessel polynomial. Every quantity built here
(log-derivatives, symbols, zeros) is invariant to the constant prefactor,
so none is carried.

The Laplace-domain symbols are evaluated with the ratio recurrence

    s_0 = 0,
    s_{k+1} = -[(k+1)^2 + (z-k-1) s_k] / (z + k + 1 - s_k),

for s_l = 1 + z + z k_l'/k_l, which follows from
k_{l+1} = k_{l-1} + (2l+1)/z k_l and stays O(|z| + l) for all l. The
polynomial coefficients themselves are exact Python integers.
"""
from dataclasses import dataclass
from math import comb, factorial
from typing import NamedTuple

import numpy as np

from .errors import CapabilityError, PoleError, PrecisionError, UsageError

L_MAX_DEFAULT = 200
POLE_RTOL = 1e-12


@dataclass(frozen=True)
class BesselPolynomial:
    """theta_l(z) = sum_k a_k z^{l-k}, coefficients in descending powers."""

    degree: int
    coefficients: tuple

    def as_floats(self):
        """Coefficients as float64; raises if any is not exactly representable."""
        out = np.empty(self.degree + 1)
        for k, a in enumerate(self.coefficients):
            try:
                f = float(a)
            except OverflowError:
                raise PrecisionError(
                    f"theta_{self.degree} coefficient a_{k} overflows float64") from None
            if int(f) != a:
                raise PrecisionError(
                    f"theta_{self.degree} coefficient a_{k} = {a} is not exact in float64")
            out[k] = f
        return out

    def __call__(self, z):
        """Horner evaluation in exact-coefficient order (use only for small l)."""
        z = np.asarray(z, dtype=complex)
        acc = np.zeros_like(z)
        for a in self.coefficients:
            acc = acc * z + a
        return acc


def _check_degree(l, l_max, lo=0):
    if int(l) != l or l < lo:
        raise UsageError(f"l must be an integer >= {lo}, got {l!r}")
    if l > l_max:
        raise CapabilityError(f"l = {l} exceeds L_max = {l_max}")
    return int(l)


def theta_coefficients(l, l_max=L_MAX_DEFAULT):
    """Exact coefficients a_k = (l+k)! / (k! (l-k)! 2^k) of theta_l."""
    l = _check_degree(l, l_max)
    coeffs = []
    for k in range(l + 1):
        num = factorial(l + k)
        den = factorial(k) * factorial(l - k) * 2**k
        a, rem = divmod(num, den)
        if rem:
            raise PrecisionError(f"a_{k} of theta_{l} is not an integer")
        coeffs.append(a)
    return BesselPolynomial(l, tuple(coeffs))


def coefficient(l, k):
    """Single coefficient a_{l,k} = C(l+k, 2k) (2k)! / (k! 2^k), exact."""
    return comb(l + k, 2 * k) * factorial(2 * k) // (factorial(k) * 2**k)


def _sigma(l, z):
    """Vectorised s_l(z) = 1 + z + z k_l'/k_l by the ratio recurrence.

    Returns ``(s, pole)`` where ``pole`` marks points where the final
    denominator vanished (z within tolerance of a root of theta_l).
    Intermediate near-vanishing denominators (z near a root of theta_k,
    k < l) are bridged with the exact limit s_{k+1} -> z - (k+1).
    """
    z = np.asarray(z, dtype=complex)
    s = np.zeros_like(z)
    pending = np.zeros(z.shape, dtype=bool)
    pole = np.zeros(z.shape, dtype=bool)
    az = np.abs(z)
    for n in range(1, l + 1):
        denom = z + n - s
        small = np.abs(denom) < POLE_RTOL * (az + n + np.abs(s))
        small &= ~pending
        safe = np.where(small | pending, 1.0, denom)
        new = -(n * n + (z - n) * s) / safe
        new = np.where(pending, z - n, new)
        if n == l:
            pole = small
            new = np.where(small, np.nan, new)
        pending = small if n < l else pending & False
        s = new
    return s, pole


def _as_output(x, like):
    return complex(x) if np.ndim(like) == 0 else x


def log_derivative_ratio(l, z, l_max=L_MAX_DEFAULT):
    """k_l'(z) / k_l(z) = -1 - (l+1)/z + theta_l'(z)/theta_l(z).

    Raises
    ------
    PoleError
        If z is zero or lies within tolerance of a root of theta_l.
    """
    l = _check_degree(l, l_max)
    zz = np.asarray(z, dtype=complex)
    if np.any(zz == 0):
        raise PoleError("k_l'/k_l is singular at z = 0", where="z", point=0j)
    s, pole = _sigma(l, zz)
    if np.any(pole):
        bad = complex(np.ravel(zz)[np.argmax(np.ravel(pole))])
        raise PoleError(f"z = {bad} is within tolerance of a root of theta_{l}",
                        where="theta_l", point=bad)
    return _as_output((s - 1.0 - zz) / zz, z)


class SymbolSet(NamedTuple):
    """Laplace-domain boundary symbols at one z (or array of z)."""

    sigma_hat: complex
    omega_hat: complex
    rho_hat: complex
    etm_ratio: complex


def sigma_hat(l, z, l_max=L_MAX_DEFAULT):
    """1 + z + z k_l'/k_l, the transform of sigma_l in z = s b / c."""
    l = _check_degree(l, l_max)
    zz = np.asarray(z, dtype=complex)
    s, pole = _sigma(l, zz)
    if np.any(pole):
        bad = complex(np.ravel(zz)[np.argmax(np.ravel(pole))])
        raise PoleError(f"sigma_hat: z = {bad} is a root of theta_{l}",
                        where="theta_l", point=bad)
    return _as_output(s, z)


def laplace_symbols(l, z, l_max=L_MAX_DEFAULT):
    """All four symbols at z; works elementwise on arrays.

    ``rho_hat`` and ``etm_ratio`` share the denominator
    k_l + z k_l' = k_l (sigma_hat - z); a vanishing one raises with
    ``where="k_l + z k_l'"``.
    """
    l = _check_degree(l, l_max, lo=1)
    zz = np.asarray(z, dtype=complex)
    s = sigma_hat(l, zz, l_max=l_max)
    d = s - zz
    small = np.abs(d) < POLE_RTOL * (np.abs(s) + np.abs(zz))
    if np.any(small):
        bad = complex(np.ravel(zz)[np.argmax(np.ravel(small))])
        raise PoleError(f"z = {bad} is a root of k_l + z k_l'",
                        where="k_l + z k_l'", point=bad)
    ll = l * (l + 1)
    omega = zz * s
    rho = zz * s / d
    ratio = ll / d
    return SymbolSet(*(_as_output(v, z) for v in (s, omega, rho, ratio)))
