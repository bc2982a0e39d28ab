"""Exact outgoing multipole fields in r >= a for residual testing.

A scalar outgoing solution of degree l is

    u(r, t) = sum_{k=0}^{l} a_lk c^{k+1} r^{-(k+1)} F_{k+1}(tau),   tau = t - (r - a)/c,

where F_k is the k-fold antiderivative of a causal profile f (F_k = 0 for
tau <= 0) and a_lk are the coefficients of the reversed Bessel polynomial.
TE modes take V^(2) = u; TM modes take V^r = l(l+1) u / r and
V^(1) = (1/r) d_r(r u), which keeps the field divergence-free.

Every quantity is a finite sum of terms coef * r^{-n} * F_j(tau). They are
kept in that form (:class:`Terms`) so derivatives are exact and equal
terms are merged before evaluation.
"""
from dataclasses import dataclass, field
from math import comb, factorial, lgamma

import numpy as np

from .bessel import coefficient
from .errors import UsageError
from .vsh import VshCoefficients, vsh_synthesize

# ---------------------------------------------------------------- profiles


class Profile:
    """Causal signal f with F(k, t): k-fold antiderivative (k > 0) or
    (-k)-th derivative (k < 0), all vanishing for t <= 0."""

    smoothness = None  # f is C^smoothness at t = 0

    def F(self, k, t):
        raise NotImplementedError

    def __call__(self, t):
        return self.F(0, t)


def _phi(k, x):
    """phi_k(x) = sum_i x^i/(i+k)! for complex x (any k >= 0)."""
    x = np.asarray(x, dtype=complex)
    out = np.empty_like(x)
    small = np.abs(x) <= k + 5
    xs = x[small]
    acc = np.zeros_like(xs)
    for i in range(100, -1, -1):
        acc = acc * xs + 1.0 / factorial(i + k)
    out[small] = acc
    xl = x[~small]
    head = np.zeros_like(xl)
    for i in range(k - 1, -1, -1):
        head = head * xl + 1.0 / factorial(i)
    out[~small] = (np.exp(xl) - head) / xl**k
    return out


@dataclass(frozen=True)
class SinPower(Profile):
    """f(t) = sin^p(q t) for t > 0, zero before; C^{p-1} at t = 0."""

    p: int
    q: float

    @property
    def smoothness(self):
        return self.p - 1

    def _modes(self):
        # sin^p x = (2i)^{-p} sum_j C(p, j) (-1)^{p-j} e^{i (2j - p) x}
        pre = (2j) ** (-self.p)
        return [((2 * j - self.p) * self.q, pre * comb(self.p, j) * (-1) ** (self.p - j))
                for j in range(self.p + 1)]

    def F(self, k, t):
        t = np.asarray(t, dtype=float)
        tp = np.maximum(t, 0.0)
        total = np.zeros(t.shape, dtype=complex)
        for nu, cn in self._modes():
            if nu == 0:
                if k >= 0:
                    total += cn * tp**k / factorial(k)
                continue
            if k <= 0:
                total += cn * (1j * nu) ** (-k) * np.exp(1j * nu * tp)
            else:
                total += cn * tp**k * _phi(k, 1j * nu * tp)
        return np.where(t > 0, total.real, 0.0)


def _laguerre(j, alpha, x):
    """Generalized Laguerre L_j^{(alpha)}(x) by the upward recurrence."""
    prev = np.ones_like(x)
    if j == 0:
        return prev
    cur = 1.0 + alpha - x
    for k in range(1, j):
        prev, cur = cur, ((2 * k + 1 + alpha - x) * cur - (k + alpha) * prev) / (k + 1)
    return cur


@dataclass(frozen=True)
class PolyExp(Profile):
    """f(t) = t^n exp(-lam t) for t > 0; C^{n-1} at t = 0."""

    n: int
    lam: float

    @property
    def smoothness(self):
        return self.n - 1

    def F(self, k, t):
        t = np.asarray(t, dtype=float)
        tp = np.maximum(t, 1e-300)
        n, lam = self.n, self.lam
        if k <= 0 and -k <= n:
            # d^j/dt^j [t^n e^{-lam t}] = lam^{j-n} j! x^{n-j} e^{-x} L_j^{(n-j)}(x),
            # x = lam t; the Laguerre recurrence avoids the alternating Leibniz sum.
            j = -k
            x = lam * tp
            lag = _laguerre(j, n - j, x)
            logmag = (j - n) * np.log(lam) + lgamma(j + 1) + (n - j) * np.log(x) - x
            out = lag * np.exp(logmag)
        elif k <= 0:
            # j > n: lam^{j-n} (-1)^{j-n} n! e^{-x} L_n^{(j-n)}(x)
            j = -k
            x = lam * tp
            out = (-lam) ** (j - n) * factorial(n) * np.exp(-x) * _laguerre(n, j - n, x)
        else:
            # t^{n+k} n!/(n+k)! e^{-x} M(k, n+k+1, x), x = lam t, by Kummer's
            # transformation; every term of the series is positive.
            x = (lam * tp).reshape(-1)
            b = n + k + 1
            nterms = int(np.max(x, initial=0.0) + 12 * np.sqrt(np.max(x, initial=0.0)) + 60)
            i = np.arange(nterms)
            with np.errstate(divide="ignore"):
                step = np.log((k + i) / ((b + i) * (i + 1)))
            logc = np.concatenate([[0.0], np.cumsum(step)[:-1]])
            with np.errstate(divide="ignore"):
                lx = np.log(x)
            logs = logc[:, None] + np.multiply.outer(i, lx) - x
            series = np.exp(logs).sum(axis=0)
            pre = np.exp((n + k) * np.log(tp) + lgamma(n + 1) - lgamma(n + k + 1))
            out = pre * series.reshape(tp.shape)
        return np.where(t > 0, out, 0.0)


@dataclass(frozen=True)
class Derivative(Profile):
    """f = base^{(order)}; F_k = base.F_{k - order}."""

    base: Profile
    order: int

    @property
    def smoothness(self):
        return None if self.base.smoothness is None else self.base.smoothness - self.order

    def F(self, k, t):
        return self.base.F(k - self.order, t)


@dataclass(frozen=True)
class Delayed(Profile):
    """f(t - delay), delay >= 0."""

    base: Profile
    delay: float

    @property
    def smoothness(self):
        return self.base.smoothness

    def F(self, k, t):
        return self.base.F(k, np.asarray(t, dtype=float) - self.delay)


# ------------------------------------------------------------- term algebra


@dataclass
class Terms:
    """sum of coef * r^{-n} * F_j(t - (r - a)/c), keyed by (n, j)."""

    c: float
    a: float
    coef: dict = field(default_factory=dict)

    def _new(self, coef):
        return Terms(self.c, self.a, {k: v for k, v in coef.items() if v != 0})

    def dt(self):
        return self._new({(n, j - 1): v for (n, j), v in self.coef.items()})

    def dr(self):
        out = {}
        for (n, j), v in self.coef.items():
            if n:
                out[(n + 1, j)] = out.get((n + 1, j), 0.0) - n * v
            out[(n, j - 1)] = out.get((n, j - 1), 0.0) - v / self.c
        return self._new(out)

    def rpow(self, p):
        """Multiply by r^p."""
        return self._new({(n - p, j): v for (n, j), v in self.coef.items()})

    def __mul__(self, s):
        return self._new({k: s * v for k, v in self.coef.items()})

    __rmul__ = __mul__

    def __add__(self, other):
        out = dict(self.coef)
        for k, v in other.coef.items():
            out[k] = out.get(k, 0.0) + v
        return self._new(out)

    def __sub__(self, other):
        return self + (-1.0) * other

    def laplace(self, r, s):
        """Transform in t, without the shared factor f_hat(s) exp(-s (r - a)/c).

        F_j transforms to s^{-j} f_hat(s) for a causal profile.
        """
        r = complex(r)
        s = complex(s)
        return sum(v * r ** (-n) * s ** (-j) for (n, j), v in self.coef.items())

    def __call__(self, profile, r, t):
        r = np.asarray(r, dtype=float)
        tau = np.asarray(t, dtype=float) - (r - self.a) / self.c
        total = np.zeros(np.broadcast(r, tau).shape)
        by_j = {}
        for (n, j), v in self.coef.items():
            by_j.setdefault(j, []).append((n, v))
        for j, items in by_j.items():
            Fj = profile.F(j, tau)
            total = total + Fj * sum(v * r ** (-n) for n, v in items)
        return total


def potential_terms(l, c, a=0.0):
    """u = sum_k a_lk c^{k+1} r^{-(k+1)} F_{k+1} as :class:`Terms`."""
    if int(l) != l or l < 0:
        raise UsageError(f"l must be a non-negative integer, got {l}")
    return Terms(float(c), float(a),
                 {(k + 1, k + 1): float(coefficient(l, k)) * c ** (k + 1) for k in range(l + 1)})


def scalar_multipole(l, profile, r, t, c, a=0.0):
    """(u, d_r u, d_t u) of the outgoing solution at (r, t)."""
    u = potential_terms(l, c, a)
    return u(profile, r, t), u.dr()(profile, r, t), u.dt()(profile, r, t)


# --------------------------------------------------------------- modes


@dataclass(frozen=True)
class MultipoleField:
    """One (l, m) outgoing mode. ``amplitude`` multiplies the (l, m)
    coefficient; the (l, -m) partner is added so the field is real."""

    l: int
    m: int
    polarization: str  # "TE" | "TM"
    profile: Profile
    c: float
    a: float = 0.0
    amplitude: complex = 1.0

    def __post_init__(self):
        if self.polarization not in ("TE", "TM"):
            raise UsageError(f"polarization must be TE or TM, got {self.polarization!r}")
        if self.l < 1 or abs(self.m) > self.l:
            raise UsageError(f"invalid mode (l, m) = ({self.l}, {self.m})")
        if not self.c > 0:
            raise UsageError("c must be positive")


def _require(mf, pol):
    if mf.polarization != pol:
        raise UsageError(f"expected a {pol} mode, got {mf.polarization}")


def te_terms(mf):
    _require(mf, "TE")
    e2 = potential_terms(mf.l, mf.c, mf.a)
    return {"e2": e2, "dr_e2": e2.dr(), "dt_e2": e2.dt()}


def tm_terms(mf):
    _require(mf, "TM")
    u = potential_terms(mf.l, mf.c, mf.a)
    er = (mf.l * (mf.l + 1)) * u.rpow(-1)
    e1 = u.rpow(1).dr().rpow(-1)
    return {"er": er, "e1": e1, "dr_e1": e1.dr(), "dt_er": er.dt(), "dt_e1": e1.dt()}


def te_field(mf, r, t):
    """{e2, dr_e2, dt_e2} of a TE mode (unit amplitude)."""
    return {k: v(mf.profile, r, t) for k, v in te_terms(mf).items()}


def tm_field(mf, r, t):
    """{er, e1, dr_e1, dt_er, dt_e1} of a TM mode (unit amplitude)."""
    return {k: v(mf.profile, r, t) for k, v in tm_terms(mf).items()}


def lhs_terms(mf, b):
    """Channels of d_t V_T - c x (curl V) at r = b, unit amplitude.

    grad_S Y channel: d_t V^(1) + (c/b) d_r(r V^(1)) - (c/b) V^r
    T channel:        d_t V^(2) + (c/b) d_r(r V^(2))
    Returns (grad_terms, t_terms); the channel that the polarization does
    not excite is None.
    """
    k = mf.c / b
    if mf.polarization == "TE":
        e2 = potential_terms(mf.l, mf.c, mf.a)
        return None, e2.dt() + k * e2.rpow(1).dr()
    d = tm_terms(mf)
    return d["dt_e1"] + k * d["e1"].rpow(1).dr() - k * d["er"], None


def mode_values(mf, b, t):
    """(V^r, V^(1), V^(2), lhs_grad, lhs_T) at r = b, unit amplitude.

    ``t`` may be an array; the result then has shape (5,) + t.shape.
    """
    t = np.asarray(t, dtype=float)
    zero = np.zeros(t.shape)
    if mf.polarization == "TE":
        e2 = potential_terms(mf.l, mf.c, mf.a)
        vals = [zero, zero, e2(mf.profile, b, t)]
    else:
        d = tm_terms(mf)
        vals = [d["er"](mf.profile, b, t), d["e1"](mf.profile, b, t), zero]
    g, tt = lhs_terms(mf, b)
    vals += [zero if g is None else g(mf.profile, b, t),
             zero if tt is None else tt(mf.profile, b, t)]
    return np.array(vals)


def _place(arr, L, l, m, value):
    arr[l, L + m] += value
    if m:
        arr[l, L - m] += (-1) ** m * np.conj(value)


def coefficients_from_values(modes, values, L):
    """(field, lhs) VshCoefficients from per-mode values of shape (n_modes, 5)."""
    shape = (L + 1, 2 * L + 1)
    arrs = [np.zeros(shape, dtype=complex) for _ in range(5)]
    for mf, vals in zip(modes, values):
        if mf.l > L:
            raise UsageError(f"mode l={mf.l} exceeds the band limit {L}")
        amp = mf.amplitude if mf.m else complex(mf.amplitude).real
        for arr, v in zip(arrs, vals):
            if v:
                _place(arr, L, mf.l, mf.m, amp * v)
    er, e1, e2, g1, g2 = arrs
    zero = np.zeros(shape, dtype=complex)
    return VshCoefficients(L, er, e1, e2), VshCoefficients(L, zero, g1, g2)


def mode_coefficients(modes, L, b, t):
    """(field, lhs) VshCoefficients at r = b and time t for a list of modes."""
    values = [mode_values(mf, b, t) for mf in modes]
    return coefficients_from_values(modes, values, L)


def assemble_frames(modes, grid, b, t, L=None):
    """(E_frame, lhs_frame) on the sphere r = b at time t."""
    L = grid.band_limit if L is None else L
    field_c, lhs_c = mode_coefficients(modes, L, b, t)
    return vsh_synthesize(field_c, grid, t=t), vsh_synthesize(lhs_c, grid, t=t)


def _point_values(mf, kind, b, r, t):
    """(V^r, V^(1), V^(2)) arrays of one mode at radii r, unit amplitude."""
    zero = np.zeros(np.shape(r))
    if kind == "lhs":
        g, tt = lhs_terms(mf, b)
        return (zero, zero if g is None else g(mf.profile, r, t),
                zero if tt is None else tt(mf.profile, r, t))
    if mf.polarization == "TE":
        return zero, zero, potential_terms(mf.l, mf.c, mf.a)(mf.profile, r, t)
    d = tm_terms(mf)
    return d["er"](mf.profile, r, t), d["e1"](mf.profile, r, t), zero


def cartesian_field(modes, points, t, kind="field", b=None):
    """Cartesian vectors (n, 3) at arbitrary points, for curl checks.

    ``kind="field"`` evaluates E; ``kind="lhs"`` evaluates the channel
    form of d_t E_T - c x (curl E) on the sphere of radius ``b``.
    """
    from .vsh import legendre, legendre_dtheta
    pts = np.asarray(points, dtype=float)
    r = np.linalg.norm(pts, axis=1)
    theta = np.arccos(np.clip(pts[:, 2] / r, -1, 1))
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    L = max(mf.l for mf in modes)
    y = legendre(L, theta)
    d = legendre_dtheta(L, theta, y)
    s = np.sin(theta)
    vr, vt, vp = (np.zeros(len(r)) for _ in range(3))
    for mf in modes:
        amp = mf.amplitude if mf.m else complex(mf.amplitude).real
        pr, p1, p2 = _point_values(mf, kind, b, r, t)
        pairs = [(mf.m, amp)]
        if mf.m:
            pairs.append((-mf.m, (-1) ** mf.m * np.conj(amp)))
        for m, a in pairs:
            sign = (-1) ** m if m < 0 else 1
            e = np.exp(1j * m * phi)
            Y = sign * y[abs(m), mf.l] * e
            dY = sign * d[abs(m), mf.l] * e
            sY = 1j * m * Y / s
            vr += (a * pr * Y).real
            vt += (a * (p1 * dY + p2 * sY)).real
            vp += (a * (p1 * sY - p2 * dY)).real
    st, ct, sp, cp = s, np.cos(theta), np.sin(phi), np.cos(phi)
    ex = vr * st * cp + vt * ct * cp - vp * sp
    ey = vr * st * sp + vt * ct * sp + vp * cp
    ez = vr * ct - vt * st
    return np.stack([ex, ey, ez], axis=1)


# ------------------------------------------------------------ mode families


def profile_from_spec(spec):
    """Profile from a dict such as {"kind": "polyexp", "n": 20, "lam": 6.0,
    "derivative": 3, "delay": 0.5}."""
    kind = spec.get("kind")
    if kind == "polyexp":
        prof = PolyExp(int(spec["n"]), float(spec["lam"]))
    elif kind == "sinpower":
        prof = SinPower(int(spec["p"]), float(spec["q"]))
    else:
        raise UsageError(f"unknown profile kind {kind!r}")
    if spec.get("derivative"):
        prof = Derivative(prof, int(spec["derivative"]))
    if spec.get("delay"):
        prof = Delayed(prof, float(spec["delay"]))
    return prof


def modes_from_spec(spec, c, a):
    """Modes from a list of dicts with keys l, m, polarization, profile and
    optional amplitude [re, im]."""
    modes = []
    for item in spec:
        amp = item.get("amplitude", [1.0, 0.0])
        modes.append(MultipoleField(int(item["l"]), int(item["m"]), item["polarization"],
                                    profile_from_spec(item["profile"]), float(c), float(a),
                                    complex(amp[0], amp[1])))
    return modes


# (l, m, polarization, delay) of the default mixed family
FAMILY = [(1, 0, "TE", 0.0), (1, 1, "TM", 0.5), (2, 1, "TE", 1.0), (3, 2, "TM", 0.2),
          (4, -3, "TE", 2.0), (6, 2, "TM", 3.0), (8, 5, "TE", 1.5), (10, 0, "TM", 4.0),
          (13, 7, "TE", 5.0), (20, 11, "TM", 6.0)]


def family_spec(width=3.0, smooth=14):
    """Default ten-mode TE/TM family, l <= 20.

    Mode l uses the (l+1)-th derivative of t^n exp(-n t / width), n = l + smooth,
    so the potential involves only derivatives of a smooth pulse and the
    near-field terms stay bounded. Pulses are delayed to spread activity
    over 0 <= t <= 10.
    """
    out = []
    for l, m, pol, delay in FAMILY:
        n = l + smooth
        out.append({"l": l, "m": m, "polarization": pol,
                    "amplitude": [float(np.cos(0.3 * m)), float(np.sin(0.3 * m))],
                    "profile": {"kind": "polyexp", "n": n, "lam": n / width,
                                "derivative": l + 1, "delay": delay}})
    return out


def normalize_modes(modes, b, t_max=12.0, samples=1200):
    """Rescale each mode so max_t |(V^r, V^(1), V^(2))| at r = b is 1 in magnitude."""
    t = np.linspace(0.0, t_max, samples)
    out = []
    for mf in modes:
        peak = float(np.max(np.abs(mode_values(mf, b, t)[:3])))
        amp = mf.amplitude / abs(mf.amplitude) / peak if peak > 0 else mf.amplitude
        out.append(MultipoleField(mf.l, mf.m, mf.polarization, mf.profile, mf.c, mf.a, amp))
    return out


def standard_family(c, a, b, width=3.0):
    """The default family, normalized at r = b."""
    return normalize_modes(modes_from_spec(family_spec(width), c, a), b)
