"""Scalar and vector spherical-harmonic transforms on a Gauss-Legendre grid.

Convention (fixed here and used throughout the package):

    Y_l^m(theta, phi) = y_l^m(theta) exp(i m phi),

orthonormal on the unit sphere with the Condon-Shortley phase, so
Y_l^{-m} = (-1)^m conj(Y_l^m). The tangential basis is

    grad_S Y = d_theta Y e_theta + (1/sin theta) d_phi Y e_phi,
    T        = grad_S Y x e_r = (1/sin theta) d_phi Y e_theta - d_theta Y e_phi,

both with squared norm l(l+1), and a field is expanded as

    V = sum_{l,m} V^r_lm Y e_r + V^(1)_lm grad_S Y + V^(2)_lm T.

Coefficient arrays have shape (L+1, 2L+1) and are indexed [l, L + m].
The longitude transform uses the FFT.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, UsageError

REAL_ATOL = 1e-9


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Gauss-Legendre colatitudes (theta increasing) times uniform longitudes."""

    n_theta: int
    n_phi: int
    theta: np.ndarray
    weights: np.ndarray
    phi: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def cos_theta(self):
        return np.cos(self.theta)

    @property
    def shape(self):
        return (self.n_theta, self.n_phi)

    @property
    def band_limit(self):
        """Largest L with exact analysis: L <= N_theta - 1 and L < N_phi / 2."""
        return min(self.n_theta - 1, self.n_phi // 2 - 1)

    def manifest(self):
        return {"n_theta": self.n_theta, "n_phi": self.n_phi,
                "cos_theta": self.cos_theta.tolist(), "weights": self.weights.tolist()}


def build_grid(n_theta, n_phi):
    if int(n_theta) != n_theta or n_theta < 2:
        raise UsageError(f"N_theta must be an integer >= 2, got {n_theta}")
    if int(n_phi) != n_phi or n_phi < 4 or n_phi % 2:
        raise UsageError(f"N_phi must be an even integer >= 4, got {n_phi}")
    x, w = np.polynomial.legendre.leggauss(int(n_theta))
    # leggauss returns x ascending, i.e. theta descending
    theta = np.arccos(x[::-1])
    w = w[::-1].copy()
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    for a in (theta, w, phi):
        a.setflags(write=False)
    return SphereGrid(int(n_theta), int(n_phi), theta, w, phi)


def legendre(L, theta):
    """Orthonormal y_l^m(theta) for 0 <= m <= l <= L, shape (L+1, L+1, n): [m, l, i].

    Entries with l < m are zero.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    x, s = np.cos(theta), np.sin(theta)
    y = np.zeros((L + 1, L + 1, len(theta)))
    ymm = np.full(len(theta), 1.0 / np.sqrt(4 * np.pi))
    for m in range(L + 1):
        if m > 0:
            ymm = -np.sqrt((2 * m + 1) / (2 * m)) * s * ymm
        y[m, m] = ymm
        if m + 1 <= L:
            y[m, m + 1] = np.sqrt(2 * m + 3) * x * ymm
        a_prev = np.sqrt(2 * m + 3)
        for l in range(m + 2, L + 1):
            a = np.sqrt((4 * l * l - 1) / (l * l - m * m))
            y[m, l] = a * (x * y[m, l - 1] - y[m, l - 2] / a_prev)
            a_prev = a
    return y


def legendre_dtheta(L, theta, y=None):
    """d/dtheta of y_l^m, same layout as :func:`legendre`."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if y is None:
        y = legendre(L, theta)
    d = np.zeros_like(y)
    l = np.arange(L + 1)
    for m in range(L + 1):
        up = y[m + 1] if m < L else 0.0
        if m == 0:
            # y^{-1} = -y^1
            d[0] = np.sqrt(l * (l + 1))[:, None] * (y[1] if L >= 1 else 0.0)
            continue
        cu = np.sqrt(np.maximum((l - m) * (l + m + 1), 0))[:, None]
        cd = np.sqrt(np.maximum((l + m) * (l - m + 1), 0))[:, None]
        d[m] = 0.5 * (cu * up - cd * y[m - 1])
        d[m, :m] = 0.0
    return d


def _full_m(a, sign_odd):
    """Extend a [m>=0, l, i] table to m = -L..L using y^{-m} = (-1)^m y^m."""
    L = a.shape[0] - 1
    m = np.arange(1, L + 1)
    neg = a[1:][::-1] * np.where(m[::-1] % 2, -1.0, 1.0)[:, None, None] * sign_odd
    return np.concatenate([neg, a], axis=0)


def _basis(grid, L):
    """Cached tables over m = -L..L, layout [L+m, l, i]."""
    key = ("basis", L)
    if key not in grid._cache:
        y = legendre(L, grid.theta)
        d = legendre_dtheta(L, grid.theta, y)
        yf, df = _full_m(y, 1.0), _full_m(d, 1.0)
        m = np.arange(-L, L + 1)[:, None, None]
        ys = yf * m / np.sin(grid.theta)  # m y / sin(theta)
        grid._cache[key] = (yf, df, ys)
    return grid._cache[key]


def _check_L(grid, L):
    if L < 0 or L > grid.band_limit:
        raise UsageError(f"L_max = {L} exceeds the grid band limit {grid.band_limit}")


def _forward_fft(grid, v, L):
    """(2 pi / N_phi) sum_k v e^{-i m phi_k} for m = -L..L, shape (n_theta, 2L+1)."""
    f = np.fft.fft(v, axis=-1) * (2 * np.pi / grid.n_phi)
    return f[:, np.arange(-L, L + 1) % grid.n_phi]


def _inverse_fft(grid, g, L):
    """sum_m g_m e^{i m phi_k} from g of shape (n_theta, 2L+1)."""
    full = np.zeros((g.shape[0], grid.n_phi), dtype=complex)
    full[:, np.arange(-L, L + 1) % grid.n_phi] = g
    return np.fft.ifft(full, axis=-1) * grid.n_phi


def _check_samples(grid, v):
    v = np.asarray(v)
    if v.shape != grid.shape:
        raise UsageError(f"samples have shape {v.shape}, grid is {grid.shape}")
    return v


def sh_analyze(grid, samples, L=None):
    """f_lm = sum_ik w_i (2 pi / N_phi) f(i, k) conj(Y_l^m(theta_i, phi_k))."""
    L = grid.band_limit if L is None else L
    _check_L(grid, L)
    f = _forward_fft(grid, _check_samples(grid, samples), L)
    yf, _, _ = _basis(grid, L)
    return np.einsum("mli,i,im->lm", yf, grid.weights, f)


def sh_synthesize(coeffs, grid):
    """Complex samples sum_lm f_lm Y_l^m on the grid."""
    coeffs = np.asarray(coeffs)
    L = coeffs.shape[0] - 1
    if coeffs.shape != (L + 1, 2 * L + 1):
        raise UsageError(f"coefficients must have shape (L+1, 2L+1), got {coeffs.shape}")
    _check_L(grid, L)
    yf, _, _ = _basis(grid, L)
    g = np.einsum("mli,lm->im", yf, coeffs)
    return _inverse_fft(grid, g, L)


@dataclass(frozen=True, eq=False)
class FieldFrame:
    """Spherical components (V_r, V_theta, V_phi) on a grid at time t."""

    grid: SphereGrid
    vr: np.ndarray
    vtheta: np.ndarray
    vphi: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in ("vr", "vtheta", "vphi"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != self.grid.shape:
                raise UsageError(f"{name} has shape {a.shape}, grid is {self.grid.shape}")
            object.__setattr__(self, name, a)

    def _compatible(self, other):
        if other.grid.shape != self.grid.shape:
            raise UsageError("frames live on different grids")

    def __add__(self, other):
        self._compatible(other)
        return FieldFrame(self.grid, self.vr + other.vr, self.vtheta + other.vtheta,
                          self.vphi + other.vphi, self.t)

    def __sub__(self, other):
        self._compatible(other)
        return FieldFrame(self.grid, self.vr - other.vr, self.vtheta - other.vtheta,
                          self.vphi - other.vphi, self.t)

    def __mul__(self, a):
        return FieldFrame(self.grid, a * self.vr, a * self.vtheta, a * self.vphi, self.t)

    __rmul__ = __mul__

    def max_abs(self):
        return float(max(np.max(np.abs(self.vr)), np.max(np.abs(self.vtheta)),
                         np.max(np.abs(self.vphi))))


def zero_frame(grid, t=0.0):
    z = np.zeros(grid.shape)
    return FieldFrame(grid, z, z, z, t)


@dataclass(frozen=True, eq=False)
class VshCoefficients:
    """(V^r, V^(1), V^(2)) arrays of shape (L+1, 2L+1), indexed [l, L + m]."""

    L_max: int
    er: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    unresolved_norm: float = None

    def __post_init__(self):
        shape = (self.L_max + 1, 2 * self.L_max + 1)
        for name in ("er", "e1", "e2"):
            a = np.asarray(getattr(self, name), dtype=complex)
            if a.shape != shape:
                raise UsageError(f"{name} must have shape {shape}, got {a.shape}")
            object.__setattr__(self, name, a)

    @classmethod
    def zeros(cls, L):
        z = np.zeros((L + 1, 2 * L + 1), dtype=complex)
        return cls(L, z, z.copy(), z.copy())

    def get(self, l, m):
        """(V^r, V^(1), V^(2)) for mode (l, m)."""
        j = self.L_max + m
        return complex(self.er[l, j]), complex(self.e1[l, j]), complex(self.e2[l, j])

    def energy(self):
        """sum |V^r|^2 + l(l+1)(|V^(1)|^2 + |V^(2)|^2)."""
        ll = (np.arange(self.L_max + 1) * (np.arange(self.L_max + 1) + 1))[:, None]
        return float(np.sum(np.abs(self.er) ** 2)
                     + np.sum(ll * (np.abs(self.e1) ** 2 + np.abs(self.e2) ** 2)))


def vsh_analyze(frame, L=None, diagnostics=False):
    """Project a frame onto Y e_r, grad_S Y and T up to degree L.

    With ``diagnostics`` the norm of the part not represented (the l = 0
    radial mode is excluded from the expansion) is stored as
    ``unresolved_norm``.
    """
    grid = frame.grid
    L = grid.band_limit if L is None else L
    _check_L(grid, L)
    yf, df, ys = _basis(grid, L)
    w = grid.weights
    fr = _forward_fft(grid, frame.vr, L)
    ft = _forward_fft(grid, frame.vtheta, L)
    fp = _forward_fft(grid, frame.vphi, L)
    er = np.einsum("mli,i,im->lm", yf, w, fr)
    dt_t = np.einsum("mli,i,im->lm", df, w, ft)
    dt_p = np.einsum("mli,i,im->lm", df, w, fp)
    ys_t = np.einsum("mli,i,im->lm", ys, w, ft)
    ys_p = np.einsum("mli,i,im->lm", ys, w, fp)
    l = np.arange(L + 1)
    ll = np.where(l > 0, l * (l + 1), 1)[:, None]
    e1 = (dt_t - 1j * ys_p) / ll
    e2 = (-1j * ys_t - dt_p) / ll
    e1[0] = 0
    e2[0] = 0
    er_exp = er.copy()
    er_exp[0] = 0
    out = VshCoefficients(L, er_exp, e1, e2)
    if diagnostics:
        rest = frame - vsh_synthesize(out, grid, t=frame.t)
        out = VshCoefficients(L, er_exp, e1, e2, unresolved_norm=discrete_l2_norm(rest))
    return out


def vsh_synthesize(c, grid, t=0.0, check_real=True):
    """Evaluate the expansion on the grid; imaginary parts must vanish."""
    L = c.L_max
    _check_L(grid, L)
    yf, df, ys = _basis(grid, L)
    gr = np.einsum("mli,lm->im", yf, c.er)
    gt = np.einsum("mli,lm->im", df, c.e1) + 1j * np.einsum("mli,lm->im", ys, c.e2)
    gp = 1j * np.einsum("mli,lm->im", ys, c.e1) - np.einsum("mli,lm->im", df, c.e2)
    comps = [_inverse_fft(grid, g, L) for g in (gr, gt, gp)]
    if check_real:
        scale = max(1.0, max(float(np.max(np.abs(v))) for v in comps))
        imag = max(float(np.max(np.abs(v.imag))) for v in comps)
        if imag > REAL_ATOL * scale:
            raise NumericalError("synthesized field is not real; coefficients are not "
                                 "conjugate-symmetric", {"max_imag": imag})
    return FieldFrame(grid, *(v.real for v in comps), t=t)


def discrete_l2_norm(frame):
    """sqrt(sum_ik w_i (2 pi / N_phi) |V(theta_i, phi_k)|^2) over all components."""
    g = frame.grid
    sq = frame.vr ** 2 + frame.vtheta ** 2 + frame.vphi ** 2
    return float(np.sqrt(np.sum(g.weights[:, None] * sq) * 2 * np.pi / g.n_phi))


def write_frame_csv(frame, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta_index", "phi_index", "Vr", "Vtheta", "Vphi"])
        for i in range(frame.grid.n_theta):
            for k in range(frame.grid.n_phi):
                w.writerow([i, k, f"{frame.vr[i, k]:.16e}", f"{frame.vtheta[i, k]:.16e}",
                            f"{frame.vphi[i, k]:.16e}"])


def read_frame_csv(path, grid, t=0.0):
    arrs = np.zeros((3,) + grid.shape)
    seen = np.zeros(grid.shape, dtype=bool)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["theta_index", "phi_index", "Vr", "Vtheta", "Vphi"]:
            raise UsageError(f"{path}: unexpected header {header}")
        for row in reader:
            i, k = int(row[0]), int(row[1])
            arrs[:, i, k] = [float(v) for v in row[2:]]
            seen[i, k] = True
    if not seen.all():
        raise UsageError(f"{path}: frame is missing grid points")
    return FieldFrame(grid, *arrs, t=t)
