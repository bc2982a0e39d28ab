"""Time-domain boundary kernels as exponential sums.

A kernel is stored in the dimensionless variable z = s b / c:

    K(t) = scale * sum_j w_j exp(scale * p_j * t) + instantaneous * delta(t),

with ``scale = c / b``. Its transform in z is sum_j w_j / (z - p_j) +
instantaneous, which is what ``kernel_laplace`` returns and what the
symbols in :mod:`nrbc.bessel` are checked against.
"""
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConjugacyError, PoleError, TableLookupError, TableParseError,
                     UsageError)
from .zeros import PoleSet

TABLE_HEADER = "# nrbc-poles v1"
REAL_RTOL = 1e-10
CONJ_RTOL = 1e-12


class TruncationWarning(UserWarning):
    """A truncated kernel was evaluated before its validity time t0."""


@dataclass(frozen=True)
class Provenance:
    kind: str = "exact"  # exact | truncated | compressed
    beta: float = None
    a: float = None
    t0: float = None
    d: int = None
    tol: float = None

    def as_dict(self):
        return {k: v for k, v in self.__dict__.items() if v is not None}


def conjugate_partner(values, rtol=CONJ_RTOL):
    """Index of the conjugate partner of each entry, or None if not closed.

    Real entries are their own partners.
    """
    values = np.asarray(values, dtype=complex)
    n = len(values)
    partner = np.full(n, -1)
    scale = max(1.0, float(np.max(np.abs(values), initial=0.0)))
    for i in range(n):
        if partner[i] >= 0:
            continue
        d = np.abs(values - np.conj(values[i]))
        d[partner >= 0] = np.inf
        j = int(np.argmin(d))
        if d[j] > rtol * scale:
            return None
        partner[i] = j
        partner[j] = i
    return partner


@dataclass(frozen=True, eq=False)
class ExponentialKernel:
    l: int
    kind: str  # "sigma" | "omega"
    scale: float
    poles: np.ndarray
    weights: np.ndarray
    instantaneous: complex = 0j
    provenance: Provenance = field(default_factory=Provenance)

    def __post_init__(self):
        poles = np.array(self.poles, dtype=complex)
        weights = np.array(self.weights, dtype=complex)
        if poles.shape != weights.shape or poles.ndim != 1:
            raise UsageError("poles and weights must be 1-D arrays of equal length")
        if np.any(poles.real >= 0):
            raise UsageError("kernel poles must have negative real part")
        pw = np.concatenate([poles, weights]) if len(poles) else poles
        partner = conjugate_partner(poles)
        if partner is None or (len(poles) and np.max(
                np.abs(weights[partner] - np.conj(weights))) > CONJ_RTOL * max(1.0, np.max(np.abs(pw)))):
            raise ConjugacyError("poles/weights are not closed under conjugation")
        inst = complex(self.instantaneous)
        if abs(inst.imag) > REAL_RTOL * max(abs(inst.real), 1e-300):
            raise ConjugacyError(f"instantaneous weight {inst} is not real")
        poles.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "poles", poles)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "instantaneous", complex(inst.real))

    @property
    def rates(self):
        """Dimensional exponents scale * p_j (1/time)."""
        return self.scale * self.poles

    def __len__(self):
        return len(self.poles)


def _check(l, b, c, p):
    if not (b > 0 and c > 0):
        raise UsageError(f"b and c must be positive, got b={b}, c={c}")
    if p.l != l:
        raise UsageError(f"pole set is for l={p.l}, kernel requested for l={l}")


def _provenance(p, t0):
    if p.filtered:
        return Provenance("truncated", beta=p.beta, a=p.a, t0=t0)
    return Provenance("exact")


def sigma_kernel(l, b, c, p: PoleSet, t0=None):
    """sigma_l(t) = (c/b) sum_j z_j exp((c/b) z_j t); truncated if ``p`` is filtered."""
    _check(l, b, c, p)
    return ExponentialKernel(l, "sigma", c / b, p.zeros, p.zeros, 0j, _provenance(p, t0))


def omega_kernel(l, b, c, p: PoleSet, t0=None):
    """omega_l = (b/c)(sigma_l' + sigma_l(0) delta).

    The Dirac weight is the sum over *all* l zeros, also for filtered sets.
    """
    _check(l, b, c, p)
    return ExponentialKernel(l, "omega", c / b, p.zeros, p.zeros**2, p.full_sum,
                             _provenance(p, t0))


def eval_kernel(k: ExponentialKernel, t):
    """Smooth part of the kernel at t >= 0 (the Dirac part is not sampled)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise UsageError("kernel evaluated at negative time")
    prov = k.provenance
    if prov.kind == "truncated" and prov.t0 is not None and np.any(t_arr < prov.t0):
        warnings.warn(f"truncated kernel (beta={prov.beta}) evaluated before t0={prov.t0}",
                      TruncationWarning, stacklevel=2)
    terms = k.weights * np.exp(np.multiply.outer(t_arr, k.rates))
    total = k.scale * terms.sum(axis=-1)
    mag = k.scale * np.abs(terms).sum(axis=-1)
    if np.any(np.abs(total.imag) > REAL_RTOL * np.maximum(mag, 1e-300)):
        raise ConjugacyError("kernel value has a significant imaginary part")
    out = total.real
    return float(out) if out.ndim == 0 else out


def kernel_laplace(k: ExponentialKernel, z):
    """sum_j w_j / (z - p_j) + instantaneous, in z = s b / c."""
    zz = np.asarray(z, dtype=complex)
    d = np.subtract.outer(zz, k.poles)
    near = np.abs(d) < 1e-12 * (np.abs(zz)[..., None] + np.abs(k.poles))
    if np.any(near):
        raise PoleError("kernel transform evaluated at a pole", where="kernel pole",
                        point=complex(np.ravel(np.broadcast_to(zz[..., None], d.shape)[near])[0]))
    out = (k.weights / d).sum(axis=-1) + k.instantaneous
    return complex(out) if np.ndim(z) == 0 else out


@dataclass
class CompressedTable:
    """Per-l rational approximations {alpha_j, z~_j} with optional tolerance."""

    entries: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    def __contains__(self, l):
        return l in self.entries

    def __len__(self):
        return len(self.entries)


def _validate_record(l, alphas, poles, line):
    if np.any(poles.real >= 0):
        raise TableParseError(f"record L {l}: pole with non-negative real part", line)
    partner = conjugate_partner(poles)
    scale = max(1.0, float(np.max(np.abs(alphas), initial=0.0)))
    if partner is None or (len(poles) and np.max(
            np.abs(alphas[partner] - np.conj(alphas))) > CONJ_RTOL * scale):
        raise TableParseError(f"record L {l}: not closed under conjugation", line)


def load_compressed_table(stream):
    """Parse the ``# nrbc-poles v1`` text format.

    Accepts a text stream or a string. Blank lines and later ``#`` comment
    lines are ignored.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    table = CompressedTable()
    lines = [(n, raw.strip()) for n, raw in enumerate(stream, start=1)]
    lines = [(n, s) for n, s in lines if s]
    if not lines:
        return table
    n0, first = lines[0]
    if first != TABLE_HEADER:
        raise TableParseError(f"expected header {TABLE_HEADER!r}", n0)
    body = [(n, s) for n, s in lines[1:] if not s.startswith("#")]
    i = 0
    while i < len(body):
        n, s = body[i]
        parts = s.split()
        if len(parts) not in (4, 6) or parts[0] != "L" or parts[2] != "D" or (
                len(parts) == 6 and parts[4] != "TOL"):
            raise TableParseError(f"expected 'L <l> D <d> [TOL <tol>]', got {s!r}", n)
        try:
            l, d = int(parts[1]), int(parts[3])
            tol = float(parts[5]) if len(parts) == 6 else None
        except ValueError:
            raise TableParseError(f"bad record header {s!r}", n) from None
        if l < 1 or d < 0:
            raise TableParseError(f"invalid l={l} or d={d}", n)
        if l in table.entries:
            raise TableParseError(f"duplicate record for l={l}", n)
        rows = body[i + 1:i + 1 + d]
        if len(rows) < d:
            raise TableParseError(f"record L {l} ends after {len(rows)} of {d} lines", n)
        vals = []
        for rn, rs in rows:
            cols = rs.split()
            if len(cols) != 4:
                raise TableParseError(f"expected 4 numbers, got {rs!r}", rn)
            try:
                vals.append([float(x) for x in cols])
            except ValueError:
                raise TableParseError(f"non-numeric entry in {rs!r}", rn) from None
        arr = np.array(vals, dtype=float).reshape(d, 4)
        alphas = arr[:, 0] + 1j * arr[:, 1]
        poles = arr[:, 2] + 1j * arr[:, 3]
        _validate_record(l, alphas, poles, n)
        table.entries[l] = (alphas, poles)
        table.tolerances[l] = tol
        i += 1 + d
    return table


def serialize_table(table: CompressedTable):
    """Canonical text form: records sorted by l, 17 significant digits."""
    out = [TABLE_HEADER]
    for l in sorted(table.entries):
        alphas, poles = table.entries[l]
        head = f"L {l} D {len(poles)}"
        if table.tolerances.get(l) is not None:
            head += f" TOL {table.tolerances[l]:.17g}"
        out.append(head)
        for a, p in zip(alphas, poles):
            out.append(f"{a.real:.17g} {a.imag:.17g} {p.real:.17g} {p.imag:.17g}")
    return "\n".join(out) + "\n"


def compressed_kernels(table: CompressedTable, l, b, c):
    """(sigma-hat, omega-hat) from the table entry for l.

    The omega Dirac weight is sum_j alpha_j, as the compressed form defines it.
    """
    if not (b > 0 and c > 0):
        raise UsageError(f"b and c must be positive, got b={b}, c={c}")
    if l not in table.entries:
        raise TableLookupError(f"compressed table has no entry for l={l}")
    alphas, poles = table.entries[l]
    prov = Provenance("compressed", d=len(poles), tol=table.tolerances.get(l))
    sigma = ExponentialKernel(l, "sigma", c / b, poles, alphas, 0j, prov)
    omega = ExponentialKernel(l, "omega", c / b, poles, alphas * poles,
                              complex(np.sum(alphas)), prov)
    return sigma, omega
