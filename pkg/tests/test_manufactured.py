import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from nrbc.bessel import laplace_symbols
from nrbc.convolution import ConvolutionConfig, ConvolutionState
from nrbc.errors import UsageError
from nrbc.kernels import sigma_kernel
from nrbc.manufactured import (Delayed, Derivative, MultipoleField, PolyExp, SinPower,
                               assemble_frames, cartesian_field, family_spec, mode_values,
                               modes_from_spec, potential_terms, scalar_multipole,
                               standard_family, te_field, tm_terms)
from nrbc.vsh import build_grid, discrete_l2_norm
from nrbc.zeros import find_zeros

mpmath.mp.dps = 30


def mp_profile(kind, **kw):
    if kind == "polyexp":
        return lambda s: s ** kw["n"] * mpmath.exp(-kw["lam"] * s)
    return lambda s: mpmath.sin(kw["q"] * s) ** kw["p"]


def mp_F(f, k, t):
    """k-fold antiderivative (Cauchy formula) or (-k)-th derivative at t > 0."""
    if k <= 0:
        return float(mpmath.diff(f, t, -k))
    return float(mpmath.quad(lambda s: (t - s) ** (k - 1) * f(s), [0, t]) / mpmath.factorial(k - 1))


@pytest.mark.parametrize("prof,kind,kw", [
    (PolyExp(6, 2.0), "polyexp", {"n": 6, "lam": 2.0}),
    (PolyExp(30, 10.0), "polyexp", {"n": 30, "lam": 10.0}),
    (SinPower(6, 6.0), "sinpower", {"p": 6, "q": 6.0}),
])
@pytest.mark.parametrize("k", [-3, -1, 0, 1, 2, 5])
def test_profile_against_multiprecision(prof, kind, kw, k):
    f = mp_profile(kind, **kw)
    for t in (0.37, 1.3, 4.2):
        ref = mp_F(f, k, t)
        scale = max(abs(mp_F(f, k, s)) for s in (0.5, 1.5, 3.0, 4.2))
        assert abs(prof.F(k, t) - ref) <= 1e-12 * max(scale, 1e-300)


def test_polyexp_high_derivatives():
    p = PolyExp(34, 34 / 3)
    f = mp_profile("polyexp", n=34, lam=34 / 3)
    for j in (21, 36):
        for t in (1.0, 4.0):
            ref = mp_F(f, -j, t)
            assert abs(p.F(-j, t) - ref) <= 1e-11 * abs(ref)


def second_order(err, h=1e-2, floor=1e-10):
    """err(h) shrinks at least like h^2 (or is already at rounding level)."""
    e1, e2 = err(h), err(h / 2)
    return e2 <= floor or e1 / e2 >= 3.0


@given(st.sampled_from([PolyExp(8, 3.0), SinPower(6, 6.0), Delayed(Derivative(PolyExp(12, 4.0), 3), 0.4)]),
       st.integers(-2, 4), st.floats(0.1, 5.0))
def test_antiderivative_chain(prof, k, t):
    # F_k' = F_{k-1}, checked by central differences converging at O(h^2)
    scale = max(1.0, abs(prof.F(k - 1, t)))
    err = lambda h: abs((prof.F(k, t + h) - prof.F(k, t - h)) / (2 * h) - prof.F(k - 1, t)) / scale
    assert second_order(err, h=0.005)


@given(st.sampled_from([PolyExp(8, 3.0), SinPower(6, 6.0)]), st.integers(-2, 4))
def test_profiles_are_causal(prof, k):
    assert np.all(prof.F(k, np.array([-1.0, -1e-9, 0.0])) == 0)


def test_smoothness_classes():
    assert SinPower(6, 6.0).smoothness == 5
    assert Derivative(PolyExp(10, 1.0), 3).smoothness == 6


def test_low_degree_potentials():
    c, prof = 2.0, PolyExp(5, 2.0)
    r, t = 1.7, 2.5
    tau = t - r / c
    u0 = potential_terms(0, c)(prof, r, t)
    assert u0 == pytest.approx(c / r * prof.F(1, tau), rel=1e-14)
    u1 = potential_terms(1, c)(prof, r, t)
    assert u1 == pytest.approx(c / r * prof.F(1, tau) + (c / r) ** 2 * prof.F(2, tau), rel=1e-14)


@pytest.mark.parametrize("l", [0, 1, 2, 3, 5])
def test_wave_equation_residual(l):
    c, a, prof = 3.0, 1.0, PolyExp(14, 5.0)
    u = potential_terms(l, c, a)
    rng = np.random.default_rng(l)
    f = lambda rr, tt: u(prof, rr, tt)
    for r, t in zip(rng.uniform(1.5, 3.0, 5), rng.uniform(1.0, 3.0, 5)):
        def residual(h):
            utt = (f(r, t + h) - 2 * f(r, t) + f(r, t - h)) / h**2
            urr = (f(r + h, t) - 2 * f(r, t) + f(r - h, t)) / h**2
            ur = (f(r + h, t) - f(r - h, t)) / (2 * h)
            scale = max(abs(utt / c**2), abs(urr), abs(f(r, t)))
            return abs(utt / c**2 - urr - 2 / r * ur + l * (l + 1) * f(r, t) / r**2) / scale
        assert second_order(residual, h=4e-3, floor=1e-7)
        assert residual(2e-3) <= 1e-4


def test_causality_of_fields():
    c, a = 5.0, 2.0
    mf = MultipoleField(4, 2, "TM", PolyExp(8, 3.0), c, a)
    r = np.array([3.0, 4.0])
    t = (r - a) / c - 1e-9
    d = {k: v(mf.profile, r, t) for k, v in tm_terms(mf).items()}
    assert all(np.all(v == 0) for v in d.values())
    assert np.all(te_field(MultipoleField(2, 0, "TE", PolyExp(8, 3.0), c, a), r, t)["e2"] == 0)


@given(st.floats(0.0, 2.0))
def test_retarded_time_structure(shift):
    # with the r^{-n} factor removed, each term depends on t - r/c only
    c, prof = 4.0, PolyExp(9, 3.0)
    u = potential_terms(6, c, 1.0)
    r, t = 2.5, 1.9
    for key, v in u.coef.items():
        term = type(u)(c, 1.0, {key: v}).rpow(key[0])
        assert term(prof, r + c * shift, t + shift) == pytest.approx(term(prof, r, t), rel=1e-13)


def test_tm_laplace_ratio_l1():
    d = tm_terms(MultipoleField(1, 0, "TM", PolyExp(1, 1.0), 1.0))
    assert d["er"].laplace(1.0, 1.0) / d["e1"].laplace(1.0, 1.0) == pytest.approx(-4 / 3, abs=1e-15)


@given(st.integers(1, 20), st.floats(0.1, 10), st.floats(-10, 10), st.floats(0.5, 4), st.floats(0.5, 8))
def test_tm_laplace_ratio(l, x, y, b, c):
    # at r = b, s = z c / b
    z = complex(x, y)
    d = tm_terms(MultipoleField(l, 0, "TM", PolyExp(1, 1.0), c))
    ratio = d["er"].laplace(b, z * c / b) / d["e1"].laplace(b, z * c / b)
    ref = laplace_symbols(l, z).etm_ratio
    assert abs(ratio - ref) <= 1e-10 * abs(ref)


def test_divergence_free():
    c, a = 5.0, 2.0
    modes = [MultipoleField(3, 2, "TM", PolyExp(10, 4.0), c, a, 0.7 - 0.2j),
             MultipoleField(2, 1, "TE", PolyExp(10, 4.0), c, a)]
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(10, 3))
    pts *= (3.0 / np.linalg.norm(pts, axis=1))[:, None]
    t, h = 1.0, 1e-4
    div = np.zeros(len(pts))
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        div += (cartesian_field(modes, pts + e, t)[:, i] - cartesian_field(modes, pts - e, t)[:, i]) / (2 * h)
    scale = np.max(np.abs(cartesian_field(modes, pts, t)))
    assert np.max(np.abs(div)) <= 1e-6 * scale


@pytest.mark.parametrize("l", [1, 5, 12, 20])
def test_scalar_nrbc_identity(l):
    # lhs T channel = d_t E2 + c d_r E2 + (c/b) E2 equals (c/b) sigma_l * E2
    b, c, a = 3.0, 5.0, 2.0
    n = l + 14
    prof = Delayed(Derivative(PolyExp(n, n / 3.0), l + 1), 0.3)
    mf = MultipoleField(l, 0, "TE", prof, c, a)
    dt, steps = 0.002, 1000
    t = dt * np.arange(steps + 1)
    vals = mode_values(mf, b, t)
    e2, lhs = vals[2], vals[4]
    u, ur, ut = scalar_multipole(l, prof, b, t, c, a)
    assert np.allclose(lhs, ut + c * ur + c / b * u, rtol=0, atol=1e-12 * np.max(np.abs(lhs)))
    s = ConvolutionState(sigma_kernel(l, b, c, find_zeros(l)), ConvolutionConfig(order=6))
    out = [0.0]
    for g in e2[1:]:
        s.advance(g, dt)
        out.append(s.value())
    scale = np.max(np.abs(e2))
    assert np.max(np.abs(lhs - (c / b) * np.array(out))) <= 1e-10 * max(scale, np.max(np.abs(lhs)))


def test_sinpower_convolution_converges_second_order():
    b = c = 1.0
    prof = SinPower(6, 6.0)
    mf = MultipoleField(1, 0, "TE", prof, c, 0.0)
    k = sigma_kernel(1, b, c, find_zeros(1))
    errs = []
    for n in (100, 200, 400):
        dt = 2.0 / n
        v = mode_values(mf, b, dt * np.arange(n + 1))
        s = ConvolutionState(k, ConvolutionConfig(order=2))
        for g in v[2][1:]:
            s.advance(g, dt)
        errs.append(abs(v[4][-1] - (c / b) * s.value()))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((rates > 1.8) & (rates < 2.2)), rates


def test_frames_empty_and_family():
    g = build_grid(22, 44)
    E, lhs = assemble_frames([], g, 3.0, 1.0)
    assert E.max_abs() == 0 and lhs.max_abs() == 0
    modes = standard_family(5.0, 2.0, 3.0)
    assert len(modes) == 10 and max(m.l for m in modes) == 20
    assert {m.polarization for m in modes} == {"TE", "TM"}
    E, lhs = assemble_frames(modes, g, 3.0, 4.0)
    assert 0 < discrete_l2_norm(E) < 100
    assert modes_from_spec(family_spec(), 5.0, 2.0)[3].profile == modes[3].profile


def test_mode_validation():
    with pytest.raises(UsageError):
        MultipoleField(0, 0, "TE", PolyExp(2, 1.0), 1.0)
    with pytest.raises(UsageError):
        MultipoleField(2, 3, "TE", PolyExp(2, 1.0), 1.0)
    with pytest.raises(UsageError):
        MultipoleField(2, 1, "XX", PolyExp(2, 1.0), 1.0)
    with pytest.raises(UsageError):
        modes_from_spec([{"l": 1, "m": 0, "polarization": "TE", "profile": {"kind": "box"}}], 1, 0)
    with pytest.raises(UsageError):
        assemble_frames([MultipoleField(9, 0, "TE", PolyExp(2, 1.0), 1.0)], build_grid(6, 12), 1.0, 1.0)
