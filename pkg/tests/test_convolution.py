import numpy as np
import pytest
from hypothesis import given, strategies as st

from nrbc.convolution import (ConvolutionConfig, ConvolutionState, advance, direct_convolve,
                              init_state, local_weights, phi_functions, value)
from nrbc.errors import UsageError
from nrbc.kernels import omega_kernel, sigma_kernel
from nrbc.zeros import find_zeros

E1 = np.exp(-1.0)


def kern(kind, l, b=1.0, c=1.0):
    p = find_zeros(l)
    return (sigma_kernel if kind == "sigma" else omega_kernel)(l, b, c, p)


def run(k, g, dt, n, config=ConvolutionConfig()):
    s = init_state(k, g(0.0), config)
    for i in range(1, n + 1):
        advance(s, g(i * dt), dt)
    return s


def run_series(k, g, dt, n, config=ConvolutionConfig()):
    s = init_state(k, g(0.0), config)
    out = [value(s)]
    for i in range(1, n + 1):
        advance(s, g(i * dt), dt)
        out.append(value(s))
    return np.array(out)


def test_phi_functions_small_and_large():
    x = np.array([1e-8, 0.5, 3.9, 4.1, -20 + 5j])
    phi = phi_functions(x, 3)
    ref1 = np.expm1(x) / x
    ref2 = (np.exp(x) - 1 - x) / x**2
    assert np.allclose(phi[0], ref1, rtol=1e-12)
    assert np.allclose(phi[1][1:], ref2[1:], rtol=1e-10)
    assert phi[1][0] == pytest.approx(0.5, rel=1e-7)


@given(st.integers(2, 8), st.floats(-30, -1e-6), st.floats(-30, 30))
def test_local_weights_integrate_polynomials_exactly(q, xr, xi):
    # weights applied to samples of u^m reproduce int_0^1 e^{x(1-u)} u^m du
    x = complex(xr, xi)
    w = local_weights(np.array([x]), q)[:, 0]
    nodes = 1.0 - np.arange(q)
    xg, wg = np.polynomial.legendre.leggauss(60)
    u = 0.5 * (xg + 1)
    for m in range(q):
        ref = 0.5 * np.sum(wg * np.exp(x * (1 - u)) * u**m)
        assert abs(np.dot(w, nodes**m) - ref) <= 1e-10 * max(1.0, abs(ref))


def test_init_state():
    s = init_state(kern("sigma", 5))
    assert np.all(s.f == 0) and value(s) == 0
    o = kern("omega", 3)
    assert value(init_state(o, 2.0)) == pytest.approx(2.0 * o.instantaneous.real)


def test_zero_input_stays_zero():
    s = run(kern("omega", 10), lambda t: 0.0, 0.01, 200)
    assert np.all(s.f == 0) and value(s) == 0


def test_single_pole_linear_input_exact():
    s = run(kern("sigma", 1), lambda t: t, 0.01, 100)
    # sigma_1 has weight -1, so the accumulator is -value
    assert s.f[0] == pytest.approx(E1, abs=1e-14)
    assert value(s) == pytest.approx(-E1, abs=1e-14)


def test_omega1_linear_input_exact():
    s = run(kern("omega", 1), lambda t: t, 0.01, 100)
    assert value(s) == pytest.approx(E1 - 1.0, abs=1e-14)


def test_sine_input_second_order():
    k = kern("sigma", 1)
    s = run(k, np.sin, 1e-3, 1000)
    ref = direct_convolve(k, (np.array([0.0, 1.0]), np.sin([0.0, 1.0])), g=np.sin, oversample=64)[-1]
    assert abs(value(s) - ref) <= 1e-7


@pytest.mark.parametrize("l", [1, 4, 12])
def test_direct_oracle_agrees_on_linear_g(l):
    k = kern("omega", l)
    dt, n = 0.02, 60
    t = dt * np.arange(n + 1)
    g = 0.3 - 1.7 * t
    vals = run_series(k, lambda x: 0.3 - 1.7 * x, dt, n)
    ref = np.array(direct_convolve(k, (t, g), oversample=2, nodes=16))
    assert np.max(np.abs(vals - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))


def test_direct_oracle_sin2():
    k = kern("sigma", 1)
    dt, n = 1e-3, 1000
    t = dt * np.arange(n + 1)
    g = lambda x: np.sin(3 * x) ** 2
    vals = run_series(k, g, dt, n)
    ref = direct_convolve(k, (t, g(t)), g=g, at=[250, 500, 1000])
    assert np.max(np.abs(vals[[250, 500, 1000]] - ref)) <= 1e-6
    # against the piecewise-linear interpolant the linear rule is exact
    lin = direct_convolve(k, (t, g(t)), at=[250, 1000], oversample=2, nodes=16)
    assert np.max(np.abs(vals[[250, 1000]] - lin)) <= 1e-12


@pytest.mark.parametrize("order,lo,hi", [(2, 1.8, 2.2), (4, 3.6, 4.4), (6, 5.5, 6.5)])
def test_convergence_order(order, lo, hi):
    k = kern("sigma", 4, b=1.0, c=2.0)
    g = lambda x: np.sin(3 * x) ** 2
    probe = np.array([0.5, 1.0, 1.5, 2.0])
    ref = np.array([direct_convolve(k, (np.array([0.0, t]), g(np.array([0.0, t]))), g=g,
                                    oversample=400)[-1] for t in probe])
    errs = []
    for n in (80, 160, 320):
        vals = run_series(k, g, 2.0 / n, n, ConvolutionConfig(order=order))
        errs.append(np.max(np.abs(vals[(probe * n / 2.0).round().astype(int)] - ref)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((rates >= lo) & (rates <= hi)), rates


def test_pair_reduction_matches_full_path():
    k = kern("omega", 15)
    g = lambda x: np.cos(2 * x) * x
    a = run_series(k, g, 0.01, 300, ConvolutionConfig(pair_reduce=True))
    b = run_series(k, g, 0.01, 300, ConvolutionConfig(pair_reduce=False))
    assert np.max(np.abs(a - b)) <= 1e-14 * max(1.0, np.max(np.abs(b)))


@given(st.integers(2, 40), st.integers(0, 2**32 - 1))
def test_conjugate_accumulators_stay_paired(l, seed):
    k = kern("sigma", l)
    rng = np.random.default_rng(seed)
    s = init_state(k, 0.0, ConvolutionConfig(pair_reduce=False))
    from nrbc.kernels import conjugate_partner
    partner = conjugate_partner(k.poles)
    for gi in rng.normal(size=30):
        advance(s, gi, 0.05)
        f = s.f
        assert np.all(np.abs(f - np.conj(f[partner])) <= 1e-13 * np.maximum(np.abs(f), 1e-300))


def test_bounded_over_long_runs():
    k = kern("sigma", 6, b=1.0, c=1.0)
    rng = np.random.default_rng(1)
    g = rng.uniform(-1, 1, 100001)
    s = ConvolutionState(k, ConvolutionConfig(), g0=g[0])
    bound = np.max(np.abs(g)) / np.abs(s.rates.real)
    peak = np.zeros(len(s.f))
    for gi in g[1:]:
        s.advance(gi, 0.01)
        peak = np.maximum(peak, np.abs(s.f))
    assert np.all(peak <= bound * (1 + 1e-9))
    assert s.steps == 100000 and s.n_accumulators == 3 + 0 * len(k)


def test_memory_is_per_pole():
    k = kern("sigma", 9)
    s = run(k, np.sin, 0.01, 500, ConvolutionConfig(order=4))
    assert s.f.shape == (5,)  # one real pole and four pairs
    assert len(s.history) == 4


def test_multi_stream_bank_matches_single():
    ks = [kern("sigma", 2), kern("omega", 5)]
    bank = ConvolutionState([(ks[0], 2), (ks[1], 3)], ConvolutionConfig(order=3))
    singles = [ConvolutionState(k, ConvolutionConfig(order=3)) for k in (ks[0], ks[0], ks[1], ks[1], ks[1])]
    rng = np.random.default_rng(0)
    for _ in range(20):
        g = rng.normal(size=5)
        bank.advance(g, 0.1)
        for s, gi in zip(singles, g):
            s.advance(gi, 0.1)
    assert np.allclose(bank.value(), [s.value() for s in singles], rtol=0, atol=1e-14)


def test_errors():
    s = init_state(kern("sigma", 2))
    with pytest.raises(UsageError):
        advance(s, 1.0, 0.0)
    with pytest.raises(UsageError):
        ConvolutionConfig(order=1)
    s4 = init_state(kern("sigma", 2), 0.0, ConvolutionConfig(order=4))
    advance(s4, 1.0, 0.1)
    with pytest.raises(UsageError):
        advance(s4, 1.0, 0.2)
    with pytest.raises(UsageError):
        direct_convolve(kern("sigma", 2), (np.array([0.0, 0.1, 0.3]), np.zeros(3)))
