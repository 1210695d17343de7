import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from nuelab.errors import DomainError, PoleInsideDisk
from nuelab.seqcalc import (Seq, composition_sum, convolution_power_tail, convolve,
                            dominant_root, gamma_eta, gen_series_coeffs, closed_form_threshold,
                            stretched_envelope, subadditive_holds, subadditive_threshold,
                            tail_sum)

vecs = arrays(np.float64, st.integers(1, 30), elements=st.floats(0, 10))


def naive_conv(x, y):
    out = np.zeros(len(x) + len(y) - 1)
    for i, a in enumerate(x):
        for j, b in enumerate(y):
            out[i + j] += a * b
    return out


def test_convolve_examples():
    w = np.array([0.3, 0.5, 0.2, 0.7])
    assert np.array_equal(convolve(w, [1.0, 0, 0, 0]).values[:4], w)
    assert convolve([0.0, 1, 1], [0.0, 1, 1]).values.tolist() == [0, 0, 1, 2, 1]


@given(vecs, vecs)
def test_convolve_commutative_and_exact(x, y):
    a = convolve(x, y).values
    b = convolve(y, x).values
    assert np.allclose(a, b, rtol=1e-12, atol=0)
    assert np.allclose(a, naive_conv(x, y), rtol=1e-12, atol=1e-300)


@given(vecs, vecs, vecs)
def test_convolve_associative(x, y, z):
    a = convolve(convolve(x, y), z).values
    b = convolve(x, convolve(y, z)).values
    assert np.allclose(a, b, rtol=1e-12, atol=1e-280)


def test_convolve_truncate():
    out = convolve([1.0, 1, 1], [1.0, 1], truncate=True)
    assert out.values.tolist() == [1, 2]


def test_seq_rejects_negative():
    with pytest.raises(Exception):
        Seq([1.0, -1.0])


# ------------------------------------------------------------ gamma
def test_gamma_eta_examples():
    assert gamma_eta(0.5) == pytest.approx(2 - math.sqrt(2), abs=1e-9)
    assert gamma_eta(1.0) == 0.0
    g = gamma_eta(0.01)
    # grid output; equals the endpoint value 2 - 2^0.01
    assert g == pytest.approx(2 - 2 ** 0.01, abs=1e-9)
    with pytest.raises(DomainError):
        gamma_eta(0.0)


@given(st.floats(0.05, 0.95))
def test_gamma_eta_is_lower_bound(eta):
    g = gamma_eta(eta, grid=10 ** 4)
    x = np.linspace(1e-3, 0.5, 997)
    assert np.all(x ** eta + (1 - x) ** eta >= 1 + (g - 1e-9) * x ** eta)


# ------------------------------------------------------------ threshold
def brute_subadditive(v, K, P):
    w = np.where(np.arange(v.size) >= K, v, 0.0)
    ww = np.convolve(w, w)[:P + 1]
    return bool(np.all(ww <= w[:P + 1]))


@pytest.mark.parametrize("eta", [0.3, 0.5, 0.8])
def test_threshold_brute_force(eta):
    horizon = 10 ** 4
    res = subadditive_threshold(1.0, eta, 1.0, horizon)
    v = np.exp(-np.arange(horizon + 1, dtype=float) ** eta)
    assert brute_subadditive(v, res.K_min, horizon)
    if res.K_min > 1:
        assert not brute_subadditive(v, res.K_min - 1, horizon)
    assert res.K_min <= res.K_bound and res.bound_passes


def test_threshold_rejects_eta_one():
    with pytest.raises(DomainError):
        subadditive_threshold(1.0, 1.0, 1.0, 100)
    with pytest.raises(DomainError):
        subadditive_threshold(1.0, 1.5, 1.0, 100)


def test_threshold_nonincreasing_in_C():
    ks = [subadditive_threshold(1.0, 0.5, C, 2000).K_min for C in (1.0, 0.1, 0.01)]
    assert ks[0] >= ks[1] >= ks[2]


def test_threshold_monotone_in_K():
    v = np.exp(-np.arange(3001, dtype=float) ** 0.5)
    flags = [subadditive_holds(v, K) for K in range(1, 200)]
    first = flags.index(True)
    assert all(flags[first:])


def test_closed_form_threshold_sum_condition():
    K = closed_form_threshold(1.0, 0.5, 1.0)
    a = gamma_eta(0.5)
    j = np.arange(K, K + 10 ** 6, dtype=float)
    assert 2 * math.fsum(np.exp(-a * j ** 0.5)) <= 1.0 + 1e-9
    j = np.arange(K - 1, K - 1 + 10 ** 6, dtype=float)
    assert 2 * math.fsum(np.exp(-a * j ** 0.5)) > 1.0 - 1e-6


# ------------------------------------------------------------ generating series
def test_gen_series_example():
    w, rate = gen_series_coeffs(1.0, 0.5, 2, 10)
    assert w[2] == 0.25 and w[3] == 0.125 and w[4] == 0.125
    assert rate == pytest.approx(1 / (math.sqrt(5) - 1), abs=1e-9)


def test_gen_series_zero_and_pole():
    w, _ = gen_series_coeffs(0.0, 0.5, 2, 20)
    assert np.all(w.values == 0)
    with pytest.raises(PoleInsideDisk):
        gen_series_coeffs(1.0, 0.9, 2, 10)


@pytest.mark.parametrize("C5,lam2,R", [(1.0, 0.5, 2), (0.5, 0.6, 3), (2.0, 0.3, 2), (1.5, 0.4, 4)])
def test_gen_series_composition_oracle(C5, lam2, R):
    w, _ = gen_series_coeffs(C5, lam2, R, 25)
    for n in range(26):
        ref = composition_sum(C5, lam2, R, n)
        if ref == 0:
            assert w[n] == 0
        else:
            assert w[n] == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("C5,lam2,R", [(1.0, 0.5, 2), (0.5, 0.6, 3), (1.5, 0.4, 4)])
def test_gen_series_log_slope(C5, lam2, R):
    w, rate = gen_series_coeffs(C5, lam2, R, 201)
    lw = np.log(w.values[50:202])
    assert np.all(w.values >= 0)
    assert np.all(np.abs(np.diff(lw) - math.log(rate)) <= 0.02)
    slope = np.polyfit(np.arange(50, 202), lw, 1)[0]
    assert abs(math.exp(slope) / rate - 1) <= 0.02


def test_dominant_root_quadratic():
    # 1 - z/2 - z^2/4 = 0  <=>  z^2 + 2z - 4 = 0
    assert dominant_root(1.0, 0.5, 2) == pytest.approx(-1 + math.sqrt(5), abs=1e-11)


# ------------------------------------------------------------ tails
def test_tail_sum_examples():
    p = np.arange(60, dtype=float)
    assert tail_sum(Seq(2.0 ** -p), 0) == pytest.approx(2, abs=2 ** -58)
    assert tail_sum(Seq(np.zeros(10)), 3) == 0.0


def test_tail_sum_envelope_ratio_bounded():
    p = np.arange(10 ** 4 + 1, dtype=float)
    w = Seq(np.exp(-np.sqrt(p)))
    ratios = []
    for n in range(100, 10 ** 4 // 2, 50):
        s, env = tail_sum(w, n, stretched=(1.0, 0.5))
        assert env == pytest.approx(stretched_envelope(n, 1.0, 0.5))
        ratios.append(s / (n ** 0.5 * math.exp(-math.sqrt(n / 2))))
    assert max(ratios) < 10 and min(ratios) > 0


@given(arrays(np.float64, st.integers(2, 40), elements=st.floats(0, 1e3)), st.data())
def test_tail_sum_additive(v, data):
    n = data.draw(st.integers(0, v.size - 1))
    w = Seq(v)
    assert tail_sum(w, n) == pytest.approx(v[n] + tail_sum(w, n + 1), rel=1e-12, abs=1e-300)
    assert tail_sum(w, n) >= tail_sum(w, n + 1)


def test_convolution_power_tail_geometric():
    # sum of q i.i.d. copies of X == 1 equals q
    pmf = np.array([0.0, 1.0])
    s = convolution_power_tail(pmf, 3, 6)
    assert s.tolist() == [1, 1, 1, 0, 0, 0, 0]
