import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from nuelab import _pykernels, kernels

BACKENDS = kernels.backends()


def brute_window(a, ca, rsum, crsum, rpt, cpt):
    S, N = a.shape
    out = np.zeros((S, N), dtype=np.uint8)
    for s in range(S):
        for p in range(1, N + 1):
            ok = True
            for k in range(1, p + 1):
                if a[s, p - k:p].sum() < ca * k:
                    ok = False
                if rsum is not None:
                    for i in range(rsum.shape[1]):
                        if rsum[s, i, p - k:p].sum() > crsum[i] * k:
                            ok = False
                if rpt is not None and rpt[s, p - k] > cpt * k:
                    ok = False
            out[s, p - 1] = ok
    return out


def test_cython_backend_is_default_when_built():
    assert kernels.BACKEND in BACKENDS
    if "cython" in BACKENDS:
        assert kernels.BACKEND == "cython"


def test_forced_fallback():
    env = dict(os.environ, NUELAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from nuelab import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


# small integer-valued entries keep window sums exact, so comparisons are unambiguous
ints = arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(0, 12)),
              elements=st.integers(-3, 4).map(float))


@pytest.mark.parametrize("name", sorted(BACKENDS))
@given(a=ints, ca=st.integers(-1, 3).map(float), cpt=st.integers(0, 3).map(float))
def test_window_scan_matches_brute_force(name, a, ca, cpt):
    S, N = a.shape
    rng = np.random.default_rng(S * 100 + N)
    rsum = np.ascontiguousarray(rng.integers(0, 3, size=(S, 2, N)).astype(float))
    crsum = np.array([1.0, 2.0])
    rpt = rng.integers(0, 4, size=(S, N)).astype(float)
    got = BACKENDS[name].window_scan(a, ca, rsum, crsum, rpt, cpt)
    assert np.array_equal(got, brute_window(a, ca, rsum, crsum, rpt, cpt))
    got0 = BACKENDS[name].window_scan(a, ca, None, None, None, 0.0)
    assert np.array_equal(got0, brute_window(a, ca, None, None, None, 0.0))


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")
def test_backends_agree_on_float_data():
    rng = np.random.default_rng(0)
    a = np.log(2 * np.abs(rng.uniform(-1.8, 1.8, (50, 80))))
    r = np.maximum(-np.log(np.abs(rng.uniform(-1, 1, (50, 80)))) - 3, 0.0)
    args = (a, 0.08, np.ascontiguousarray(np.stack([r, r], 1)), np.array([0.2, 0.3]), r, 0.01)
    assert np.array_equal(BACKENDS["python"].window_scan(*args), BACKENDS["cython"].window_scan(*args))
    x = rng.random(500)
    y = rng.random(300)
    assert np.allclose(BACKENDS["python"].convolve(x, y), BACKENDS["cython"].convolve(x, y),
                       rtol=1e-13, atol=0)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_convolve_definition(name):
    conv = BACKENDS[name].convolve
    assert np.array_equal(conv(np.array([0.0, 1, 1]), np.array([0.0, 1, 1])), [0, 0, 1, 2, 1])
    assert conv(np.zeros(0), np.ones(3)).size == 0
    rng = np.random.default_rng(1)
    x, y = rng.random(40), rng.random(25)
    ref = np.array([sum(x[i] * y[n - i] for i in range(len(x)) if 0 <= n - i < len(y))
                    for n in range(len(x) + len(y) - 1)])
    assert np.allclose(conv(x, y), ref, rtol=1e-14)


def test_pykernel_module_is_reference():
    assert kernels.backends()["python"] is _pykernels
