"""Sequence machinery: convolution, the subadditivity threshold, the gamma
bound, generating-series coefficients and tail sums.

Accumulations use compensated or extended-precision summation since
stretched-exponential sequences span hundreds of orders of magnitude.
"""
from dataclasses import dataclass
import logging
import math

import numpy as np
from scipy.special import gamma as gamma_fn, gammaincc

from . import kernels
from .errors import ContractViolation, DomainError, PoleInsideDisk

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Seq:
    """A finite nonnegative sequence indexed from 0."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size and (np.any(v < 0) or not np.all(np.isfinite(v))):
            raise ContractViolation("sequence entries must be finite and nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def horizon(self):
        return self.values.size

    def __len__(self):
        return self.values.size

    def __getitem__(self, i):
        return self.values[i]


def _vals(w):
    return w.values if isinstance(w, Seq) else np.asarray(w, dtype=float)


def convolve(w1, w2, truncate=False):
    """``(w1 * w2)_n = sum_{a+b=n} w1_a w2_b``.

    The full linear convolution of the two finite sequences is returned,
    which is exact for every index. With ``truncate=True`` the result is
    cut to the shorter input length, the range where it also equals the
    convolution of the untruncated sequences.
    """
    x, y = _vals(w1), _vals(w2)
    out = kernels.convolve(x, y)
    if truncate:
        out = out[:min(x.size, y.size)]
    return Seq(np.maximum(out, 0.0))


# ------------------------------------------------------------ gamma(eta)
def gamma_eta(eta, grid=10 ** 6):
    """Minimum of ``(x^eta + (1-x)^eta - 1) / x^eta`` over ``(0, 1/2]``.

    Evaluated on ``grid`` equally spaced points ``x_i = i / (2 grid)``. The
    endpoint value ``2 - 2^eta`` is logged as a cross-check.
    """
    if not 0.0 < eta <= 1.0:
        raise DomainError("eta must lie in (0, 1]")
    x = np.arange(1, grid + 1, dtype=float) / (2.0 * grid)
    xe = x ** eta
    g = float(np.min((xe + (1.0 - x) ** eta - 1.0) / xe))
    g = max(g, 0.0)
    log.debug("gamma_eta(%g) grid=%.12g endpoint=%.12g", eta, g, 2.0 - 2.0 ** eta)
    return g


# ------------------------------------------------- subadditivity threshold
def _stretched(c, eta, C, horizon):
    n = np.arange(horizon + 1, dtype=float)
    return C * np.exp(-c * n ** eta)


def subadditive_holds(v, K):
    """Whether ``w = 1_{n >= K} v`` satisfies ``(w * w)_p <= w_p`` for all ``p``
    in the range of ``v``."""
    v = np.asarray(v, dtype=float)
    P = v.size
    if 2 * K >= P:
        return True
    tail = v[K:P - K]
    conv = kernels.convolve(tail, tail)
    # conv[i] is (w*w) at p = 2K + i
    p = 2 * K + np.arange(min(conv.size, P - 2 * K))
    return bool(np.all(conv[:p.size] <= v[p]))


def _tail_upper(a, eta, K, block=100_000):
    """Upper bound of ``sum_{j >= K} exp(-a j^eta)``: exact block sum plus an
    integral bound of the remainder."""
    j = np.arange(K, K + block, dtype=float)
    head = math.fsum(np.exp(-a * j ** eta))
    J = K + block - 1
    s = 1.0 / eta
    rem = s * a ** -s * gamma_fn(s) * gammaincc(s, a * J ** eta)
    return head + rem


def closed_form_threshold(c, eta, C):
    """Smallest ``K`` with ``2 C sum_{j >= K} exp(-c gamma(eta) j^eta) <= 1``."""
    a = c * gamma_eta(eta)
    target = 1.0 / (2.0 * C)
    hi = 1
    while _tail_upper(a, eta, hi) > target:
        hi *= 2
        if hi > 2 ** 60:
            raise DomainError("threshold beyond representable range")
    lo = hi // 2 if hi > 1 else 0
    # invariant: tail(lo) > target (or lo == 0), tail(hi) <= target
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _tail_upper(a, eta, mid) <= target:
            hi = mid
        else:
            lo = mid
    return max(hi, 1)


@dataclass(frozen=True)
class ThresholdResult:
    K_min: int
    K_bound: int
    min_passes: bool
    bound_passes: bool
    predecessor_fails: bool


def subadditive_threshold(c, eta, C, horizon):
    """Smallest ``K`` such that ``w_n = 1_{n >= K} C exp(-c n^eta)`` is
    subadditive under convolution (``(w*w)_p <= w_p``) for all ``p <= horizon``.

    ``K_min`` is found by binary search over ``[1, horizon]`` and confirmed
    directly, together with the failure at ``K_min - 1``. ``K_bound`` is the
    sufficient threshold built from the gamma bound.
    """
    if eta == 1.0:
        raise DomainError("eta = 1 is excluded: the gamma bound degenerates")
    if not 0.0 < eta < 1.0:
        raise DomainError("eta must lie in (0, 1)")
    if not (c > 0 and C > 0):
        raise DomainError("c and C must be positive")
    v = _stretched(c, eta, C, horizon)
    lo, hi = 0, max(1, horizon // 2 + 1)
    if not subadditive_holds(v, hi):
        raise DomainError("no threshold found within horizon")
    if subadditive_holds(v, 1):
        hi = 1
    else:
        lo = 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if subadditive_holds(v, mid):
                hi = mid
            else:
                lo = mid
    K_min = hi
    K_bound = closed_form_threshold(c, eta, C)
    pred_fails = K_min == 1 or not subadditive_holds(v, K_min - 1)
    return ThresholdResult(K_min, K_bound, subadditive_holds(v, K_min),
                           subadditive_holds(v, K_bound), pred_fails)


# ---------------------------------------------------------- generating series
def dominant_root(C5, lam2, R, tol=1e-12):
    """Smallest positive root of ``1 - lam2 z - C5 lam2^R z^R`` (bisection)."""
    def g(z):
        return 1.0 - lam2 * z - C5 * lam2 ** R * z ** R

    lo, hi = 0.0, 1.0
    while g(hi) > 0:
        hi *= 2.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def gen_series_coeffs(C5, lam2, R, n):
    """Coefficients of ``C5 lam2^R z^R / (1 - lam2 z - C5 lam2^R z^R)``.

    Returns
    -------
    (Seq, float)
        ``w_0..w_n`` from the recurrence
        ``w_k = lam2 w_{k-1} + C5 lam2^R w_{k-R} + C5 lam2^R [k = R]`` and the
        exponential decay rate ``1 / z*`` of the coefficients.
    """
    if not 0.0 < lam2 < 1.0:
        raise DomainError("lam2 must lie in (0, 1)")
    if R < 1 or C5 < 0:
        raise DomainError("need R >= 1 and C5 >= 0")
    if lam2 + C5 * lam2 ** R >= 1.0:
        raise PoleInsideDisk("lam2 + C5 lam2^R >= 1: pole inside the unit disk")
    q = C5 * lam2 ** R
    w = np.zeros(n + 1)
    for k in range(1, n + 1):
        v = lam2 * w[k - 1]
        if k >= R:
            v += q * w[k - R]
        if k == R:
            v += q
        w[k] = v
    rate = 1.0 / dominant_root(C5, lam2, R)
    return Seq(w), rate


def composition_sum(C5, lam2, R, n):
    """Sum over compositions ``n = n_1 + ... + n_p`` with parts ``>= R`` of
    ``prod C5 lam2^{n_i}``, by explicit enumeration."""
    terms = []

    def walk(rest, prod):
        if rest == 0:
            terms.append(prod)
            return
        for part in range(R, rest + 1):
            walk(rest - part, prod * C5 * lam2 ** part)

    if n >= R:
        walk(n, 1.0)
    return math.fsum(terms)


# ------------------------------------------------------------------ tails
def tail_sum(w, n, stretched=None):
    """``sum_{p=n}^{horizon-1} w_p`` (correctly rounded).

    With ``stretched=(c, eta)`` also return the integral-comparison envelope
    ``n^(1-eta) exp(-c (n/2)^eta)``.
    """
    v = _vals(w)
    if n > v.size:
        raise ContractViolation("n beyond the sequence horizon")
    s = math.fsum(v[n:])
    if stretched is None:
        return s
    c, eta = stretched
    return s, stretched_envelope(n, c, eta)


def stretched_envelope(n, c, eta):
    return n ** (1.0 - eta) * math.exp(-c * (n / 2.0) ** eta)


def convolution_power_tail(pmf, q, horizon):
    """``P(X_1 + ... + X_q > n)`` for ``n = 0..horizon`` with i.i.d. ``X_i``
    of probability mass ``pmf`` (index = value)."""
    pmf = np.asarray(pmf, dtype=float)[:horizon + 1]
    acc = np.zeros(horizon + 1)
    acc[0] = 1.0
    base = pmf.copy()
    k = q
    while k > 0:
        if k & 1:
            acc = kernels.convolve(acc, base)[:horizon + 1]
        k >>= 1
        if k:
            base = kernels.convolve(base, base)[:horizon + 1]
    cdf = np.cumsum(acc)
    return np.clip(1.0 - cdf, 0.0, 1.0)
