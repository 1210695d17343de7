"""Hyperbolic times, super-hyperbolic times, Pliss times and the ``h`` functions.

All conditions are evaluated in log space. With ``a_k = log|T'(T^k x)|`` and
``r_k = -log dist_delta(T^k x, S)``, time ``n`` is ``(sigma, delta)``-hyperbolic
iff for every ``1 <= k <= n``::

    a_{n-k} + ... + a_{n-1} >= -k log(sigma)
    r_{n-k}                 <= b k (-log sigma)

Inequalities are applied exactly as written, without tolerance.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from . import kernels
from .errors import ConfigurationError, ContractViolation, DomainError


def square_delta(eps):
    """Default ``delta(eps) = eps^2``."""
    return eps * eps


@dataclass(frozen=True)
class HyperbolicParams:
    """Parameters of the hyperbolic-time conditions.

    Attributes
    ----------
    sigma : float
        Contraction rate in (0, 1).
    delta : float
        Truncation radius used by the recurrence clause.
    b : float
        Recurrence exponent, ``0 < b < min(1/2, 1/(4 beta))``.
    lam : float
        Expansion constant.
    eps : tuple of float
        ``(eps1, eps2)`` or ``(eps1, eps2, eps3)``.
    delta_of_eps : callable or dict
        Maps an ``eps`` value to its truncation radius.
    beta : float
        Nondegeneracy exponent (only used to validate ``b``).
    """

    sigma: float
    delta: float
    b: float
    lam: float
    eps: tuple = (0.01, 0.01, 0.01)
    delta_of_eps: object = field(default=square_delta, compare=False)
    beta: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.sigma < 1.0:
            raise DomainError("sigma must lie in (0, 1)")
        if not 0.0 < self.delta < 1.0:
            raise DomainError("delta must lie in (0, 1)")
        if not 0.0 < self.b < min(0.5, 1.0 / (4.0 * self.beta)):
            raise DomainError("b must lie in (0, min(1/2, 1/(4 beta)))")
        if not self.lam > 0:
            raise DomainError("lambda must be positive")
        eps = tuple(float(e) for e in self.eps)
        if len(eps) not in (2, 3) or any(e <= 0 for e in eps):
            raise DomainError("eps must hold 2 or 3 positive values")
        object.__setattr__(self, "eps", eps)

    @classmethod
    def from_lambda(cls, lam, beta=1.0, eps=(0.01, 0.01, 0.01), delta_of_eps=square_delta,
                    sigma=None, delta=None, b=None):
        """Defaults: ``sigma = exp(-lam/8)``, ``delta = delta(eps1)`` and
        ``b = min(1/2, 1/(4 beta)) / 2``."""
        sigma = math.exp(-lam / 8.0) if sigma is None else sigma
        b = min(0.5, 1.0 / (4.0 * beta)) / 2.0 if b is None else b
        p = cls(sigma=sigma, delta=0.5, b=b, lam=lam, eps=eps,
                delta_of_eps=delta_of_eps, beta=beta)
        delta = p.delta_for(p.eps[0]) if delta is None else delta
        return cls(sigma=sigma, delta=delta, b=b, lam=lam, eps=eps,
                   delta_of_eps=delta_of_eps, beta=beta)

    def delta_for(self, eps):
        """Truncation radius attached to one ``eps`` value."""
        f = self.delta_of_eps
        if callable(f):
            return float(f(eps))
        for k, v in dict(f).items():
            if math.isclose(float(k), eps, rel_tol=1e-12):
                return float(v)
        raise ConfigurationError(f"delta(eps) table has no entry for {eps}")

    def eps_deltas(self, count=None):
        eps = self.eps if count is None else self.eps[:count]
        return tuple(self.delta_for(e) for e in eps)


@dataclass(frozen=True)
class HyperbolicTimeSet:
    """Hyperbolic times in ``[1, N]`` and their super-hyperbolic flags."""

    times: np.ndarray
    super_flags: np.ndarray
    N: int

    def as_mask(self):
        m = np.zeros(self.N, dtype=bool)
        m[self.times - 1] = True
        return m


@dataclass(frozen=True)
class Censored:
    """Marker for an ``h`` value not resolved within ``horizon`` steps."""

    horizon: int

    def __bool__(self):
        return False


def _as2d(x):
    x = np.asarray(x, dtype=float)
    return x.reshape(1, -1) if x.ndim == 1 else x


# ----------------------------------------------------------------- batch cores
def hyperbolic_mask(A, Rdelta, sigma, b):
    """Hyperbolic-time mask for rows of co-expansion values.

    Parameters
    ----------
    A : array (S, N)
    Rdelta : array (S, N) or None
        ``-log dist_delta`` at the chosen delta (``None`` when S is empty).
    """
    A = _as2d(A)
    ls = -math.log(sigma)
    rpt = None if Rdelta is None else _as2d(Rdelta)
    return kernels.window_scan(A, ls, None, None, rpt, b * ls).astype(bool)


def super_mask(A, R12, lam, eps12):
    """Super-hyperbolic mask; ``R12`` has shape (S, 2, N)."""
    A = _as2d(A)
    R12 = np.asarray(R12, dtype=float)
    if R12.ndim == 2:
        R12 = R12[None]
    crs = np.asarray([2.0 * math.sqrt(e) for e in eps12])
    return kernels.window_scan(A, lam / 4.0, np.ascontiguousarray(R12), crs, None, 0.0).astype(bool)


def _prefix_conditions(A, R, lam, eps):
    """Boolean array (S, N): column ``n-1`` holds the averages test at ``n``."""
    A = _as2d(A)
    S, N = A.shape
    n = np.arange(1, N + 1, dtype=float)
    ok = np.cumsum(A, axis=1) / n >= lam / 2.0
    for i, e in enumerate(eps):
        ok &= np.cumsum(R[:, i, :], axis=1) / n <= 2.0 * e
    return ok


def h_values(A, R, lam, eps, which):
    """Vectorized ``h1`` (censored) or ``h2`` for rows of traces.

    ``R`` has shape (S, len(eps), N) with levels ordered as ``eps``.
    Returns ``(values, censored)``; censored rows carry ``N + 1``.
    """
    A = _as2d(A)
    S, N = A.shape
    R = np.asarray(R, dtype=float).reshape(S, len(eps), N)
    ok = _prefix_conditions(A, R, lam, eps)
    vals = np.full(S, N + 1, dtype=np.int64)
    if N == 0:
        return vals, np.ones(S, dtype=bool)
    if which == "h2":
        hit = ok.any(axis=1)
        vals[hit] = np.argmax(ok[hit], axis=1) + 1
    elif which == "h1":
        bad = ~ok
        anybad = bad.any(axis=1)
        last_bad = N - 1 - np.argmax(bad[:, ::-1], axis=1)
        vals = np.where(anybad, last_bad + 2, 1)
        vals[anybad & (last_bad == N - 1)] = N + 1
        hit = vals <= N
    else:
        raise ConfigurationError(f"unknown h function {which!r}")
    return vals, ~hit


# ----------------------------------------------------------------- trace API
def hyperbolic_times(trace, params):
    """``(sigma, delta)``-hyperbolic times of a trace.

    Super-hyperbolic flags are filled when the trace carries the levels
    ``delta(eps1)`` and ``delta(eps2)``; otherwise all flags are False.
    """
    r = trace.r_at(params.delta)
    mask = hyperbolic_mask(trace.a, r, params.sigma, params.b)[0]
    times = np.flatnonzero(mask) + 1
    flags = np.zeros(times.size, dtype=bool)
    try:
        sup = super_hyperbolic_times(trace, params)
    except ConfigurationError:
        sup = None
    if sup is not None and times.size:
        flags = np.isin(times, sup)
    return HyperbolicTimeSet(times, flags, trace.length)


def super_hyperbolic_times(trace, params):
    """Times satisfying the window bounds for expansion ``lam/4`` and the
    recurrence bounds ``2 sqrt(eps_i)`` at ``delta(eps_i)``, ``i = 1, 2``."""
    eps12 = params.eps[:2]
    R12 = np.stack([trace.r_at(params.delta_for(e)) for e in eps12])
    if trace.length == 0:
        return np.zeros(0, dtype=np.int64)
    return np.flatnonzero(super_mask(trace.a, R12, params.lam, eps12)[0]) + 1


def pliss_times(a, c1, c2, A):
    """Times ``p`` whose every backward window averages at least ``c1``.

    Returns
    -------
    times : ndarray of int
        All ``1 <= p <= n`` with ``sum(a[p-k:p]) >= c1 k`` for every
        ``1 <= k <= p``.
    bound : float
        The density guarantee ``(c2 - c1) / (A - c1)``, valid when the mean
        of ``a`` is at least ``c2``.
    """
    a = np.asarray(a, dtype=float)
    if a.size and np.any(a > A):
        raise ContractViolation("entries exceed the upper bound A")
    if not c1 < c2 or not A > c1:
        raise ContractViolation("need c1 < c2 and c1 < A")
    bound = (c2 - c1) / (A - c1)
    if a.size == 0:
        return np.zeros(0, dtype=np.int64), bound
    mask = kernels.window_scan(a.reshape(1, -1), float(c1), None, None, None, 0.0)[0]
    return np.flatnonzero(mask) + 1, bound


def _h_from_trace(trace, params, which, count):
    if len(params.eps) < count:
        raise ConfigurationError(f"{which} needs {count} eps values")
    eps = params.eps[:count]
    R = np.stack([trace.r_at(params.delta_for(e)) for e in eps])[None]
    vals, cens = h_values(trace.a, R, params.lam, eps, which)
    if cens[0]:
        return Censored(trace.length)
    return int(vals[0])


def h1_censored(trace, params):
    """Smallest ``N`` such that every ``n`` in ``[N, horizon]`` passes the
    averages test with ``eps1, eps2``; ``Censored`` if none."""
    return _h_from_trace(trace, params, "h1", 2)


def h2(trace, params):
    """First ``n`` passing the averages test with ``eps1, eps2, eps3``."""
    return _h_from_trace(trace, params, "h2", 3)


def separation_time(sigma):
    """Smallest ``P >= 1`` with ``1 + 2 sigma^((P-1)/2) <= sigma^(-1/2)``."""
    if not 0.0 < sigma < 1.0:
        raise DomainError("sigma must lie in (0, 1)")
    rhs = sigma ** -0.5
    P = 1
    while 1.0 + 2.0 * sigma ** ((P - 1) / 2.0) > rhs:
        P += 1
    return P


def theta_bound(eps1, eps2, theta1):
    """``theta1 + (1 - sqrt(eps1)) + (1 - sqrt(eps2)) - 2``; may be negative."""
    for e in (eps1, eps2):
        if not 0.0 < e < 1.0:
            raise DomainError("eps values must lie in (0, 1)")
    if not 0.0 < theta1 <= 1.0:
        raise DomainError("theta1 must lie in (0, 1]")
    return theta1 + (1.0 - math.sqrt(eps1)) + (1.0 - math.sqrt(eps2)) - 2.0
