"""Orbit traces and the empirical constants derived from them."""
from dataclasses import dataclass
import math

import numpy as np

from .errors import ConfigurationError, ContractViolation, DomainError, SingularityError


def _delta_index(levels, delta):
    for i, d in enumerate(levels):
        if d == delta or math.isclose(d, delta, rel_tol=1e-12, abs_tol=0.0):
            return i
    raise ConfigurationError(f"trace carries no delta level {delta!r} (has {list(levels)})")


@dataclass(frozen=True)
class OrbitTrace:
    """Per-step co-expansion and truncated log-recurrence values.

    Attributes
    ----------
    x0 : float or tuple or None
        Initial point (``None`` for synthetic traces).
    a : ndarray, shape (N,)
        ``a[k] = log|T'(T^k x0)|``.
    r : ndarray, shape (len(delta_levels), N)
        ``r[i, k] = -log dist_delta_i(T^k x0, S)``.
    delta_levels : tuple of float
    """

    x0: object
    a: np.ndarray
    r: np.ndarray
    delta_levels: tuple

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        r = np.asarray(self.r, dtype=float).reshape(len(self.delta_levels), a.size)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "delta_levels", tuple(float(d) for d in self.delta_levels))

    @property
    def length(self):
        return self.a.size

    def r_at(self, delta):
        """Recurrence row for one delta level."""
        return self.r[_delta_index(self.delta_levels, delta)]

    def head(self, N):
        """The first ``N`` steps of the trace."""
        return OrbitTrace(self.x0, self.a[:N], self.r[:, :N], self.delta_levels)


def recurrence_values(dist, deltas):
    """``-log dist_delta`` for each delta, one row per level."""
    dist = np.asarray(dist, dtype=float)
    out = np.zeros((len(deltas),) + dist.shape)
    with np.errstate(divide="ignore"):
        logd = -np.log(dist)
    for i, d in enumerate(deltas):
        out[i] = np.where(dist < d, logd, 0.0)
    return out


def _check_deltas(deltas):
    for d in deltas:
        if not 0.0 < d < 1.0:
            raise DomainError("delta levels must lie in (0, 1)")


def orbit_trace(m, x0, N, deltas):
    """Iterate ``x0`` literally for ``N`` steps and record ``a`` and ``r``.

    Raises
    ------
    SingularityError
        If ``T^k x0`` lies exactly on S; ``index`` is ``k``.
    """
    if N < 0:
        raise ContractViolation("N must be nonnegative")
    deltas = tuple(float(d) for d in deltas)
    _check_deltas(deltas)
    if m.kind == "synthetic" and m.trace_a is not None:
        if N > m.trace_a.size:
            raise ContractViolation("synthetic trace shorter than requested length")
        dist = np.ones(N) if m.trace_dist is None else m.trace_dist[:N]
        return OrbitTrace(None, m.trace_a[:N].copy(), recurrence_values(dist, deltas), deltas)
    if not m.contains(x0):
        raise DomainError(f"point {x0!r} outside the domain")
    a = np.empty(N)
    dist = np.empty(N)
    p = x0
    for k in range(N):
        x = p[1] if m.kind == "viana" else p
        d = float(m.sdist(x))
        if d == 0.0:
            raise SingularityError(k)
        dist[k] = d
        a[k] = float(m.coexp_values(x))
        p = m.step(p)
    return OrbitTrace(x0, a, recurrence_values(dist, deltas), deltas)


def sample_traces(m, samples, N, deltas, rng):
    """Bulk traces from Lebesgue-random initial points.

    Rows whose orbit hits S exactly are regenerated.

    Returns
    -------
    A : ndarray (samples, N)
    R : ndarray (samples, len(deltas), N)
    resampled : int
    """
    deltas = tuple(float(d) for d in deltas)
    _check_deltas(deltas)
    if m.kind == "synthetic" and m.trace_a is not None:
        t = orbit_trace(m, None, N, deltas)
        return (np.tile(t.a, (samples, 1)), np.tile(t.r, (samples, 1, 1)), 0)
    fib = m.fiber_of(m.lebesgue_orbits(samples, N, rng))
    dist = m.sdist(fib)
    resampled = 0
    bad = np.flatnonzero(np.any(dist == 0.0, axis=1))
    while bad.size:
        resampled += bad.size
        new = m.fiber_of(m.lebesgue_orbits(bad.size, N, rng))
        fib[bad] = new
        dist[bad] = m.sdist(new)
        bad = bad[np.any(dist[bad] == 0.0, axis=1)]
    A = m.coexp_values(fib)
    R = np.moveaxis(recurrence_values(dist, deltas), 0, 1)
    return A, np.ascontiguousarray(R), resampled


@dataclass(frozen=True)
class LambdaEstimate:
    """Empirical lower estimate of the expansion constant."""

    value: float
    expanding: bool
    quantile: float
    resampled: int

    def __float__(self):
        return self.value


def estimate_lambda(m, samples, n, seed, quantile=0.05):
    """Low quantile of the Birkhoff averages ``(1/n) sum a_k``.

    Initial points are Lebesgue-random. The estimate is flagged as not
    expanding when it is ``<= 0``.
    """
    if samples < 1 or n < 1:
        raise ContractViolation("samples and n must be positive")
    rng = np.random.default_rng(seed)
    A, _, resampled = sample_traces(m, samples, n, (0.5,), rng)
    avg = A.sum(axis=1) / n
    value = float(np.quantile(avg, quantile, method="lower"))
    return LambdaEstimate(value, value > 0, quantile, resampled)


@dataclass(frozen=True)
class NondegeneracyReport:
    """Fitted nondegeneracy constants.

    ``B_fit`` is ``inf`` (and ``failed`` is True) when the fitted bound keeps
    growing as the grid is refined.
    """

    beta_used: float
    B_fit: float
    failed: bool
    worst_points: tuple
    lipschitz_B_fit: float


def _b_on_grid(m, beta, grid):
    xs = np.linspace(m.lo, m.hi, grid)
    dist = m.sdist(xs)
    keep = dist > 0
    xs, dist = xs[keep], dist[keep]
    ratio = np.exp(m.coexp_values(xs))
    upper = ratio * dist ** beta
    lower = dist ** beta / ratio
    both = np.maximum(upper, lower)
    i = int(np.argmax(both))
    return float(both[i]), xs[both == both[i]]


def nondegeneracy_scan(m, beta, grid, seed=0, pairs=20000):
    """Smallest ``B`` satisfying the two-sided derivative bound on a grid.

    The bound is ``dist^beta / B <= |T'| <= B dist^-beta``. The scan is
    repeated on a ten times finer grid; growth by more than 50% is read as
    "no finite B". The Lipschitz constant of ``log|T'|`` is fitted from
    random pairs with ``|x - y| < dist(x, S) / 2``.
    """
    if not beta > 0:
        raise ContractViolation("beta must be positive")
    if grid < 10:
        raise ContractViolation("grid must have at least 10 points")
    b1, worst = _b_on_grid(m, beta, grid)
    b2, _ = _b_on_grid(m, beta, 10 * grid)
    failed = b2 > 1.5 * b1
    rng = np.random.default_rng(seed)
    x = m.lo + (m.hi - m.lo) * rng.random(pairs)
    d = m.sdist(x)
    ok = d > 0
    x, d = x[ok], d[ok]
    h = (rng.random(x.size) - 0.5) * np.minimum(d, 1.0)
    y = np.clip(x + h, m.lo, m.hi)
    h = y - x
    ok = (h != 0) & (m.sdist(y) > 0)
    x, y, d, h = x[ok], y[ok], d[ok], h[ok]
    lip = np.abs(m.coexp_values(x) - m.coexp_values(y)) * d ** beta / np.abs(h)
    return NondegeneracyReport(
        beta_used=float(beta),
        B_fit=math.inf if failed else b1,
        failed=bool(failed),
        worst_points=tuple(float(v) for v in worst[:8]),
        lipschitz_B_fit=float(lip.max()) if lip.size else 0.0,
    )


def calibrate_delta(m, eps, candidates=None, samples=200, n=2000, seed=0):
    """Largest delta whose recurrence averages stay below ``eps``.

    The late-time average of ``r(delta)`` over the second half of each orbit
    stands in for the lim-sup; the maximum over samples must be ``<= eps``.
    Returns ``None`` if no candidate qualifies.
    """
    if candidates is None:
        candidates = [2.0 ** -k for k in range(1, 41)]
    cands = sorted((float(c) for c in candidates), reverse=True)
    _check_deltas(cands)
    rng = np.random.default_rng(seed)
    _, R, _ = sample_traces(m, samples, n, cands, rng)
    late = R[:, :, n // 2:].mean(axis=2).max(axis=0)
    for c, v in zip(cands, late):
        if v <= eps:
            return c
    return None
