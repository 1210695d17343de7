"""Monte Carlo estimation of non-uniformity tails ``Leb{h > n}``."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ContractViolation
from .hyperbolic import h_values
from .orbits import sample_traces


@dataclass(frozen=True)
class TailHistogram:
    """Empirical survival function.

    ``survivors[i]`` counts samples (or carries mass) with value
    ``> n_grid[i]``. ``censored`` counts samples unresolved within the horizon;
    they are included in every survivor count.
    """

    n_grid: np.ndarray
    survivors: np.ndarray
    total: float
    censored: float = 0
    seed: object = None
    label: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "n_grid", np.asarray(self.n_grid, dtype=np.int64))
        object.__setattr__(self, "survivors", np.asarray(self.survivors))
        s = self.survivors
        if s.shape != self.n_grid.shape:
            raise ContractViolation("survivors must match n_grid")
        if s.size and np.any(np.diff(s.astype(float)) > 1e-12 * max(1.0, float(self.total))):
            raise ContractViolation("survivors must be nonincreasing")
        if s.size and s[0] > self.total * (1 + 1e-12):
            raise ContractViolation("survivors exceed the total")

    @property
    def fraction(self):
        return self.survivors / float(self.total) if self.total else np.zeros(self.survivors.shape)

    def merge(self, other):
        """Sum two histograms over the same grid."""
        if not np.array_equal(self.n_grid, other.n_grid):
            raise ContractViolation("cannot merge histograms on different grids")
        seeds = tuple(s for s in (self.seed, other.seed) if s is not None)
        return TailHistogram(self.n_grid, self.survivors + other.survivors,
                             self.total + other.total, self.censored + other.censored,
                             seeds, self.label, dict(self.meta))


def histogram_from_values(values, censored, horizon, seed=None, label=""):
    """Survivor counts ``#{v > n}`` for ``n = 0..horizon``.

    Censored entries count as surviving every ``n <= horizon``.
    """
    values = np.asarray(values, dtype=np.int64)
    censored = np.asarray(censored, dtype=bool)
    v = np.where(censored, horizon + 1, np.minimum(values, horizon + 1))
    counts = np.bincount(v, minlength=horizon + 2)
    # survivors[n] = #{v > n} = total - #{v <= n}
    surv = values.size - np.cumsum(counts)[:horizon + 1]
    return TailHistogram(np.arange(horizon + 1), surv, values.size,
                         int(np.count_nonzero(censored)), seed, label)


def chunk_rng(seed, chunk):
    """Independent generator of one sample chunk."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))


def _chunks(samples, chunk_size, chunk_offset):
    out = []
    done = 0
    c = chunk_offset
    while done < samples:
        k = min(chunk_size, samples - done)
        out.append((c, k))
        done += k
        c += 1
    return out


def sample_tail(m, which, params, horizon, samples, seed, threads=1, chunk_size=1000,
                chunk_offset=0):
    """Estimate ``Leb{h > n}`` for ``n = 0..horizon``.

    Samples are split into chunks of ``chunk_size``; chunk ``c`` draws from
    ``SeedSequence(seed, spawn_key=(c,))``, so the result does not depend on
    ``threads`` and a run equals the merge of runs over complementary chunk
    ranges (see ``chunk_offset``).
    """
    if samples < 1:
        raise ContractViolation("samples must be positive")
    if which not in ("h1", "h2"):
        raise ContractViolation("which must be 'h1' or 'h2'")
    count = 2 if which == "h1" else 3
    if len(params.eps) < count:
        raise ContractViolation(f"{which} needs {count} eps values")
    eps = params.eps[:count]
    deltas = params.eps_deltas(count)

    def run(job):
        c, k = job
        rng = chunk_rng(seed, c)
        A, R, res = sample_traces(m, k, horizon, deltas, rng)
        vals, cens = h_values(A, R, params.lam, eps, which)
        return histogram_from_values(vals, cens, horizon), res

    jobs = _chunks(samples, chunk_size, chunk_offset)
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    hist = parts[0][0]
    for h, _ in parts[1:]:
        hist = hist.merge(h)
    resampled = sum(r for _, r in parts)
    label = f"{which} censored at horizon {horizon}" if which == "h1" else which
    return TailHistogram(hist.n_grid, hist.survivors, hist.total, hist.censored, seed,
                         label, {"resampled": resampled, "chunk_offset": chunk_offset})


def polynomial_decay_check(u, horizon=None, cap=1e6):
    """Smallest ``C`` with ``u_k <= C u_n`` for all ``n/2 <= k <= n <= horizon``.

    ``u[0]`` holds ``u_1`` (the sequence is indexed from ``n = 1``).

    Returns
    -------
    (bool, float)
        Whether ``C`` stays at or below ``cap``, and ``C`` itself.
    """
    u = np.asarray(u, dtype=float)
    horizon = u.size if horizon is None else int(horizon)
    if horizon > u.size:
        raise ContractViolation("horizon beyond the sequence")
    u = u[:horizon]
    if np.any(u <= 0):
        raise ContractViolation("sequence must be positive on [1, horizon]")
    C = 1.0
    for n in range(1, horizon + 1):
        k0 = (n + 1) // 2
        C = max(C, float(u[k0 - 1:n].max() / u[n - 1]))
    return C <= cap, C


def lebesgue_fraction_hyperbolic(m, params, n, interval, grid=20000):
    """Grid Lebesgue measure of ``H_n`` intersected with ``T^{-n}(interval)``
    for a 1D map, and ``Leb(interval)``."""
    from .hyperbolic import hyperbolic_mask
    from .orbits import recurrence_values

    xs = m.lo + (np.arange(grid) + 0.5) * (m.length / grid)
    X = np.empty((grid, n + 1))
    x = xs.copy()
    for k in range(n + 1):
        X[:, k] = x
        x = m.fmap(x)
    A = m.coexp_values(X[:, :n])
    R = recurrence_values(m.sdist(X[:, :n]), (params.delta,))[0]
    H = hyperbolic_mask(A, R, params.sigma, params.b)[:, n - 1]
    lo, hi = interval
    inside = (X[:, n] >= lo) & (X[:, n] < hi)
    return float(np.count_nonzero(H & inside)) * m.length / grid, hi - lo
