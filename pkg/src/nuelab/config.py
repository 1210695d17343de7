"""Plain ``key = value`` experiment configuration.

Lines are ``section.key = value``; ``#`` starts a comment. Every key has a
default listed in :data:`SCHEMA`; unknown keys are rejected with the line
number.
"""
from dataclasses import dataclass, field
import os

from .errors import ParseError

COMMANDS = ("simulate", "hypertimes", "tails", "fit", "correlate", "partition", "tower",
            "renewal", "seqcalc")
MAP_COMMANDS = ("simulate", "hypertimes", "tails", "correlate", "partition", "tower")
OBS_KINDS = ("coordinate_minus_half", "lipschitz_user", "indicator")


def _floats(s):
    return tuple(float(v) for v in s.replace(";", ",").split(",") if v.strip())


def _ints(s):
    return tuple(int(v) for v in s.replace(";", ",").split(",") if v.strip())


def _table(s):
    """``k1:v1, k2:v2`` into a dict of floats."""
    out = {}
    for item in s.split(","):
        if not item.strip():
            continue
        k, sep, v = item.partition(":")
        if not sep:
            raise ValueError(f"table entry {item!r} lacks ':'")
        out[float(k)] = float(v)
    return out


def _opt_float(s):
    return None if s.strip().lower() in ("auto", "none", "") else float(s)


def _opt_int(s):
    return None if s.strip().lower() in ("auto", "none", "") else int(s)


def _choice(*opts):
    def parse(s):
        if s not in opts:
            raise ValueError(f"expected one of {', '.join(opts)}")
        return s
    return parse


# key: (parser, default, description)
SCHEMA = {
    "command": (_choice(*COMMANDS), None, "pipeline to run"),
    "map.kind": (_choice("doubling", "ternary", "quadratic", "viana", "tent"), None,
                 "map family"),
    "map.a0": (_opt_float, None, "quadratic parameter, 'auto' for the Misiurewicz value"),
    "map.coupling": (float, 0.01, "skew-product coupling"),
    "map.base_mult": (int, 16, "skew-product base multiplier (16 or 2)"),
    "map.interval_lo": (float, -1.8, "fiber/interval lower end (quadratic, viana)"),
    "map.interval_hi": (float, 1.8, "fiber/interval upper end (quadratic, viana)"),
    "map.lambda_floor": (_opt_float, None, "expansion constant, 'auto' to estimate"),
    "map.beta": (float, 1.0, "nondegeneracy exponent"),
    "params.sigma": (_opt_float, None, "hyperbolic-time rate, default exp(-lambda/8)"),
    "params.delta": (_opt_float, None, "truncation radius, default delta(eps1)"),
    "params.b": (_opt_float, None, "recurrence exponent, default min(1/2, 1/(4 beta))/2"),
    "params.lambda": (_opt_float, None, "expansion constant, default map value or estimate"),
    "params.eps": (_floats, (0.01, 0.01, 0.01), "eps vector"),
    "params.delta_eps": (_table, {}, "table eps:delta, default delta = eps^2"),
    "run.horizon": (int, 200, "time horizon"),
    "run.samples": (int, 1000, "Monte Carlo samples"),
    "run.seed": (int, 0, "master seed"),
    "run.grid": (int, 10000, "grid points per cell"),
    "run.out": (str, "", "output directory"),
    "run.threads": (_opt_int, None, "worker threads, default all cores"),
    "run.chunk_size": (int, 1000, "samples per seeded chunk"),
    "run.which": (_choice("h1", "h2"), "h2", "tail variable"),
    "run.model": (_choice("polynomial", "exponential", "stretched"), "stretched",
                  "decay model"),
    "run.n_lo": (int, 5, "smallest n in the fit window"),
    "run.n_hi": (_opt_int, None, "largest n in the fit window"),
    "run.min_survivors": (int, 30, "fewest survivors kept in the fit window"),
    "run.input": (str, "", "tails CSV read by the fit command"),
    "run.x0": (_floats, (), "initial point (two values for viana)"),
    "run.deltas": (_floats, (), "delta levels of exported traces, default params.delta"),
    "run.bins": (int, 100, "invariant-density bins (0 disables)"),
    "run.burn_in": (int, 1000, "burn-in steps"),
    "run.n_max": (int, 20, "largest correlation lag"),
    "run.blocks": (int, 20, "independent correlation blocks"),
    "run.delta2": (_opt_float, None, "partition ball radius, 'auto' for a dyadic scan"),
    "run.source_cell": (int, 0, "partitioned cell"),
    "run.base_cell": (int, 0, "tower base cell"),
    "run.L_cap": (int, 40, "maximum chain depth"),
    "run.budget": (int, 50000, "pieces created by the tower chase"),
    "run.tower_horizon": (_opt_int, None, "largest cumulative return time followed"),
    "obs.f": (_choice(*OBS_KINDS), "coordinate_minus_half", "first observable"),
    "obs.g": (_choice(*OBS_KINDS), "coordinate_minus_half", "second observable"),
    "obs.f_table": (_floats, (), "x0,y0,x1,y1,... for lipschitz_user f"),
    "obs.g_table": (_floats, (), "x0,y0,x1,y1,... for lipschitz_user g"),
    "obs.f_cell": (_floats, (), "lo,hi of indicator f"),
    "obs.g_cell": (_floats, (), "lo,hi of indicator g"),
    "renewal.u": (_choice("stretched", "polynomial", "unit"), "stretched",
                  "increment tail u_n: exp(-c n^eta), n^-gamma, or increments equal to 1"),
    "renewal.c": (float, 1.0, "c of the stretched tail"),
    "renewal.eta": (float, 0.5, "eta of the stretched tail"),
    "renewal.gamma": (float, 3.0, "exponent of the polynomial tail"),
    "renewal.eps": (float, 0.3, "selection probability per block"),
    "renewal.L": (int, 2, "block length"),
    "renewal.C": (float, 1.0, "tail constant"),
    "renewal.alpha": (_floats, (0.1, 0.5, 1.0), "alpha sweep of the q-scheme bound"),
    "seq.op": (_choice("gen_series", "threshold", "gamma", "tail_sum"), "gen_series",
               "sequence operation"),
    "seq.C5": (float, 1.0, "numerator constant"),
    "seq.lam2": (float, 0.5, "lambda2"),
    "seq.R": (int, 2, "smallest part"),
    "seq.n": (int, 25, "number of coefficients or tail start"),
    "seq.c": (float, 1.0, "c of exp(-c n^eta)"),
    "seq.eta": (float, 0.5, "eta of exp(-c n^eta)"),
    "seq.C": (float, 1.0, "C of C exp(-c n^eta)"),
    "seq.horizon": (int, 10000, "sequence horizon"),
}


@dataclass
class ExperimentConfig:
    values: dict
    source: str = ""
    explicit: set = field(default_factory=set)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def command(self):
        return self.values["command"]

    def section(self, prefix):
        p = prefix + "."
        return {k[len(p):]: v for k, v in self.values.items() if k.startswith(p)}

    def resolved(self):
        return dict(self.values)


def parse_config(text, source="<string>"):
    """Parse config text into an :class:`ExperimentConfig`.

    Raises
    ------
    ParseError
        With the offending line number on syntax errors, unknown keys, bad
        values, or a missing ``command`` / ``map.kind``.
    """
    values = {k: d for k, (_, d, _) in SCHEMA.items()}
    explicit = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ParseError(f"expected 'key = value' in {source}", lineno)
        key, val = key.strip(), val.strip()
        if key not in SCHEMA:
            raise ParseError(f"unknown key {key!r} in {source}", lineno)
        if key in explicit:
            raise ParseError(f"duplicate key {key!r} in {source}", lineno)
        try:
            values[key] = SCHEMA[key][0](val)
        except ValueError as exc:
            raise ParseError(f"bad value for {key}: {exc}", lineno) from None
        explicit.add(key)
    end = len(text.splitlines()) + 1
    if values["command"] is None:
        raise ParseError(f"missing 'command' in {source}", end)
    if values["command"] in MAP_COMMANDS and values["map.kind"] is None:
        raise ParseError(f"missing 'map.kind' in {source}", end)
    return ExperimentConfig(values, source, explicit)


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read(), os.fspath(path))
