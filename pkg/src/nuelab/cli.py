"""Command-line front end: ``nuelab [run] --config PATH [--out DIR] [--seed N] [--threads N]``.

Each command writes its CSV artifacts and a flat ``summary.json`` record into
the output directory.
"""
import argparse
import math
import os
from pathlib import Path
import platform
import sys
import time

import numpy as np

from . import __version__, kernels
from . import maps as M
from .config import load_config
from .correlations import Observable, correlate, invariant_histogram
from .errors import NuelabError, ParseError, UnderdeterminedFit
from .fitting import fit_curve, fit_decay, loglinear_fit
from .hyperbolic import (HyperbolicParams, h_values, hyperbolic_times, separation_time,
                         theta_bound)
from .io import emit_summary, read_csv, write_csv
from .orbits import estimate_lambda, orbit_trace, sample_traces
from .partition import (base_cells, build_partition, check_disjoint, choose_delta2,
                        element_checks, forbidden_profile)
from .seqcalc import (Seq, gamma_eta, gen_series_coeffs, subadditive_threshold,
                      tail_sum)
from .tails import TailHistogram, chunk_rng, sample_tail
from .tower import (RenewalConfig, build_all_partitions, gcd_period, induce_tower,
                    pooled_elements, q_scheme_tail, renewal_simulate, tower_tail)


# ------------------------------------------------------------ resolution
def make_map(cfg):
    kind = cfg["map.kind"]
    lam = cfg["map.lambda_floor"]
    if kind == "doubling":
        return M.doubling(lam)
    if kind == "ternary":
        return M.ternary(lam)
    if kind == "tent":
        return M.tent()
    if kind == "quadratic":
        return M.quadratic(cfg["map.a0"], cfg["map.interval_lo"], cfg["map.interval_hi"],
                           lambda_floor=lam, beta=cfg["map.beta"])
    return M.viana(cfg["map.a0"], cfg["map.coupling"], cfg["map.base_mult"],
                   cfg["map.interval_lo"], cfg["map.interval_hi"], lambda_floor=lam,
                   beta=cfg["map.beta"])


def resolve_lambda(cfg, m, seed):
    if cfg["params.lambda"] is not None:
        return cfg["params.lambda"], "config"
    if m is not None and m.lambda_floor is not None:
        return m.lambda_floor, "map"
    est = estimate_lambda(m, 200, 1000, seed)
    if not est.expanding:
        raise NuelabError(f"estimated expansion {est.value:.6g} is not positive")
    return est.value, "estimated"


def make_params(cfg, m, seed):
    lam, source = resolve_lambda(cfg, m, seed)
    table = cfg["params.delta_eps"]
    kw = {}
    if table:
        kw["delta_of_eps"] = table
    p = HyperbolicParams.from_lambda(lam, beta=cfg["map.beta"], eps=cfg["params.eps"],
                                     sigma=cfg["params.sigma"], delta=cfg["params.delta"],
                                     b=cfg["params.b"], **kw)
    return p, source


def _params_record(p, source):
    return {"sigma": p.sigma, "delta": p.delta, "b": p.b, "lambda": p.lam,
            "lambda_source": source, "eps": list(p.eps), "beta": p.beta}


def make_observable(cfg, which):
    kind = cfg[f"obs.{which}"]
    if kind == "lipschitz_user":
        t = cfg[f"obs.{which}_table"]
        if len(t) < 2 or len(t) % 2:
            raise NuelabError(f"obs.{which}_table needs x,y pairs")
        return Observable(kind, table=(t[0::2], t[1::2]))
    if kind == "indicator":
        c = cfg[f"obs.{which}_cell"]
        if len(c) != 2:
            raise NuelabError(f"obs.{which}_cell needs lo,hi")
        return Observable(kind, cell=tuple(c))
    return Observable(kind)


def _initial_point(cfg, m, seed):
    x0 = cfg["run.x0"]
    if m.kind == "viana":
        if len(x0) == 2:
            return tuple(x0)
        if x0:
            raise NuelabError("viana needs run.x0 = w, x")
        rng = chunk_rng(seed, 0)
        return (float(rng.random()), float(m.lo + m.length * rng.random()))
    if len(x0) == 1:
        return x0[0]
    if x0:
        raise NuelabError("run.x0 takes one value for 1D maps")
    return float(m.lo + m.length * chunk_rng(seed, 0).random())


def _tail_rows(h):
    frac = h.fraction
    for n, s, f in zip(h.n_grid, h.survivors, frac):
        only_censored = h.censored > 0 and float(s) <= float(h.censored)
        yield n, s, f, only_censored


def _fit_record(h, cfg, model=None):
    model = model or cfg["run.model"]
    try:
        fit = fit_decay(h, model, n_lo=cfg["run.n_lo"], min_survivors=cfg["run.min_survivors"],
                        n_hi=cfg["run.n_hi"])
    except UnderdeterminedFit as exc:
        return {"model": model, "fit_status": f"underdetermined: {exc}"}
    rec = fit.to_record()
    rec["fit_status"] = "ok"
    return rec


def _mass_fit_record(n, mass):
    keep = mass > 0
    if np.count_nonzero(keep) < 2:
        return {"slope": float("nan"), "r2": float("nan"), "fit_status": "too few points"}
    slope, icpt, r2 = loglinear_fit(n[keep], mass[keep])
    return {"slope": slope, "intercept": icpt, "r2": r2, "rate": math.exp(slope),
            "fit_status": "ok"}


# ------------------------------------------------------------ commands
def _default_delta(cfg):
    d = cfg["params.delta"]
    if d is not None:
        return d
    eps = cfg["params.eps"][0]
    table = cfg["params.delta_eps"]
    if table:
        for k, v in table.items():
            if math.isclose(k, eps, rel_tol=1e-12):
                return v
    return eps * eps


def cmd_simulate(cfg, out, seed, threads):
    m = make_map(cfg)
    x0 = _initial_point(cfg, m, seed)
    deltas = cfg["run.deltas"] or (_default_delta(cfg),)
    N = cfg["run.horizon"]
    tr = orbit_trace(m, x0, N, deltas)
    hdr = ["k", "a_k"] + ["r_" + ("%.12g" % d) for d in tr.delta_levels]
    files = [write_csv(out / "trace.csv", hdr,
                       ([k, tr.a[k]] + list(tr.r[:, k]) for k in range(N)))]
    rec = {"x0": list(x0) if isinstance(x0, tuple) else x0, "horizon": N,
           "birkhoff_mean_a": float(tr.a.mean()) if N else float("nan")}
    est = estimate_lambda(m, min(cfg["run.samples"], 1000), max(N, 1), seed)
    rec["lambda_estimate"] = est.value
    rec["lambda_expanding"] = est.expanding
    bins = cfg["run.bins"]
    if bins:
        length = max(N, bins * 100)
        dens = invariant_histogram(m, x0, length, bins, burn_in=cfg["run.burn_in"], seed=seed)
        e = dens.edges
        files.append(write_csv(out / "density.csv", ["bin_lo", "bin_hi", "frequency", "density"],
                               zip(e[:-1], e[1:], dens.frequency, dens.density)))
        rec["density_length"] = length
    return rec, files


def cmd_hypertimes(cfg, out, seed, threads):
    m = make_map(cfg)
    p, src = make_params(cfg, m, seed)
    x0 = _initial_point(cfg, m, seed)
    N = cfg["run.horizon"]
    levels = tuple(sorted({p.delta, *p.eps_deltas()}))
    tr = orbit_trace(m, x0, N, levels)
    ht = hyperbolic_times(tr, p)
    mask = ht.as_mask()
    sup = np.zeros(N, dtype=bool)
    sup[ht.times[ht.super_flags] - 1] = True
    files = [write_csv(out / "times.csv", ["n", "is_hyperbolic", "is_super"],
                       zip(range(1, N + 1), mask, sup))]
    S = cfg["run.samples"]
    rng = chunk_rng(seed, 1)
    A, R, res = sample_traces(m, S, N, p.eps_deltas(3), rng)
    v1, c1 = h_values(A, R[:, :2], p.lam, p.eps[:2], "h1")
    v2, c2 = h_values(A, R, p.lam, p.eps[:3], "h2")
    files.append(write_csv(out / "hvalues.csv",
                           ["sample_id", "h1", "h1_censored_flag", "h2", "h2_censored_flag"],
                           zip(range(S), v1, c1, v2, c2)))
    density = float(mask.mean()) if N else 0.0
    rec = {"params": _params_record(p, src), "x0": list(x0) if isinstance(x0, tuple) else x0,
           "horizon": N, "hyperbolic_count": int(mask.sum()), "hyperbolic_density": density,
           "super_count": int(sup.sum()), "separation_time": separation_time(p.sigma),
           "h1_censored": int(c1.sum()), "h2_censored": int(c2.sum()), "resampled": res}
    if 0 < density and p.eps[0] < 1 and p.eps[1] < 1:
        rec["theta1_estimate"] = density
        rec["theta_bound"] = theta_bound(p.eps[0], p.eps[1], density)
    if S and not c2.all():
        rec["h2_mean_resolved"] = float(v2[~c2].mean())
    return rec, files


def cmd_tails(cfg, out, seed, threads):
    m = make_map(cfg)
    p, src = make_params(cfg, m, seed)
    h = sample_tail(m, cfg["run.which"], p, cfg["run.horizon"], cfg["run.samples"], seed,
                    threads=threads, chunk_size=cfg["run.chunk_size"])
    files = [write_csv(out / "tails.csv", ["n", "survivors", "fraction", "censored_flag"],
                       _tail_rows(h))]
    rec = {"params": _params_record(p, src), "which": cfg["run.which"],
           "samples": h.total, "censored": h.censored, "resampled": h.meta.get("resampled", 0)}
    rec.update(_fit_record(h, cfg))
    return rec, files


def cmd_fit(cfg, out, seed, threads):
    path = cfg["run.input"]
    if not path:
        raise NuelabError("fit needs run.input (a tails CSV)")
    _, cols = read_csv(path)
    n = cols["n"].astype(np.int64)
    s = cols["survivors"]
    frac = cols["fraction"]
    pos = frac > 0
    total = float(np.median(s[pos] / frac[pos])) if pos.any() else float(s[0] if s.size else 0)
    h = TailHistogram(n, s, total)
    rec = {"input": str(path), "total": total}
    rec.update(_fit_record(h, cfg))
    return rec, []


def cmd_correlate(cfg, out, seed, threads):
    m = make_map(cfg)
    f, g = make_observable(cfg, "f"), make_observable(cfg, "g")
    res = correlate(m, f, g, cfg["run.n_max"], cfg["run.samples"], cfg["run.burn_in"], seed,
                    blocks=cfg["run.blocks"])
    files = [write_csv(out / "corr.csv", ["n", "cor", "stderr"],
                       zip(res.n, res.cor, res.stderr))]
    rec = {"n_max": cfg["run.n_max"], "samples": cfg["run.samples"], "blocks": res.blocks,
           "resampled": res.resampled, "cor0": float(res.cor[0])}
    ac = np.abs(res.cor)
    sig = (res.n >= 1) & (ac > 2.0 * res.stderr) & (ac > 0)
    for model in ("exponential", "stretched"):
        try:
            fit = fit_curve(res.n[sig], ac[sig], model)
        except NuelabError as exc:
            rec[f"{model}.fit_status"] = str(exc)
            continue
        rec[model] = fit.to_record()
    return rec, files


def _partition_setup(cfg, seed):
    m = make_map(cfg)
    p, src = make_params(cfg, m, seed)
    d2 = cfg["run.delta2"]
    if d2 is None:
        d2 = choose_delta2(m, p, cfg["run.horizon"])
        if d2 is None:
            raise NuelabError("no dyadic delta2 admits well-defined neighbourhoods")
    return m, p, src, d2, base_cells(m, d2)


def cmd_partition(cfg, out, seed, threads):
    m, p, src, d2, cells = _partition_setup(cfg, seed)
    res = build_partition(m, p, cells, cfg["run.source_cell"], cfg["run.horizon"],
                          cfg["run.grid"], d2)
    els, tail, st = res
    files = [write_csv(out / "partition.csv",
                       ["id", "lo", "hi", "birth_time", "return_time", "source_cell",
                        "target_cell"],
                       ((e.id, e.lo, e.hi, e.birth_time, e.return_time, e.source_cell,
                         e.target_cell) for e in els))]
    H = st.time

    def ledger_rows():
        for e in els:
            n = e.birth_time
            for mm in range(n + 1, H + 1):
                (a, b), (c, d) = st.annuli(e.id, mm)
                yield e.id, n, mm, a, b, c, d
    files.append(write_csv(out / "ledger.csv",
                           ["origin_id", "origin_time", "m", "annulus_lo_left",
                            "annulus_hi_left", "annulus_lo_right", "annulus_hi_right"],
                           ledger_rows()))
    files.append(write_csv(out / "tail.csv", ["n", "unselected_mass"],
                           zip(tail.n_grid, tail.survivors)))
    if not els:
        return {"status": "empty", "params": _params_record(p, src), "delta2": d2,
                "cells": len(cells), "total_selected_mass": 0.0}, files
    U = cells[cfg["run.source_cell"]]
    sel = float(sum(e.exact_width for e in els)) if els[0].exact is not None else \
        math.fsum(e.width for e in els)
    reports = [element_checks(m, e, cells, p.sigma) for e in els]
    first = min(e.birth_time for e in els)
    nn = tail.n_grid
    k = nn >= first
    prof = forbidden_profile(st)
    rec = {"params": _params_record(p, src), "delta2": d2, "cells": len(cells),
           "elements": len(els), "total_selected_mass": sel,
           "selected_fraction": sel / U.width, "disjoint": check_disjoint(els),
           "element_checks_failed": sum(not r.passed for r in reports),
           "max_distortion_D1": max(r.distortion_D1 for r in reports),
           "grid_error_bound": tail.meta["grid_error_bound"],
           "tail_fit": _mass_fit_record(nn[k], tail.survivors[k]),
           "lambda5": prof.lambda5, "lambda5_r2": prof.r2,
           "separation_time": separation_time(p.sigma)}
    return rec, files


def cmd_tower(cfg, out, seed, threads):
    m, p, src, d2, cells = _partition_setup(cfg, seed)
    H = cfg["run.horizon"]
    parts = build_all_partitions(m, p, cells, H, cfg["run.grid"], d2, threads=1)
    els = pooled_elements(parts)
    th = cfg["run.tower_horizon"] or H
    tw = induce_tower(els, cells, cfg["run.base_cell"], cfg["run.L_cap"], m=m, horizon=th,
                      budget=cfg["run.budget"])
    files = [write_csv(out / "tower.csv", ["id", "lo", "hi", "Rprime", "k"],
                       ((e.id, e.lo, e.hi, e.Rprime, e.k) for e in tw.elements))]
    if not tw.elements:
        return {"status": "empty", "params": _params_record(p, src), "delta2": d2}, files
    tt = tower_tail(tw, horizon=th)
    files.append(write_csv(out / "tails.csv", ["n", "survivors", "fraction", "censored_flag"],
                           ((n, s, f, False) for n, s, f, _ in _tail_rows(tt))))
    nn, ss = tt.n_grid, tt.survivors
    k = nn >= 1
    rec = {"params": _params_record(p, src), "delta2": d2, "cells": len(cells),
           "tower_elements": len(tw.elements), "gcd_period": gcd_period(tw), "L": tw.L,
           "mass_conserved": tw.conserved(), "base_mass": float(tw.base_mass),
           "residual": {t: float(tw.residual_mass(t)) for t in
                        ("unselected", "beyond_horizon", "depth_cap", "budget")},
           "tail_fit": _mass_fit_record(nn[k], ss[k])}
    return rec, files


def _renewal_u(cfg, horizon):
    n = np.arange(horizon + 2, dtype=float)
    kind = cfg["renewal.u"]
    if kind == "unit":
        u = np.zeros(n.size)
    elif kind == "stretched":
        u = np.exp(-cfg["renewal.c"] * n ** cfg["renewal.eta"])
    else:
        u = np.ones(n.size)
        u[1:] = n[1:] ** -cfg["renewal.gamma"]
    u[0] = 1.0
    return Seq(u)


def cmd_renewal(cfg, out, seed, threads):
    H = cfg["run.horizon"]
    rc = RenewalConfig(_renewal_u(cfg, H), cfg["renewal.eps"], cfg["renewal.L"],
                       cfg["renewal.C"])
    h = renewal_simulate(rc, cfg["run.samples"], H, seed, threads=threads,
                         chunk_size=max(cfg["run.chunk_size"], 1))
    files = [write_csv(out / "tails.csv", ["n", "survivors", "fraction", "censored_flag"],
                       _tail_rows(h))]
    alphas = cfg["renewal.alpha"]
    eta_q = cfg["renewal.eta"] if cfg["renewal.u"] == "stretched" else 1.0
    bounds = [q_scheme_tail(rc, a, eta_q, H) for a in alphas]
    files.append(write_csv(out / "qscheme.csv", ["n"] + ["alpha_%.12g" % a for a in alphas],
                           zip(range(H + 1), *bounds)))
    rec = {"u": cfg["renewal.u"], "eps": rc.eps, "L": rc.L, "C": rc.C, "samples": h.total,
           "censored": h.censored, "q_eta": eta_q}
    rec["stretched"] = _fit_record(h, cfg, "stretched")
    rec["polynomial"] = _fit_record(h, cfg, "polynomial")
    return rec, files


def cmd_seqcalc(cfg, out, seed, threads):
    op = cfg["seq.op"]
    files = []
    rec = {"op": op}
    if op == "gen_series":
        w, rate = gen_series_coeffs(cfg["seq.C5"], cfg["seq.lam2"], cfg["seq.R"], cfg["seq.n"])
        files.append(write_csv(out / "seq.csv", ["n", "value"], enumerate(w.values)))
        rec.update(C5=cfg["seq.C5"], lam2=cfg["seq.lam2"], R=cfg["seq.R"], decay_rate=rate)
    elif op == "threshold":
        r = subadditive_threshold(cfg["seq.c"], cfg["seq.eta"], cfg["seq.C"], cfg["seq.horizon"])
        rec.update(c=cfg["seq.c"], eta=cfg["seq.eta"], C=cfg["seq.C"],
                   horizon=cfg["seq.horizon"], K_min=r.K_min, K_bound=r.K_bound,
                   min_passes=r.min_passes, bound_passes=r.bound_passes,
                   predecessor_fails=r.predecessor_fails)
    elif op == "gamma":
        rec.update(eta=cfg["seq.eta"], gamma=gamma_eta(cfg["seq.eta"]),
                   endpoint=2.0 - 2.0 ** cfg["seq.eta"])
    else:
        n = np.arange(cfg["seq.horizon"] + 1, dtype=float)
        c, eta, C = cfg["seq.c"], cfg["seq.eta"], cfg["seq.C"]
        w = Seq(C * np.exp(-c * n ** eta))
        files.append(write_csv(out / "seq.csv", ["n", "value"], enumerate(w.values)))
        val, env = tail_sum(w, cfg["seq.n"], stretched=(c, eta))
        rec.update(c=c, eta=eta, C=C, n=cfg["seq.n"], tail_sum=val, envelope=env,
                   ratio=val / env if env else float("nan"))
    return rec, files


COMMANDS = {
    "simulate": cmd_simulate, "hypertimes": cmd_hypertimes, "tails": cmd_tails,
    "fit": cmd_fit, "correlate": cmd_correlate, "partition": cmd_partition,
    "tower": cmd_tower, "renewal": cmd_renewal, "seqcalc": cmd_seqcalc,
}


# ------------------------------------------------------------ entry point
def output_dir(args_out, cfg):
    if args_out:
        return Path(args_out)
    if cfg["run.out"]:
        return Path(cfg["run.out"])
    return Path(os.environ.get("NUE_LAB_OUT") or "nuelab-out")


def build_parser():
    ap = argparse.ArgumentParser(prog="nuelab", description=__doc__.splitlines()[0])
    ap.add_argument("action", nargs="?", default="run", choices=["run"],
                    help="only 'run' is supported")
    ap.add_argument("--config", required=True, help="key=value experiment file")
    ap.add_argument("--out", help="output directory (default: run.out, then $NUE_LAB_OUT)")
    ap.add_argument("--seed", type=int, help="overrides run.seed")
    ap.add_argument("--threads", type=int, help="overrides run.threads")
    return ap


def run(config_path, out=None, seed=None, threads=None):
    """Execute one config; returns ``(summary_dict_text, files)``."""
    cfg = load_config(config_path)
    seed = cfg["run.seed"] if seed is None else int(seed)
    threads = threads or cfg["run.threads"] or os.cpu_count() or 1
    outdir = output_dir(out, cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rec, files = COMMANDS[cfg.command](cfg, outdir, seed, threads)
    wall = time.perf_counter() - t0
    summary = {"status": "ok", "command": cfg.command, "seed": seed, "threads": threads}
    summary.update(rec)
    summary["config"] = {k: (list(v) if isinstance(v, tuple) else v)
                         for k, v in cfg.resolved().items() if k != "command"}
    summary["versions"] = {"nuelab": __version__, "numpy": np.__version__,
                           "python": platform.python_version(), "kernels": kernels.BACKEND}
    summary["wall_time_s"] = wall
    summary["files"] = [str(f) for f in files]
    text = emit_summary(summary, outdir / "summary.json")
    return text, files


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        text, _ = run(args.config, args.out, args.seed, args.threads)
    except ParseError as exc:
        print(f"nuelab: config error: {exc}", file=sys.stderr)
        return 2
    except (NuelabError, OSError) as exc:
        print(f"nuelab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
