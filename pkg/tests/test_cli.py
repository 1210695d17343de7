import json
import subprocess
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from nuelab import cli
from nuelab.config import SCHEMA, parse_config
from nuelab.errors import ParseError
from nuelab.io import emit_summary, flatten, fmt, read_csv, write_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


# ------------------------------------------------------------ config
def test_every_key_has_default_and_description():
    for key, (parse, default, desc) in SCHEMA.items():
        assert callable(parse) and desc


def test_parse_defaults_and_values():
    cfg = parse_config("command = tails\nmap.kind = viana  # comment\nrun.horizon = 50\n"
                       "params.eps = 0.1, 0.2, 0.3\nparams.delta_eps = 0.1:0.01, 0.2:0.04\n")
    assert cfg.command == "tails" and cfg["run.horizon"] == 50
    assert cfg["params.eps"] == (0.1, 0.2, 0.3)
    assert cfg["params.delta_eps"] == {0.1: 0.01, 0.2: 0.04}
    assert cfg["run.samples"] == SCHEMA["run.samples"][1]
    assert cfg.section("run")["horizon"] == 50


@pytest.mark.parametrize("text,line", [
    ("command = tails\nmap.kind = viana\nbogus.key = 1\n", 3),
    ("command = tails\nmap.kind = viana\nrun.horizon = ten\n", 3),
    ("command = tails\nmap.kind = viana\nrun.horizon = 1\nrun.horizon = 2\n", 4),
    ("command = tails\njust words\n", 2),
    ("command = frobnicate\n", 1),
])
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ParseError) as ei:
        parse_config(text)
    assert ei.value.line == line


def test_missing_map_kind():
    with pytest.raises(ParseError):
        parse_config("command = tails\n")
    parse_config("command = seqcalc\n")


def test_missing_map_kind_exits_nonzero(tmp_path):
    p = write(tmp_path, "command = partition\n")
    r = subprocess.run([sys.executable, "-m", "nuelab", "run", "--config", str(p),
                        "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode != 0 and "map.kind" in r.stderr


def test_contract_violation_exits_nonzero(tmp_path):
    p = write(tmp_path, "command = tails\nmap.kind = doubling\nrun.samples = 0\n")
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 1


# ------------------------------------------------------------ io
def test_fmt():
    assert fmt(True) == "1" and fmt(3) == "3" and fmt(0.1) == "0.1"
    assert fmt(1 / 3) == "0.333333333333" and fmt(Fraction(1, 4)) == "0.25"
    assert fmt(float("nan")) == "nan"


def test_csv_roundtrip(tmp_path):
    p = write_csv(tmp_path / "x.csv", ["n", "v"], [(0, 0.5), (1, 1e-20)])
    header, cols = read_csv(p)
    assert header == ["n", "v"] and np.allclose(cols["v"], [0.5, 1e-20])
    assert p.read_text() == "n,v\n0,0.5\n1,1e-20\n"


def test_emit_summary(tmp_path):
    text = emit_summary({"a": {"b": 1, "c": [1, 2]}, "d": np.float64(0.5)}, tmp_path / "s.json")
    rec = json.loads(text)
    assert rec == {"status": "ok", "a.b": 1, "a.c": [1, 2], "d": 0.5}
    assert json.loads((tmp_path / "s.json").read_text()) == rec
    assert json.loads(emit_summary({}))["status"] == "empty"
    assert flatten({"x": {"y": {"z": 3}}}) == {"x.y.z": 3}


# ------------------------------------------------------------ commands
def run_cfg(tmp_path, text, sub="o"):
    p = write(tmp_path, text, sub + ".cfg")
    out = tmp_path / sub
    rec, files = cli.run(str(p), out=str(out))
    return json.loads(rec), out


def test_seqcalc_gen_series(tmp_path):
    rec, out = run_cfg(tmp_path, "command = seqcalc\nseq.op = gen_series\nseq.C5 = 1\n"
                       "seq.lam2 = 0.5\nseq.R = 2\nseq.n = 10\n")
    _, cols = read_csv(out / "seq.csv")
    assert cols["value"][2] == 0.25 and cols["value"][3] == 0.125 and cols["value"][4] == 0.125
    assert rec["decay_rate"] == pytest.approx(0.809016994375)
    for key in ("config.seq.C5", "versions.nuelab", "wall_time_s", "seed", "files"):
        assert key in rec


def test_tails_summary_schema(tmp_path):
    rec, out = run_cfg(tmp_path, "command = tails\nmap.kind = quadratic\nrun.which = h1\n"
                       "run.horizon = 80\nrun.samples = 2000\nrun.seed = 7\n"
                       "params.lambda = 0.3\nparams.eps = 0.05,0.05,0.05\n")
    assert rec["fit_status"] == "ok"
    for key in ("model", "c", "eta", "window_lo", "window_hi"):
        assert key in rec
    header, cols = read_csv(out / "tails.csv")
    assert header == ["n", "survivors", "fraction", "censored_flag"]
    assert np.all(np.diff(cols["survivors"]) <= 0)


def test_tails_short_tail_reports_underdetermined_fit(tmp_path):
    rec, _ = run_cfg(tmp_path, "command = tails\nmap.kind = viana\nrun.which = h2\n"
                     "run.horizon = 80\nrun.samples = 600\nrun.seed = 7\n"
                     "params.lambda = 0.3\nparams.eps = 0.05,0.05,0.05\n")
    assert rec["status"] == "ok" and rec["fit_status"].startswith("underdetermined")
    assert "c" not in rec


def test_partition_summary_schema(tmp_path):
    rec, out = run_cfg(tmp_path, "command = partition\nmap.kind = doubling\n"
                       "params.sigma = 0.9170040432046712\nrun.delta2 = 0.4\n"
                       "run.horizon = 12\nrun.grid = 1000\n")
    assert "total_selected_mass" in rec and "tail_fit.slope" in rec
    for name in ("partition.csv", "ledger.csv", "tail.csv"):
        assert (out / name).exists()
    header, _ = read_csv(out / "ledger.csv")
    assert header == ["origin_id", "origin_time", "m", "annulus_lo_left", "annulus_hi_left",
                      "annulus_lo_right", "annulus_hi_right"]


def test_partition_empty_status(tmp_path):
    rec, _ = run_cfg(tmp_path, "command = partition\nmap.kind = doubling\n"
                     "params.sigma = 0.9170040432046712\nrun.delta2 = 0.4\n"
                     "run.horizon = 3\nrun.grid = 1000\n")
    assert rec["status"] == "empty"


def test_reproducible_artifacts(tmp_path):
    text = ("command = correlate\nmap.kind = doubling\nrun.samples = 20000\n"
            "run.n_max = 8\nrun.seed = 3\nrun.threads = 2\n")
    _, a = run_cfg(tmp_path, text, "a")
    _, b = run_cfg(tmp_path, text.replace("run.threads = 2", "run.threads = 1"), "b")
    assert (a / "corr.csv").read_bytes() == (b / "corr.csv").read_bytes()


def test_reproducible_tails_and_seed_override(tmp_path):
    text = ("command = tails\nmap.kind = quadratic\nrun.which = h1\nrun.horizon = 40\n"
            "run.samples = 300\nrun.seed = 1\nparams.lambda = 0.3\nparams.eps = 0.05,0.05\n")
    p = write(tmp_path, text)
    cli.run(str(p), out=str(tmp_path / "a"))
    cli.run(str(p), out=str(tmp_path / "b"))
    cli.run(str(p), out=str(tmp_path / "c"), seed=2)
    a, b, c = ((tmp_path / d / "tails.csv").read_bytes() for d in "abc")
    assert a == b and a != c


def test_output_dir_precedence(tmp_path, monkeypatch):
    cfg = parse_config("command = seqcalc\n")
    monkeypatch.setenv("NUE_LAB_OUT", str(tmp_path / "env"))
    assert cli.output_dir(None, cfg) == tmp_path / "env"
    cfg2 = parse_config(f"command = seqcalc\nrun.out = {tmp_path / 'cfg'}\n")
    assert cli.output_dir(None, cfg2) == tmp_path / "cfg"
    assert cli.output_dir(str(tmp_path / "flag"), cfg2) == tmp_path / "flag"


@pytest.mark.parametrize("name", ["seqcalc.cfg", "renewal.cfg", "simulate.cfg",
                                  "hypertimes.cfg", "correlate.cfg"])
def test_shipped_configs_run(tmp_path, name):
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(CONFIGS / name), "--out", str(out)]) == 0
    assert (out / "summary.json").exists()


def test_fit_command_reads_tails(tmp_path):
    _, out = run_cfg(tmp_path, "command = renewal\nrenewal.u = stretched\nrun.horizon = 200\n"
                     "run.samples = 20000\nrenewal.eps = 0.3\nrenewal.L = 2\n", "r")
    rec, _ = run_cfg(tmp_path, f"command = fit\nrun.input = {out / 'tails.csv'}\n"
                     "run.model = exponential\n", "f")
    assert rec["model"] == "exponential" and rec["c"] > 0
