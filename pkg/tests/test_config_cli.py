import csv
import json
import os
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from fracgraph.cli import main
from fracgraph.config import ConfigError, parse_config

STAR = {
    "graph": {"vertices": 4, "edges": [
        {"id": 0, "tail": 1, "head": 0, "length": 1.0},
        {"id": 1, "tail": 2, "head": 0, "length": 1.0},
        {"id": 2, "tail": 3, "head": 0, "length": 1.0},
    ]},
    "beta": 1.0,
    "mesh": {"n": 32, "levels": [8, 16, 32]},
    "solver": {"k": 4},
}

INTERVAL = {
    "graph": {"vertices": 2, "edges": [{"id": 0, "tail": 0, "head": 1, "length": 1.0}]},
    "beta": 0.75,
    "mesh": {"n": 32, "levels": [8, 16, 32]},
    "solver": {"k": 3},
    "validation": {"samples": 50, "seed": 3},
}


def write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc, indent=2))
    return str(path)


def run(*argv):
    return main(list(argv))


# config parsing

def test_parse_defaults():
    cfg = parse_config(json.dumps(INTERVAL))
    assert cfg.k == 3 and cfg.n == {0: 32} and cfg.kernel_denominator == "derived"
    assert cfg.p[0].values == (1.0,) and cfg.samples == 50 and not cfg.corrupt_mass


def test_round_trip():
    doc = dict(STAR, coefficients={
        "p": {"default": 2.0, "edges": {"1": {"values": [1.0, 3.0], "breakpoints": [0.25]}}},
        "r": 0.5,
    })
    cfg = parse_config(json.dumps(doc))
    again = parse_config(json.dumps(cfg.to_dict()))
    assert again.to_dict() == cfg.to_dict()
    assert again.p[1].breakpoints == (0.25,) and again.p[0].values == (2.0,)


def test_error_is_line_anchored_and_names_edge():
    text = textwrap.dedent("""\
        {
          "graph": {"vertices": 2, "edges": [
            {"id": 0, "tail": 0, "head": 1, "length": 1.0},
            {"id": 7, "tail": 1, "head": 0, "length": -2.0}
          ]},
          "beta": 0.75
        }""")
    with pytest.raises(ConfigError) as info:
        parse_config(text, "g.json")
    assert info.value.line == 4
    assert "edge 7" in info.value.message
    assert str(info.value).startswith("g.json:4:")


@pytest.mark.parametrize("patch, fragment", [
    ({"beta": 0.4}, "beta must lie"),
    ({"kernel_denominator": "other"}, "kernel_denominator"),
    ({"solver": {"k": 0}}, "solver.k"),
    ({"coefficients": {"p": -1.0}}, "p must be positive"),
    ({"coefficients": {"r": {"values": [1, 2], "breakpoints": [1.5]}}}, "breakpoints"),
    ({"coefficients": {"p": {"edges": {"9": 1.0}}}}, "unknown edge 9"),
    ({"mesh": {"n": 1}}, "at least 2 cells"),
    ({"validation": {"corrupt_mass": "yes"}}, "corrupt_mass"),
])
def test_config_errors(patch, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(json.dumps(dict(INTERVAL, **patch)))


def test_malformed_json_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config('{\n  "beta": 0.75,\n  oops\n}')
    assert info.value.line == 3


def test_invalid_graph_rejected():
    doc = dict(INTERVAL, graph={"vertices": 3, "edges": [
        {"id": 0, "tail": 0, "head": 1, "length": 1.0}, {"id": 1, "tail": 1, "head": 1, "length": 1.0}]})
    with pytest.raises(ConfigError, match="self-loop"):
        parse_config(json.dumps(doc))


# CLI exit codes

def test_bad_config_exit_code(tmp_path, capsys):
    doc = json.loads(json.dumps(INTERVAL))
    doc["graph"]["edges"][0]["length"] = 0.0
    path = write(tmp_path, doc)
    assert run("solve", "--config", path, "--out", str(tmp_path / "o")) == 2
    err = capsys.readouterr().err
    assert path in err and "edge 0" in err


def test_missing_config_file(tmp_path):
    assert run("solve", "--config", str(tmp_path / "nope.json")) == 2


def test_solve_outputs(tmp_path):
    path, out = write(tmp_path, STAR), tmp_path / "o"
    assert run("solve", "--config", path, "--out", str(out)) == 0
    data = json.loads((out / "eigenvalues.json").read_text())
    lam = [e["lambda"] for e in data["eigenpairs"]]
    assert len(lam) == 4 and lam == sorted(lam)
    assert [e["multiplicity"] for e in data["eigenpairs"]][:3] == [1, 2, 2]
    assert data["normalization"] == "r-weighted"
    assert lam[0] == pytest.approx((np.pi / 2) ** 2, rel=0.01)
    rows = list(csv.DictReader((out / "eigenfunctions.csv").open()))
    assert {r["edge_id"] for r in rows} == {"0", "1", "2"}
    assert len(rows) == 4 * 3 * 33


def test_k_override(tmp_path):
    path, out = write(tmp_path, STAR), tmp_path / "o"
    assert run("solve", "--config", path, "--out", str(out), "--k", "2") == 0
    assert len(json.loads((out / "eigenvalues.json").read_text())["eigenpairs"]) == 2
    assert run("solve", "--config", path, "--out", str(out), "--k", "0") == 2


def test_trace_and_denominator_flag(tmp_path):
    path = write(tmp_path, dict(INTERVAL, mesh={"n": 64}))
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("trace", "--config", path, "--out", str(a)) == 0
    assert run("trace", "--config", path, "--out", str(b), "--kernel-denominator", "paper") == 0
    ta, tb = (json.loads((d / "trace.json").read_text()) for d in (a, b))
    assert ta["kernel_trace"] == pytest.approx(ta["closed_form"], rel=1e-6)
    assert tb["kernel_trace"] != pytest.approx(ta["kernel_trace"], rel=1e-3)


def test_trace_rejects_graphs(tmp_path):
    assert run("trace", "--config", write(tmp_path, STAR), "--out", str(tmp_path / "o")) == 2


def test_validate_passes_and_corrupt_hook_fails(tmp_path, capsys):
    path = write(tmp_path, INTERVAL)
    assert run("validate", "--config", path, "--out", str(tmp_path / "ok")) == 0
    report = json.loads((tmp_path / "ok" / "validation.json").read_text())
    assert report["pass"] and report["failed"] == []
    assert all(s["pass"] for s in report["asserted"].values())
    assert {"interlacing", "kirchhoff", "norm_equivalence"} <= set(report["reported"])
    bad = write(tmp_path, dict(INTERVAL, validation={"samples": 50, "corrupt_mass": True}), "bad.json")
    assert run("validate", "--config", bad, "--out", str(tmp_path / "bad")) == 1
    err = capsys.readouterr().err
    assert "mass_matrix" in err


def test_convergence_monotone_and_nesting(tmp_path):
    path, out = write(tmp_path, INTERVAL), tmp_path / "o"
    assert run("convergence", "--config", path, "--out", str(out)) == 0
    rows = list(csv.reader((out / "convergence.csv").open()))
    assert len(rows) > 3
    assert run("convergence", "--config", path, "--out", str(out), "--levels", "8", "12") == 2


@pytest.mark.parametrize("command", ["solve", "trace", "validate", "convergence"])
def test_byte_determinism(tmp_path, command):
    path = write(tmp_path, INTERVAL)
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        assert run(command, "--config", path, "--out", str(d)) == 0
        outs.append({f: (d / f).read_bytes() for f in sorted(os.listdir(d))})
    assert outs[0] == outs[1] and outs[0]


def test_thread_env_does_not_change_output(tmp_path, monkeypatch):
    path = write(tmp_path, STAR)
    blobs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("FRACGRAPH_THREADS", threads)
        d = tmp_path / threads
        assert run("solve", "--config", path, "--out", str(d)) == 0
        blobs.append((d / "eigenvalues.json").read_bytes())
    assert blobs[0] == blobs[1]


def test_console_script_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fracgraph.cli", "solve", "--config", write(tmp_path, STAR),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
