import json
import math
import subprocess
import sys

import jsonschema
import pytest

from permchain import __version__
from permchain.cli import load_schema, main
from permchain.core import load_matrix, load_permutation


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(argv, capsys, command):
    code, out, _ = run(argv, capsys)
    doc = json.loads(out)
    jsonschema.validate(doc, load_schema(command))
    assert doc["version"] == __version__ and doc["command"] == command
    assert "workers" not in doc["config"] and "seed" in doc["config"]
    return code, doc


@pytest.fixture
def files(tmp_path, capsys):
    m9 = tmp_path / "lc9.txt"
    run(["generate", "lazy-cycle", "--n", 9, "--out", m9], capsys)
    m5 = tmp_path / "lc5.txt"
    run(["generate", "lazy-cycle", "--n", 5, "--out", m5], capsys)
    d5 = tmp_path / "d5.txt"
    run(["generate", "doubling-perm", "--n", 5, "--out", d5], capsys)
    return {"m9": m9, "m5": m5, "d5": d5, "dir": tmp_path}


def test_analyze(files, capsys):
    code, doc = run_json(["analyze", "--matrix", files["m9"]], capsys, "analyze")
    assert code == 0
    assert doc["result"]["stats"]["entropy_rate"] == pytest.approx(math.log(3), abs=1e-12)


def test_mix_profile_and_report(files, capsys):
    prefix = files["dir"] / "mix"
    code, _, _ = run(["mix", "--matrix", files["m5"], "--perm", "identity", "--out", prefix], capsys)
    assert code == 0
    csv = (files["dir"] / "mix.csv").read_text().splitlines()
    assert csv[0] == "t,d" and csv[1] == "0,0.8"
    doc = json.loads((files["dir"] / "mix.json").read_text())
    jsonschema.validate(doc, load_schema("mix"))
    assert doc["result"]["report"]["outcome"] == "mixed"


def test_mix_stdout_formats(files, capsys):
    _, out, _ = run(["mix", "--matrix", files["m5"], "--perm", files["d5"], "--format", "csv"], capsys)
    assert out.startswith("t,d\n0,0.8\n")
    code, doc = run_json(["mix", "--matrix", files["m5"], "--perm", files["d5"], "--starts", 2, "--seed", 4], capsys, "mix")
    rep = doc["result"]["report"]
    assert rep["start_mode"] == {"kind": "sampled", "count": 2, "seed": 4} and rep["lower_bound"]


def test_mix_not_mixed_by_cap(tmp_path, capsys):
    m = tmp_path / "swap.txt"
    m.write_text("2 2\n0 1 1.0\n1 0 1.0\n")
    code, doc = run_json(["mix", "--matrix", m, "--t-cap", 20], capsys, "mix")
    assert code == 0
    assert doc["result"]["report"]["outcome"] == "not-mixed-by-cap"
    # D(0) = 1/2 already meets 3/4
    assert doc["result"]["report"]["t_mix"] == [None, 0]


def test_cutoff(capsys):
    code, doc = run_json(["cutoff", "--n", 1024, "--seeds", 5, "--seed", 2024], capsys, "cutoff")
    assert code == 0
    assert len(doc["result"]["ratios"]) == 5 and doc["config"]["seed"] == 2024


def test_cutoff_byte_identical_across_workers(tmp_path, capsys):
    outs = []
    for w in (1, 3):
        path = tmp_path / f"w{w}.json"
        run(["cutoff", "--n", 300, "--seeds", 3, "--seed", 9, "--starts", "all", "--workers", w, "--out", path], capsys)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_simulate(tmp_path, capsys):
    prefix = tmp_path / "sim"
    code, _, _ = run(["simulate", "--n", 2000, "--runs", 200, "--t", 10, "--seed", 5, "--out", prefix], capsys)
    assert code == 0
    rows = (tmp_path / "sim.csv").read_text().splitlines()
    assert rows[0] == "run,T,path_entropy" and len(rows) == 201
    for row in rows[1:]:
        _, T, ent = row.split(",")
        assert T == "survived" or 1 <= int(T) <= 10
        assert float(ent) == pytest.approx(math.log(3))
    doc = json.loads((tmp_path / "sim.json").read_text())
    jsonschema.validate(doc, load_schema("simulate"))
    assert doc["result"]["coupling_bound"] == pytest.approx(2 * 100 / 2000)


def test_expansion_exact_and_sampled(files, capsys):
    code, doc = run_json(["expansion", "--matrix", files["m5"], "--perm", files["d5"]], capsys, "expansion")
    assert code == 0 and doc["result"]["mode"] == "exact"
    code, doc = run_json(["expansion", "--matrix", files["m5"], "--mode", "sampled", "--samples", 3], capsys, "expansion")
    assert code == 1 and doc["result"]["mode"] == "sampled" and doc["result"]["seed"] == 0


def test_certify(files, capsys):
    code, doc = run_json(["certify", "--matrix", files["m9"], "--perm", "identity"], capsys, "certify")
    assert code == 0 and not doc["result"]["refused"]
    assert doc["result"]["measured"]["within_bound_headline"]


def test_certify_refused(tmp_path, capsys):
    m = tmp_path / "swap.txt"
    m.write_text("2 2\n0 1 1.0\n1 0 1.0\n")
    code, out, err = run(["certify", "--matrix", m], capsys)
    doc = json.loads(out)
    jsonschema.validate(doc, load_schema("certify"))
    assert code == 1 and doc["result"]["hypothesis"] == "laziness" and "laziness" in err


def test_validation_error_exit_1(tmp_path, capsys):
    m = tmp_path / "bad.txt"
    m.write_text("2 2\n0 0 0.5\n1 1 1.0\n")
    code, out, err = run(["analyze", "--matrix", m], capsys)
    assert code == 1 and out == "" and "row-sum" in err


def test_perm_size_mismatch(files, capsys):
    p7 = files["dir"] / "p7.txt"
    run(["generate", "inverse-perm", "--n", 7, "--out", p7], capsys)
    code, _, err = run(["mix", "--matrix", files["m5"], "--perm", p7], capsys)
    assert code == 1 and "matching-size" in err


def test_usage_errors_exit_2():
    for argv in (["mix", "--bogus"], ["frobnicate"], ["mix", "--starts", "zero"], []):
        res = subprocess.run([sys.executable, "-m", "permchain.cli", *argv], capture_output=True, text=True)
        assert res.returncode == 2 and res.stdout == ""


def test_generate(tmp_path, capsys):
    m = tmp_path / "m.txt"
    assert run(["generate", "lazy-cycle", "--n", 7, "--k", 2, "--out", m], capsys)[0] == 0
    assert load_matrix(m).row(0)[0].tolist() == [0, 1, 2, 5, 6]
    p = tmp_path / "p.txt"
    run(["generate", "random-perm", "--n", 8, "--seed", 1, "--out", p], capsys)
    assert load_permutation(p).n == 8
    e = tmp_path / "g.edges"
    run(["generate", "no-cutoff", "--n", 100, "--seed", 2, "--out", m, "--edges", e], capsys)
    assert e.read_text().startswith("# 3-regular n=100\n") and load_matrix(m).bistochastic
    run(["generate", "random-regular", "--n", 20, "--d", 3, "--seed", 2, "--out", m], capsys)
    assert load_matrix(m).bistochastic
    code, _, err = run(["generate", "random-perm", "--n", 8], capsys)
    assert code == 1 and "--seed" in err


def test_generate_stdout(capsys):
    _, out, _ = run(["generate", "inverse-perm", "--n", 5], capsys)
    assert out == "5\n0 1 3 2 4\n"


def test_repeatable_bytes(files, capsys):
    argv = ["simulate", "--matrix", files["m9"], "--runs", 30, "--t", 4, "--seed", 11, "--format", "csv"]
    assert run(argv, capsys)[1] == run(argv, capsys)[1]


def test_schemas_are_valid():
    for cmd in ("analyze", "mix", "cutoff", "simulate", "expansion", "certify"):
        jsonschema.Draft202012Validator.check_schema(load_schema(cmd))
