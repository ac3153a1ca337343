import csv
import json
import subprocess
import sys

import pytest

from earlyexit.cli import main
from earlyexit.traceio import dumps_trace, load_corpus, trace_to_dict


@pytest.fixture(scope="module")
def trace_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "t.jsonl"
    params = path.parent / "params.json"
    params.write_text(json.dumps({"n_utterances": 25, "ref_len_range": [8, 14], "degrade_after": 20}))
    assert main(["gen", str(params), "-o", str(path), "--seed", "5"]) == 0
    return path


def test_gen_respects_overrides(trace_file):
    corpus = load_corpus(trace_file)
    assert len(corpus) == 25


def test_validate_ok(trace_file, capsys):
    assert main(["validate", str(trace_file)]) == 0
    assert "25 traces, 0 invalid" in capsys.readouterr().out


def test_validate_reports_problems(tmp_path, trace_file, capsys):
    obj = trace_to_dict(load_corpus(trace_file).traces[0])
    obj["layers"][0]["hyp"] = "definitely not this"
    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps(obj) + "\n")
    assert main(["validate", str(bad)]) == 1
    assert "greedy decode" in capsys.readouterr().out
    assert main(["validate", str(bad), "--lenient"]) == 0


def test_analyze(trace_file, capsys):
    assert main(["analyze", str(trace_file)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("metric,value\n")
    assert "overthinking_fraction" in out and "first_best_share" in out


def test_oracle(trace_file, tmp_path, capsys):
    assert main(["oracle", str(trace_file), "--length-filter", "0"]) == 0
    captured = capsys.readouterr()
    lines = captured.out.splitlines()
    assert lines[0] == "budget,saved_fraction,total_errors,wer"
    assert len(lines) == 1 + 25 * 14 + 1
    assert "phase decreasing" in captured.err


def test_run(trace_file, tmp_path):
    out = tmp_path / "decisions.csv"
    assert main(["run", str(trace_file), "--strategy", "overlang:tau=0.8,rho=2", "-o", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 25
    assert all(10 <= int(r["exit_layer"]) <= 24 for r in rows)


def test_sweep(trace_file, tmp_path, capsys):
    out = tmp_path / "rep"
    assert main(["sweep", str(trace_file), "-o", str(out), "--length-filter", "0"]) == 0
    assert "83 strategy rows + 15 fixed-layer rows" in capsys.readouterr().out
    assert (out / "tradeoffs.csv").exists() and (out / "oracle.csv").exists()


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["analyze", str(tmp_path / "missing.jsonl")]) != 0
    assert "error" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "x"), "--strategy", "bogus:tau=1"]) != 0


def test_module_entry_point(trace_file):
    proc = subprocess.run(
        [sys.executable, "-m", "earlyexit", "validate", str(trace_file)], capture_output=True, text=True
    )
    assert proc.returncode == 0
