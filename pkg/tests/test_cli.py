import json
from pathlib import Path

import pytest

import loeff.cli as cli
import loeff.harness as harness
from loeff.errors import NumericallySingularError
from loeff.harness import CSV_COLUMNS
from loeff.scenario_file import parse

EXAMPLES = Path(__file__).resolve().parents[1] / "scenarios" / "worked_examples.json"


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def strip_time(obj):
    if isinstance(obj, dict):
        return {k: strip_time(v) for k, v in obj.items() if k != "wall_time"}
    if isinstance(obj, list):
        return [strip_time(v) for v in obj]
    return obj


def test_file_round_trip():
    first = parse(EXAMPLES.read_text())
    again = parse(json.dumps(first.dump()))
    assert again == first
    assert parse(json.dumps(again.dump())).dump() == first.dump()


@pytest.mark.parametrize(
    "request_name, value",
    [("es_psi_prime_1", 0.5), ("es_psi_prime_2", 1.0), ("ed_psi_2", 1.0), ("ed_psi_prime_2", 2.0), ("es_phi_1", 0.4)],
)
def test_efficiency_requests(capsys, request_name, value):
    code, out, _ = run(["efficiency", "--file", EXAMPLES, "--request", request_name], capsys)
    assert code == 0
    (res,) = json.loads(out)["results"]
    assert res["value"] == pytest.approx(value, abs=1e-6)


def test_efficiency_u_by_state(capsys):
    args = ["efficiency", "--file", EXAMPLES, "--state", "psi_prime", "--measure", "u", "-K", "2", "--restarts", "2"]
    code, out, _ = run(args, capsys)
    res = json.loads(out)["results"][0]
    assert code == 0 and res["bound_type"] == "upper-bound"
    assert res["value"] == pytest.approx(1.0, abs=1e-3)
    w = res["certificate"]["W"]
    assert len(w) == 2 and len(w[0][0]) == 2  # complex entries as [re, im]


def test_reports_are_reproducible(capsys):
    args = ["efficiency", "--file", EXAMPLES, "--state", "phi", "--measure", "d", "-K", "2", "--seed", "3"]
    _, a, _ = run(args, capsys)
    _, b, _ = run(args, capsys)
    assert strip_time(json.loads(a)) == strip_time(json.loads(b))
    cut = lambda t: [l for l in t.splitlines() if '"wall_time"' not in l]
    assert cut(a) == cut(b)


def test_seventeen_digits(capsys):
    _, out, _ = run(["efficiency", "--file", EXAMPLES, "--request", "es_phi_1"], capsys)
    line = next(l for l in out.splitlines() if '"value"' in l)
    digits = line.split(":")[1].strip().rstrip(",").replace("0.", "", 1).lstrip("0")
    assert len(digits) >= 15


def test_verify_file(capsys, tmp_path):
    out_file = tmp_path / "report.json"
    code, out, err = run(["verify", "--file", EXAMPLES, "--output", out_file], capsys)
    assert code == 0
    data = json.loads(out)
    assert data["violations"] == 0 and data["runs"] > 5
    assert out_file.read_text() == out
    assert "0 violations" in err


@pytest.mark.parametrize("suite", ["decomposition-1000", "catalysis-200"])
def test_verify_suites(capsys, suite):
    code, out, _ = run(["verify", "--suite", suite], capsys)
    data = json.loads(out)
    assert code == 0 and data["violations"] == 0


def test_csv_output(capsys):
    code, out, _ = run(["verify", "--file", EXAMPLES, "--format", "csv"], capsys)
    lines = out.splitlines()
    assert code == 0
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert all(len(l.split(",")) == len(CSV_COLUMNS) for l in lines[1:])


def test_trace_residuals(capsys):
    code, out, _ = run(["trace", "--file", EXAMPLES, "--scenario", "random7"], capsys)
    assert code == 0
    for r in json.loads(out)["runs"]:
        assert max(r["trace"]["residuals"].values()) <= 1e-10
        assert r["conclusions"]["no_increase"]


def test_trace_identity(capsys):
    _, out, _ = run(["trace", "--file", EXAMPLES, "--scenario", "identity"], capsys)
    (r,) = json.loads(out)["runs"]
    assert r["trace"]["p_out"] == pytest.approx([0.5, 0.3], abs=1e-12)


def write(tmp_path, text):
    f = tmp_path / "f.json"
    f.write_text(text)
    return f


@pytest.mark.parametrize(
    "text",
    [
        "",
        "{not json",
        '{"version": "2", "truncation": {"cutoff": 1}}',
        '{"version": "1", "truncation": {"cutoff": 1}, "bogus": 1}',
        '{"version": "1", "truncation": {"cutoff": 1}, "states": {"a": {"ref": "a"}},'
        ' "requests": [{"kind": "efficiency", "name": "x", "state": "a", "measure": "d", "K": 1}]}',
    ],
)
def test_configuration_errors_exit_2(capsys, tmp_path, text):
    code, out, err = run(["efficiency", "--file", write(tmp_path, text)], capsys)
    assert code == 2 and out == ""
    assert err.startswith("loeff: configuration error") and err.count("\n") == 1


def test_missing_file_and_bad_k(capsys, tmp_path):
    assert run(["efficiency", "--file", tmp_path / "none.json"], capsys)[0] == 2
    args = ["efficiency", "--file", EXAMPLES, "--state", "psi", "--measure", "d", "-K", "5"]
    assert run(args, capsys)[0] == 2
    assert run(["trace", "--file", EXAMPLES, "--scenario", "ed_psi_2"], capsys)[0] == 2
    assert run(["verify", "--suite", "catalysis-200", "--jobs", "0"], capsys)[0] == 2


def test_numerical_failure_exit_3(capsys, monkeypatch):
    def boom(*a, **k):
        raise NumericallySingularError("inverse loss overflow")

    monkeypatch.setattr(cli, "efficiency", boom)
    code, _, err = run(["efficiency", "--file", EXAMPLES, "--request", "ed_psi_2"], capsys)
    assert code == 3 and "numerical failure" in err


def test_violations_exit_1(capsys, monkeypatch):
    # an impossibly strict slack threshold turns every row into a violation
    monkeypatch.setattr(harness, "VIOLATION_SLACK", -10.0)
    code, out, _ = run(["verify", "--file", EXAMPLES], capsys)
    assert code == 1
    assert json.loads(out)["violations"] > 0
