import csv
import io
import json

import jsonschema
import pytest

from fiberscope.cli import preprocess_argv, run
from fiberscope.report import REPORT_SCHEMA, deterministic_view


def call(*argv):
    out = io.StringIO()
    code = run(list(argv), stdout=out)
    return code, out.getvalue()


def report(*argv):
    code, text = call(*argv, "--json")
    doc = json.loads(text)
    jsonschema.validate(doc, REPORT_SCHEMA)
    assert doc["exit_code"] == code
    return code, doc


def test_schema_is_valid_draft():
    code, text = call("report-schema")
    assert code == 0
    jsonschema.Draft202012Validator.check_schema(json.loads(text))


def test_negative_values_are_not_options():
    assert preprocess_argv(["trace", "--seed", "-1,0,2"]) == ["trace", "--seed=-1,0,2"]


def test_jac_exact_value_and_params():
    code, doc = report("jac", "--preset", "example", "--at", "0,0,0")
    assert code == 0
    assert doc["map"]["params"] == {"L": "1/1", "h1": "2/1", "h2": "3/1"}
    data = {c["name"]: c for c in doc["checks"]}
    assert any(c["verdict"] == "pass" for c in doc["checks"])
    assert "-63/50" in json.dumps(data)


def test_delta_identities_pass():
    code, doc = report("delta", "--preset", "example", "--index", "2", "--verify", "200")
    checks = {c["name"]: c for c in doc["checks"]}
    assert code == 0 and checks["identities"]["verdict"] == "pass"


def test_trace_writes_csv(tmp_path):
    path = tmp_path / "orbit.csv"
    code, _ = call("trace", "--preset", "example", "--index", "1", "--seed", "0.1,-0.2,0.3", "--arclen", "2",
                   "--csv", str(path))
    assert code == 0
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["t", "x1", "x2", "x3", "|field|", "f_1", "f_2", "f_3"]
    assert len(rows) > 3


def test_probe_exit_codes():
    assert call("probe-surjectivity", "--preset", "example", "--index", "1", "--seeds", "8")[0] == 0


def test_census_report():
    code, doc = report("census", "--pitch", "0.2")
    assert code == 0
    assert all(c["verdict"] == "pass" for c in doc["checks"])


def test_collisions_witness_exit_code():
    assert call("collisions", "--preset", "example", "--max-pairs", "5")[0] == 2
    assert call("collisions", "--preset", "cubic2d")[0] == 0


def test_jelonek_exit_codes():
    assert call("jelonek", "--preset", "compress2d", "--rays", "32")[0] == 2
    assert call("jelonek", "--preset", "cubic2d", "--rays", "32")[0] == 0


def test_count_on_spiral():
    code, doc = report("count", "--preset", "expspiral", "--drop", "3", "--levels", "1,0",
                       "--box", "-2,2;-10,10;-2,2")
    assert code == 2
    assert doc["checks"][0]["data"]["per_level"][0]["d"] == 3


def test_sturm_on_m_and_k_alpha():
    code, doc = report("sturm")
    assert code == 0
    code, text = call("sturm", "--k-alpha", "3/2", "--h", "5/2", "--interval", "I2")
    assert code == 0 and text


def test_user_map_file(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("#semialgebraic\nf1 = x1 + x2^3\nf2 = x2\n")
    code, doc = report("jac", "--map", str(path))
    assert code == 0 and doc["map"]["n"] == 2 and doc["map"]["params"] is None


@pytest.mark.parametrize("argv", [
    ["jac", "--preset", "nope"],
    ["delta", "--preset", "cubic2d", "--index", "5"],
    ["trace", "--index", "1", "--seed", "1,2"],
    ["census", "--box", "1,0"],
    ["jac", "--map", "/nonexistent/map.txt"],
    ["sturm", "--poly", "z^2 +"],
])
def test_usage_errors_exit_one(argv):
    assert call(*argv)[0] == 1


def test_reports_are_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    argv = ["collisions", "--preset", "example", "--box", "-2,2", "--max-pairs", "5"]
    call(*argv, "--out", str(a))
    call(*argv, "--out", str(b))
    da, db = json.loads(a.read_text()), json.loads(b.read_text())
    da["command"] = db["command"] = None
    assert deterministic_view(da) == deterministic_view(db)
