"""Experiment harness: subcommands, artifacts, exit codes, reproducibility."""

import csv
import json
import subprocess
import sys

import pytest

from qnsubspace import load_problem
from qnsubspace.cli import (
    EXIT_BREAKDOWN,
    EXIT_CHECK_FAIL,
    EXIT_PASS,
    EXIT_USAGE,
    SUMMARY_COLUMNS,
    main,
)


def write_spec(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


BASE_SPEC = {
    "seed": 7,
    "tol": 1e-9,
    "problems": [
        {"n": 6, "r": 3, "cond": 10.0},
        {"n": 5, "r": 2, "cond": 4.0, "id": "small"},
    ],
    "methods": [
        {"kind": "cg"},
        {"kind": "bfgs"},
        {"kind": "memoryless"},
        {"kind": "qn-subspace", "step": {"kind": "unit"}},
        {"kind": "qn-subspace", "mode": "matrix-free",
         "step": {"kind": "unit-after", "start": 4},
         "sigma": {"kind": "uniform"}},
    ],
}


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_generate_writes_loadable_problems(tmp_path, capsys):
    spec = write_spec(tmp_path / "spec.json", {
        "seed": 3,
        "problems": [
            {"n": 6, "r": 3, "cond": 10.0},
            {"n": 4, "grade": 2, "cond": 5.0, "id": "tiny"},
        ],
    })
    out = tmp_path / "problems"
    assert main(["generate", "--spec", spec, "--out-dir", str(out)]) == EXIT_PASS
    printed = capsys.readouterr().out
    assert "p000: n=6 grade=3" in printed
    prob, x0, meta = load_problem(out / "tiny.json")
    assert prob.n == 4
    assert meta["seed"] == [3, 1]
    assert meta["spec"]["grade"] == 2


def test_run_writes_tables_and_traces(tmp_path, capsys):
    spec = write_spec(tmp_path / "spec.json", BASE_SPEC)
    out = tmp_path / "out"
    assert main(["run", "--spec", spec, "--out-dir", str(out)]) == EXIT_PASS
    assert "all checks passed" in capsys.readouterr().out

    rows = read_rows(out / "summary.csv")
    assert len(rows) == 10  # 2 problems x 5 methods
    assert list(rows[0].keys()) == list(SUMMARY_COLUMNS)
    assert all(row["status"] == "converged" for row in rows)
    assert all(row["termination_check"] == "pass" for row in rows)
    for row in rows:
        if row["method"] == "cg":
            assert row["iterations"] == row["grade"]

    curves = read_rows(out / "curves.csv")
    assert {c["method"] for c in curves} >= {"cg", "bfgs", "memoryless"}
    # every run contributes its terminal gradient as a final curve point
    p000 = [c for c in curves if c["problem_id"] == "p000" and c["method"] == "cg"]
    assert [int(c["k"]) for c in p000] == [0, 1, 2, 3]

    traces = sorted((out / "traces").iterdir())
    assert len(traces) == 10
    payload = json.loads(traces[0].read_text())
    assert payload["schema"] == "qnsubspace-trace-v1"
    assert "wall_time_ms" in payload["meta"]

    problems = sorted(p.name for p in (out / "problems").iterdir())
    assert problems == ["p000.json", "small.json"]


def test_run_is_reproducible_byte_for_byte(tmp_path):
    spec = write_spec(tmp_path / "spec.json", BASE_SPEC)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--spec", spec, "--out-dir", str(out_a)]) == EXIT_PASS
    assert main(["run", "--spec", spec, "--out-dir", str(out_b)]) == EXIT_PASS
    for name in ("summary.csv", "curves.csv"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_run_seed_override_changes_random_methods(tmp_path):
    spec_payload = {
        "seed": 7,
        "problems": [{"n": 6, "r": 3, "cond": 10.0, "seed": [9, 9]}],
        "methods": [{"kind": "qn-subspace",
                     "step": {"kind": "unit-after", "start": 4}}],
    }
    spec = write_spec(tmp_path / "spec.json", spec_payload)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    main(["run", "--spec", spec, "--out-dir", str(out_a)])
    main(["run", "--spec", spec, "--out-dir", str(out_b), "--seed", "8"])
    # same problem (its seed is pinned), different method randomness
    assert (out_a / "problems" / "p000.json").read_bytes() \
        == (out_b / "problems" / "p000.json").read_bytes()
    assert (out_a / "curves.csv").read_bytes() != (out_b / "curves.csv").read_bytes()


def test_run_from_saved_problem_and_json_summary(tmp_path):
    gen_spec = write_spec(tmp_path / "gen.json", {
        "seed": 11,
        "problems": [{"n": 6, "r": 4, "cond": 12.0, "id": "disk"}],
    })
    pdir = tmp_path / "problems"
    assert main(["generate", "--spec", gen_spec, "--out-dir", str(pdir)]) == EXIT_PASS

    run_spec = write_spec(tmp_path / "run.json", {
        "problems": [{"path": str(pdir / "disk.json")}],
        "methods": [{"kind": "cg"}],
    })
    out = tmp_path / "out"
    code = main(["run", "--spec", run_spec, "--out-dir", str(out),
                 "--format", "json"])
    assert code == EXIT_PASS
    rows = json.loads((out / "summary.json").read_text())
    assert rows[0]["problem_id"] == "disk"
    assert rows[0]["grade"] == "4"
    assert rows[0]["iterations"] == "4"


def test_run_mode_override(tmp_path):
    spec = write_spec(tmp_path / "spec.json", {
        "problems": [{"n": 5, "r": 2, "cond": 6.0}],
        "methods": [{"kind": "qn-subspace"}],
    })
    out = tmp_path / "out"
    main(["run", "--spec", spec, "--out-dir", str(out), "--mode", "matrix-free"])
    trace = json.loads(next((out / "traces").glob("*.json")).read_text())
    assert trace["meta"]["mode"] == "matrix-free"
    assert "matrix-free" in trace["meta"]["method_label"]


def test_run_reports_failed_checks(tmp_path, capsys):
    # unit steps need grade + 1 iterations; capping at the grade leaves the
    # run unterminated and the iteration-count check red
    spec = write_spec(tmp_path / "spec.json", {
        "problems": [{"n": 6, "r": 3, "cond": 9.0}],
        "methods": [{"kind": "qn-subspace", "step": {"kind": "unit"}}],
        "max_iter": 3,
    })
    out = tmp_path / "out"
    assert main(["run", "--spec", spec, "--out-dir", str(out)]) == EXIT_CHECK_FAIL
    assert "failed check" in capsys.readouterr().err
    row = read_rows(out / "summary.csv")[0]
    assert row["status"] == "max-iter"
    assert row["unit_step_check"] == "fail"


def test_run_reports_breakdowns(tmp_path, capsys):
    spec = write_spec(tmp_path / "spec.json", {
        "problems": [{"n": 6, "r": 3, "cond": 9.0}],
        "methods": [{"kind": "cg"}],
        "max_iter": 1,
    })
    out = tmp_path / "out"
    assert main(["run", "--spec", spec, "--out-dir", str(out)]) == EXIT_BREAKDOWN
    assert "breakdown" in capsys.readouterr().err
    row = read_rows(out / "summary.csv")[0]
    assert row["status"] == "breakdown"
    assert row["termination_check"] == "n/a"


def test_verify_subcommand(tmp_path, capsys):
    spec = write_spec(tmp_path / "spec.json", {
        "seed": 2,
        "problems": [{"n": 6, "r": 3, "cond": 10.0}],
        "methods": [{"kind": "cg"}],
    })
    out = tmp_path / "out"
    main(["run", "--spec", spec, "--out-dir", str(out)])
    capsys.readouterr()
    trace_path = next((out / "traces").glob("*.json"))
    problem_path = out / "problems" / "p000.json"

    code = main(["verify", "--trace", str(trace_path),
                 "--problem", str(problem_path)])
    printed = capsys.readouterr().out
    assert code == EXIT_PASS
    assert "[conjugate-baseline]" in printed
    assert "all checks passed" in printed

    payload = json.loads(trace_path.read_text())
    payload["iterations"][1]["p"] = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    doctored = tmp_path / "doctored.json"
    doctored.write_text(json.dumps(payload))
    code = main(["verify", "--trace", str(doctored),
                 "--problem", str(problem_path)])
    printed = capsys.readouterr().out
    assert code == EXIT_CHECK_FAIL
    assert "FAIL" in printed


@pytest.mark.parametrize("payload,fragment", [
    ({"problems": [], "methods": [{"kind": "cg"}]}, "non-empty"),
    ({"problems": [{"n": 5, "r": 2, "cond": 4.0}], "methods": [{"kind": "sd"}]},
     "unknown method kind"),
    ({"problems": [{"r": 2}], "methods": [{"kind": "cg"}]}, "needs either"),
    ({"problems": [{"n": 5, "r": 2, "cond": 4.0}],
      "methods": [{"kind": "qn-subspace", "step": {"kind": "constant"}}]},
     "needs 'value'"),
])
def test_bad_specs_exit_with_usage_code(tmp_path, capsys, payload, fragment):
    spec = write_spec(tmp_path / "spec.json", payload)
    out = tmp_path / "out"
    assert main(["run", "--spec", spec, "--out-dir", str(out)]) == EXIT_USAGE
    assert fragment in capsys.readouterr().err


def test_missing_spec_file_exits_with_usage_code(tmp_path, capsys):
    code = main(["run", "--spec", str(tmp_path / "nope.json"),
                 "--out-dir", str(tmp_path / "out")])
    assert code == EXIT_USAGE
    assert "not found" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "problems": [{"n": 4, "r": 2, "cond": 5.0}],
        "methods": [{"kind": "cg"}],
    }))
    done = subprocess.run(
        [sys.executable, "-m", "qnsubspace", "run", "--spec", str(spec),
         "--out-dir", str(tmp_path / "out")],
        capture_output=True, text=True,
    )
    assert done.returncode == EXIT_PASS, done.stderr
    assert "all checks passed" in done.stdout
