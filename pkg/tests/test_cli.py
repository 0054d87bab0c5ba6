import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from ctpower import AdaptiveSolution, CostSpec, FadingStates, NetworkInstance, Solution, solve_perfect_csi
from ctpower.cli import main

EXAMPLE = {"G": [[0.42, 0.89], [0.63, 0.15]], "N_dB": [0, 0], "Pmax_dB": [0, 0], "L": [10, 10], "Tmax": [1000, 1000]}
FADING = {"probs": [0.5, 0.5], "states": [{"G": [[1.2, 0.2], [0.3, 0.9]]}, {"G": [[0.3, 0.1], [0.2, 0.6]]}],
          "N": [0.1, 0.1], "Pmax": [1, 1], "L": [10, 10]}
ROBUST = {"N": [0.1, 0.1], "Pmax": [1, 1], "L": [10, 20],
          "dist": {"entries": [[{"kind": "rayleigh", "mean": 1.0}, {"kind": "rayleigh", "mean": 0.1}],
                               [{"kind": "rayleigh", "mean": 0.2}, {"kind": "nakagami", "m": 2, "mean": 0.8}]]},
          "outage": {"q": [0.1, 0.1]}}
MAX = '{"kind": "max"}'


@pytest.fixture
def files(tmp_path):
    out = {}
    for name, doc in (("inst", EXAMPLE), ("fading", FADING), ("robust", ROBUST)):
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(doc))
        out[name] = str(p)
    return out


def run(argv, capsys):
    code = main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_solve_max(files, capsys):
    code, out, _ = run(["solve", "--input", files["inst"], "--cost", MAX], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["units"] == "linear"
    assert set(doc) >= {"P", "T", "certificate", "cost"}
    ref = solve_perfect_csi(NetworkInstance.from_dict(EXAMPLE), CostSpec.max())
    assert Solution.from_dict(doc) == ref


def test_cost_and_opts_from_files(files, tmp_path, capsys):
    (tmp_path / "cost.json").write_text('{"kind": "weighted_sum", "w": [0.5, 0.5]}')
    (tmp_path / "opts.json").write_text('{"mu": 10}')
    code, out, _ = run(["solve", "--input", files["inst"], "--cost", str(tmp_path / "cost.json"),
                        "--opts", str(tmp_path / "opts.json")], capsys)
    assert code == 0
    assert json.loads(out)["cost"] == pytest.approx(56.6392, rel=1e-5)


def test_region_rows(files, capsys):
    code, out, _ = run(["region", "--input", files["inst"], "--weights", "33"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "theta,w1,w2,T1,T2,R1,R2,cost"
    assert len(lines) == 34


def test_fading_round_trip(files, capsys):
    code, out, _ = run(["fading", "--input", files["fading"], "--cost", '{"kind":"weighted_sum","w":[0.5,0.5]}',
                        "--objective", "expected_cost", "--mode", "short_term"], capsys)
    assert code == 0
    sol = AdaptiveSolution.from_json(out)
    assert sol.objective_kind == "expected_cost" and sol.power_mode == "short_term"
    assert FadingStates.from_dict(FADING).S == sol.P.shape[0]


def test_robust_has_audit(files, capsys):
    code, out, _ = run(["robust", "--input", files["robust"], "--cost", MAX, "--samples", "5000", "--seed", "4"],
                       capsys)
    assert code == 0
    sol = Solution.from_json(out)
    users = sol.audit["users"]
    assert "closed_form" in users[0] and "smoothed_saa" in users[1]
    assert all("monte_carlo" in u for u in users)


def test_outputs_byte_identical(files, tmp_path, capsys):
    for cmd, extra in (("solve", ["--cost", MAX]), ("region", ["--weights", "9"]),
                       ("robust", ["--cost", MAX, "--samples", "3000"])):
        paths = [tmp_path / f"{cmd}{k}.out" for k in range(2)]
        for p in paths:
            assert main([cmd, "--input", files["inst" if cmd != "robust" else "robust"], "--output", str(p), *extra]) == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()


def test_verify(capsys):
    code, out, _ = run(["verify"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


def test_malformed_json_cites_line(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"G": [[1]],\n "N": [1,\n}')
    code, _, err = run(["solve", "--input", str(p), "--cost", MAX], capsys)
    assert code == 2
    doc = json.loads(err)
    assert doc["error"] == "parse" and doc["line"] == 3


def test_missing_field_cited(tmp_path, capsys):
    p = tmp_path / "inst.json"
    p.write_text('{"G": [[1]], "N": [1], "L": [1]}')
    code, _, err = run(["solve", "--input", str(p), "--cost", MAX], capsys)
    assert code == 2 and json.loads(err)["field"] == "Pmax"


def test_bad_cost_cited(files, capsys):
    code, _, err = run(["solve", "--input", files["inst"], "--cost", '{"kind":"weighted_sum","w":[0.2]}'], capsys)
    assert code == 2
    assert json.loads(err)["source"] == "--cost"


def test_infeasible_reports_certificate(tmp_path, capsys):
    p = tmp_path / "inf.json"
    p.write_text('{"G": [[1, 1], [1, 1]], "N": [1, 1], "Pmax": [1, 1], "L": [10, 10], "Tmax": [10.5, 10.5]}')
    code, _, err = run(["solve", "--input", str(p), "--cost", MAX], capsys)
    assert code == 3
    doc = json.loads(err)
    assert doc["error"] == "infeasible" and doc["certificate"]["status"] == "infeasible"


def test_zero_outage_reported(files, tmp_path, capsys):
    doc = dict(ROBUST, outage={"q": [0.0, 0.1]})
    p = tmp_path / "q0.json"
    p.write_text(json.dumps(doc))
    code, _, err = run(["robust", "--input", str(p), "--cost", MAX], capsys)
    assert code == 3 and json.loads(err)["error"] == "infeasible"


def test_usage_errors_are_json(capsys):
    code, _, err = run(["launch"], capsys)
    assert code == 2 and json.loads(err)["error"] == "usage"
    code, _, err = run(["solve", "--input", "does-not-exist.json", "--cost", MAX], capsys)
    assert code == 2 and json.loads(err)["error"] == "io"
    code, _, err = run(["solve"], capsys)
    assert code == 2 and json.loads(err)["error"] == "usage"


def test_module_entry_point_and_log_env(files):
    env = dict(os.environ, CTPOWER_LOG="DEBUG")
    proc = subprocess.run([sys.executable, "-m", "ctpower", "solve", "--input", files["inst"], "--cost", MAX],
                          capture_output=True, text=True, env=env, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["certificate"]["status"] == "optimal"
    assert "DEBUG" in proc.stderr
