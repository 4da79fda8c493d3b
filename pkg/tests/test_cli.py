import subprocess
import sys

import pytest

from decpomdp.cli import main, parse_k
from decpomdp.problem_file import load_problem
from decpomdp.problems import make_dectiger


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def record(text):
    body = text.split("\n[timing]\n")[0]
    return dict(line.split(": ", 1) for line in body.splitlines() if ": " in line)


@pytest.mark.parametrize("algorithm", ["brute", "gmaa", "qstar"])
def test_solve_dectiger_h3(capsys, algorithm):
    code, out, _ = run(capsys, "solve", "--problem", "dectiger", "--horizon", "3",
                       "--algorithm", algorithm)
    assert code == 0
    rec = record(out)
    assert rec["algorithm"] == algorithm
    assert round(float(rec["value"]), 4) == 5.1908
    assert "[timing]" in out


@pytest.mark.parametrize("heuristic", ["qmdp", "qpomdp", "qbg", "qstar-normative"])
def test_solve_each_heuristic(capsys, heuristic):
    code, out, _ = run(capsys, "solve", "--problem", "skewed-dectiger", "--horizon", "2",
                       "--heuristic", heuristic)
    assert code == 0
    rec = record(out)
    assert rec["heuristic"] == heuristic
    assert rec["truncated"] == "false"
    assert float(rec["root_bound"]) >= float(rec["value"]) - 1e-9


def test_records_are_byte_identical(tmp_path, capsys):
    args = ["solve", "--problem", "dectiger", "--horizon", "3", "--episodes", "2000",
            "--seed", "5"]
    texts = []
    for i in range(2):
        out_dir = tmp_path / f"run{i}"
        assert main(args + ["--out", str(out_dir)]) == 0
        texts.append(((out_dir / "result.txt").read_bytes(),
                      (out_dir / "policy.txt").read_bytes()))
        assert (out_dir / "timing.txt").exists()
    capsys.readouterr()
    assert texts[0][1] == texts[1][1]
    # identical except for the output path line
    strip = [b"\n".join(l for l in t[0].splitlines() if not l.startswith(b"policy_dump"))
             for t in texts]
    assert strip[0] == strip[1]
    assert b"sim_mean" in strip[0]


def test_env_var_sets_output_dir(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("DECPOMDP_OUT", str(tmp_path / "env"))
    assert main(["solve", "--problem", "dectiger", "--horizon", "2"]) == 0
    capsys.readouterr()
    assert (tmp_path / "env" / "result.txt").exists()
    text = (tmp_path / "env" / "policy.txt").read_text()
    assert text.startswith("agent 0 stage 0 [-] -> ")


def test_firefighting_params(capsys):
    code, out, _ = run(capsys, "solve", "--problem", "firefighting:2,3", "--horizon", "2",
                       "--algorithm", "brute")
    assert code == 0
    assert record(out)["problem"].startswith("firefighting")


def test_truncation_exit_code(capsys):
    code, out, _ = run(capsys, "solve", "--problem", "dectiger", "--horizon", "3",
                       "--heuristic", "qmdp", "--node-cap", "2")
    assert code == 3
    rec = record(out)
    assert rec["truncated"] == "true" and rec["reason"] == "node cap"


def test_cap_exit_code(capsys):
    code, _, err = run(capsys, "solve", "--problem", "dectiger", "--horizon", "3",
                       "--algorithm", "brute", "--policy-cap", "5")
    assert code == 3 and "cap" in err


def test_invalid_problem_exit_codes(tmp_path, capsys):
    code, _, err = run(capsys, "solve", "--problem", "nosuch", "--horizon", "2")
    assert code == 4 and "unknown problem" in err
    bad = tmp_path / "bad.dpomdp"
    bad.write_text("agents: 1\nstates: 1\nwhat\n")
    code, _, err = run(capsys, "solve", "--problem", str(bad))
    assert code == 4 and "line 3" in err
    code, _, err = run(capsys, "solve", "--problem", "dectiger")
    assert code == 4 and "--horizon" in err


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as e:
        main(["solve", "--problem", "dectiger", "--horizon", "2", "--k", "0"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["solve", "--problem", "dectiger", "--algorithm", "nope"])
    assert e.value.code == 2
    assert main(["solve", "--problem", "dectiger", "--horizon", "2", "--jobs", "0"]) == 2


def test_parse_k():
    assert parse_k("inf") == float("inf")
    assert parse_k("3") == 3


def test_kdelay_verify(capsys):
    code, out, _ = run(capsys, "solve", "--problem", "dectiger", "--horizon", "2",
                       "--algorithm", "kdelay-verify", "--k", "2")
    assert code == 0
    rec = record(out)
    assert rec["monotone"] == "true"
    assert rec["k_max"] == "2"
    assert float(rec["max_violation_k1"]) <= 1e-9


def test_bounds_table(tmp_path, capsys):
    code, out, _ = run(capsys, "bounds", "--problem", "dectiger", "--horizon", "3",
                       "--out", str(tmp_path))
    assert code == 0
    rec = record(out)
    assert rec["hierarchy"] == "true"
    assert rec["columns"] == "qstar,qbg,qpomdp,qmdp"
    lines = (tmp_path / "bounds.tsv").read_text().splitlines()
    assert lines[0] == "# stage\thistory\tqstar\tqbg\tqpomdp\tqmdp"
    assert len(lines) - 1 == int(rec["rows"])
    for line in lines[1:]:
        vals = [float(x) for x in line.split("\t")[2:]]
        assert all(a <= b + 1e-9 for a, b in zip(vals, vals[1:]))


def test_export_and_reload(tmp_path, capsys):
    path = tmp_path / "tiger.dpomdp"
    assert main(["export", "--problem", "dectiger", "--horizon", "3", "--out", str(path)]) == 0
    assert load_problem(path.read_text()) == make_dectiger(3)
    code, out, _ = run(capsys, "solve", "--problem", str(path), "--algorithm", "brute")
    assert code == 0
    assert round(float(record(out)["value"]), 4) == 5.1908
    code, out, _ = run(capsys, "export", "--problem", "dectiger", "--horizon", "1")
    assert out.startswith("# dectiger\nagents: 2\n")


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "decpomdp", "solve", "--problem", "dectiger", "--horizon", "1"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert "value: -2.0" in proc.stdout
