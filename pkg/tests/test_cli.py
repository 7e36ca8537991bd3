import io
import os

import numpy as np
import pytest

from psca import load_instance
from psca.cli import EXIT_AUDIT, EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from psca.config import GbarValue, build_config, parse_assignment, read_config_file
from psca.errors import InvalidArgumentError
from psca.traceio import COLUMNS, read_trace_csv

SMALL = ["--rows", "30", "--cols", "120", "--sparsity", "0.05", "--lambda", "1.0"]


def run(argv):
    buf = io.StringIO()
    code = main(argv, stdout=buf)
    return code, buf.getvalue()


def read_kv(path):
    with open(path, encoding="utf-8") as fh:
        return dict(line.rstrip("\n").split("=", 1) for line in fh if "=" in line)


def strip_clock(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            out.append(line if line.startswith("#") else line.rsplit(",", 1)[0])
    return out


@pytest.fixture
def solved(tmp_path):
    inst = tmp_path / "small.inst"
    code, _ = run(["generate", *SMALL, "--instance", str(inst)])
    assert code == EXIT_OK
    code, text = run(["solve", "--instance", str(inst), "--max-iters", "400", "--coords-per-worker", "20",
                      "--output-dir", str(tmp_path), "--name", "a"])
    assert code == EXIT_OK, text
    return tmp_path, inst


# ---------------------------------------------------------------- config


def test_last_assignment_wins(tmp_path):
    cfg_file = tmp_path / "exp.cfg"
    cfg_file.write_text("# comment\nrows=10\nlambda=0.5  # alias\nrows = 20\n")
    pairs = read_config_file(cfg_file) + [parse_assignment("rows=7")]
    cfg = build_config(pairs)
    assert cfg.rows == 7 and cfg.lam == 0.5


def test_gbar_values_parse():
    cfg = build_config([("gamma0", "0.25gbar"), ("floor", "1e-3")])
    assert cfg.gamma0 == GbarValue(0.25, True) and cfg.floor == GbarValue(1e-3, False)
    assert cfg.gamma0.resolve(2.0) == 0.5 and str(cfg.gamma0) == "0.25gbar"
    assert build_config([("gamma0", "gbar")]).gamma0 == GbarValue(1.0, True)
    with pytest.raises(InvalidArgumentError):
        GbarValue(1.0, True).resolve(None)


@pytest.mark.parametrize("pair", [("rows", "ten"), ("rule", "greedy"), ("workers", "0"),
                                  ("density", "1.5"), ("check_gate", "maybe")])
def test_bad_values_rejected(pair):
    with pytest.raises(InvalidArgumentError):
        build_config([pair])


def test_unknown_key_rejected():
    with pytest.raises(InvalidArgumentError, match="unknown"):
        parse_assignment("colour=blue")


def test_output_dir_env_default(monkeypatch, tmp_path):
    monkeypatch.setenv("PSCA_OUTPUT_DIR", str(tmp_path))
    assert build_config([]).output_dir == str(tmp_path)


# ---------------------------------------------------------------- commands


def test_generate_is_byte_identical_and_reloads(tmp_path):
    paths = [tmp_path / "one.inst", tmp_path / "two.inst"]
    for p in paths:
        code, text = run(["generate", *SMALL, "--instance", str(p)])
        assert code == EXIT_OK and "h_star" in text
    assert paths[0].read_bytes() == paths[1].read_bytes()
    inst = load_instance(str(paths[0]))
    meta = read_kv(str(paths[0]) + ".meta")
    assert repr(inst.h_star) == meta["h_star"]


def test_generate_rejects_empty_support(tmp_path):
    code, _ = run(["generate", "--cols", "50", "--sparsity", "0.01", "--output-dir", str(tmp_path)])
    assert code == EXIT_CONFIG


def test_solve_writes_trace_and_summary(solved):
    out, _ = solved
    table = read_trace_csv(out / "a.csv")
    with open(out / "a.csv", encoding="utf-8") as fh:
        fh.readline()
        assert fh.readline().strip() == ",".join(COLUMNS)
    summary = read_kv(out / "a.summary")
    assert summary["decrease_violations"] == "0"
    assert int(summary["iterations"]) == table.iterations == 400
    assert float(summary["final_gap"]) == pytest.approx(table.gap[-1])
    assert np.all(np.diff(table.objective) <= 1e-12 * abs(table.objective[0]))
    assert table.meta["algorithm"] == "psca" and "workers" not in table.meta
    assert table.meta["rows"] == "30" and table.meta["cols"] == "120"  # the loaded instance, not defaults


def test_solve_deterministic_across_workers(solved):
    out, inst = solved
    for q in ("1", "3"):
        code, _ = run(["solve", "--instance", str(inst), "--max-iters", "200", "--group-size", "20",
                       "--q", q, "--output-dir", str(out), "--name", f"q{q}"])
        assert code == EXIT_OK
    assert strip_clock(out / "q1.csv") == strip_clock(out / "q3.csv")


def test_serial_cyclic_one_dimensional(tmp_path):
    code, _ = run(["solve", "--rows", "5", "--cols", "1", "--sparsity", "1", "--lambda", "0.3",
                   "--algorithm", "serial-cyclic", "--rule", "cyclic", "--coords-per-worker", "1",
                   "--max-iters", "5", "--stop-tol", "1e-12", "--output-dir", str(tmp_path), "--name", "one"])
    assert code == EXIT_OK
    s = read_kv(tmp_path / "one.summary")
    assert int(s["iterations"]) == 1 and abs(float(s["final_gap"])) <= 1e-12


def test_compare_table_and_unreached(solved):
    out, _ = solved
    code, text = run(["compare", str(out / "a.csv"), str(out / "a.csv"), "--output-dir", str(out)])
    assert code == EXIT_OK
    lines = text.splitlines()
    assert lines[1].split() == lines[2].split()  # duplicated trace gives identical rows
    assert "unreached" in text  # never reaches 1e-6 at this length
    assert (out / "compare.csv").read_text().count("\n") == 3
    assert (out / "compare.txt").read_text() == text


def test_compare_rejects_mixed_instances(solved, tmp_path):
    out, _ = solved
    other = tmp_path / "b.inst"
    run(["generate", *SMALL, "--instance-seed", "9", "--instance", str(other)])
    run(["solve", "--instance", str(other), "--max-iters", "50", "--output-dir", str(out), "--name", "b"])
    code, _ = run(["compare", str(out / "a.csv"), str(out / "b.csv")])
    assert code == EXIT_CONFIG


def test_audit_healthy_run_passes(solved):
    out, inst = solved
    # a decreasing cyclic schedule reaches the asymptotic regime within a few thousand iterations
    code, _ = run(["solve", "--instance", str(inst), "--rule", "cyclic", "--coords-per-worker", "20",
                   "--step", "decrease-then-hold", "--gamma0", "1", "--eta", "3e-4", "--floor", "0.5gbar",
                   "--max-iters", "3000", "--output-dir", str(out), "--name", "c"])
    assert code == EXIT_OK
    code, text = run(["audit", str(out / "c.csv"), "--instance", str(inst), "--probe-trials", "50",
                      "--output-dir", str(out), "--name", "a"])
    assert code == EXIT_OK, text
    summary = read_kv(out / "a.audit.summary")
    assert summary["overall"] == "pass"
    assert summary["sufficient_decrease.violations"] == "0"


def test_audit_flags_corrupted_trace(solved):
    out, inst = solved
    lines = (out / "a.csv").read_text().splitlines(keepends=True)
    # inflate the objective at one interior row
    fields = lines[102].split(",")
    fields[1] = repr(float(fields[1]) + 1.0)
    lines[102] = ",".join(fields)
    (out / "bad.csv").write_text("".join(lines))
    code, _ = run(["audit", str(out / "bad.csv"), "--instance", str(inst), "--probe-trials", "20",
                   "--output-dir", str(out), "--name", "bad"])
    assert code == EXIT_AUDIT
    assert read_kv(out / "bad.audit.summary")["overall"] == "fail"


def test_exit_codes(tmp_path):
    assert run(["solve", "--set", "colour=blue"])[0] == EXIT_CONFIG
    assert run(["solve", "--rows", "-3"])[0] == EXIT_CONFIG
    assert run(["solve", "--instance", str(tmp_path / "missing.inst")])[0] == EXIT_IO
    assert run(["compare", str(tmp_path / "x.csv"), str(tmp_path / "y.csv")])[0] == EXIT_IO
    junk = tmp_path / "junk.csv"
    junk.write_text("not,a,trace\n")
    assert run(["compare", str(junk), str(junk)])[0] == EXIT_CONFIG
    assert run(["--version"])[0] == EXIT_OK
    assert run([])[0] == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    import subprocess
    import sys

    env = dict(os.environ, PSCA_OUTPUT_DIR=str(tmp_path))
    res = subprocess.run([sys.executable, "-m", "psca", "generate", *SMALL], env=env,
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "run.inst").exists() and (tmp_path / "run.inst.meta").exists()
