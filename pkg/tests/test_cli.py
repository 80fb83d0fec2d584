import json

import pytest

from stratint.cli import main
from stratint.coefficients import import_table


def _run(*args):
    return main(list(args))


def test_gen_coeffs_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert _run("gen-coeffs", "--weights", "000", "--q", "6", "--out", str(a)) == 0
    assert _run("gen-coeffs", "--weights", "000", "--q", "6", "--out", str(b)) == 0
    assert a.read_bytes() == b.read_bytes()
    t = import_table(a, 1.0)
    assert t.values.size == 343


def test_gen_coeffs_four_fold(tmp_path):
    out = tmp_path / "t.json"
    assert _run("gen-coeffs", "--weights", "0000", "--q", "1", "--out", str(out)) == 0
    assert import_table(out, 1.0).values.size == 16


def test_usage_errors(tmp_path, capsys):
    assert _run("errors", "--weights", "00", "--out", str(tmp_path)) == 1
    assert _run("gen-coeffs", "--weights", "3", "--q", "1", "--out", str(tmp_path / "x")) == 1
    assert _run("validate", "--suite", "formulas", "--samples", "500",
                "--out", str(tmp_path)) == 1
    with pytest.raises(SystemExit) as ei:
        _run("no-such-command")
    assert ei.value.code == 1


def test_errors_command(tmp_path):
    out = tmp_path / "e"
    assert _run("errors", "--weights", "00,10,000", "--delta", "0.5", "--q", "0:2",
                "--out", str(out)) == 0
    lines = (out / "errors.csv").read_text().splitlines()
    assert lines[0].startswith("family,q,exact")
    assert len(lines) == 1 + 3 * 3
    summary = json.loads((out / "summary.json").read_text())
    assert summary["selected_q"]["00"] == 2
    assert (out / "config.txt").exists()


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("weights = 00\ndelta = 0.5\nq = 0\n")
    out = tmp_path / "o"
    assert _run("errors", "--config", str(cfg), "--delta", "0.25", "--out", str(out)) == 0
    assert json.loads((out / "summary.json").read_text())["delta"] == 0.25


def test_simulate_reproducible(tmp_path):
    args = ["simulate", "--problem", "gbm", "--order", "2.0", "--delta", "0.25",
            "--paths", "3", "--seed", "5", "--threads", "1"]
    assert _run(*args, "--out", str(tmp_path / "a")) == 0
    assert _run(*args, "--out", str(tmp_path / "b")) == 0
    ta = (tmp_path / "a" / "trajectories.csv").read_bytes()
    assert ta == (tmp_path / "b" / "trajectories.csv").read_bytes()
    assert len(ta.decode().splitlines()) == 1 + 3 * 5


def test_converge_min_order(tmp_path):
    args = ["converge", "--problem", "gbm", "--order", "1.0", "--paths", "50",
            "--delta", "0.25,0.125,0.0625", "--threads", "1"]
    assert _run(*args, "--out", str(tmp_path / "a")) == 0
    assert _run(*args, "--min-order", "5", "--out", str(tmp_path / "b")) == 3


def test_unknown_problem(tmp_path):
    assert _run("simulate", "--problem", "nope", "--delta", "0.1",
                "--out", str(tmp_path)) == 1


def test_validate_constants_reports(tmp_path, capsys):
    code = _run("validate", "--suite", "constants", "--out", str(tmp_path))
    text = capsys.readouterr().out
    assert code in (0, 3)
    assert text.count("PASS") + text.count("FAIL") == 6
    assert (code == 0) == ("FAIL" not in text)
