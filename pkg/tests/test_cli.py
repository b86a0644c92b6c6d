import csv
import json
import math
import os
import subprocess
import sys
from pathlib import Path

import pytest

from gbsde.cli import main
from gbsde.config import ConfigError, parse_builtin

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(tmp_path, command, config, *extra, sub="out"):
    out = tmp_path / sub
    code = main([command, "--config", str(CONFIGS / config), "--out", str(out), *extra])
    return code, out


def read_csv(path):
    """Parse an artifact: header line gives the schema, every row must match it."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    assert all(len(r) == len(header) for r in body)
    return [dict(zip(header, r)) for r in body], header


def num(text):
    return float(text) if text else math.nan


def test_solve_zero_minus_one(tmp_path):
    code, out = run(tmp_path, "solve", "zero_minus_one.ini")
    assert code == 0
    rows, header = read_csv(out / "surface.csv")
    assert header == ["i", "t", "j", "x", "Y", "Z", "dA", "sigma_star"]
    assert len(rows) == 201 * 201
    y0 = [r for r in rows if r["i"] == "0" and num(r["x"]) == 0.0][0]
    assert abs(num(y0["Y"])) < 1e-3
    mass = sum(num(r["dA"]) for r in rows if r["j"] == "100")
    assert mass == pytest.approx(1.0, abs=1e-2)
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "ok" and abs(report["Y0"]) < 1e-3
    assert read_csv(out / "ladder.csv")[0] == []


def test_solve_ladder(tmp_path):
    code, out = run(tmp_path, "solve", "zero_minus_one_ladder.ini")
    assert code == 0
    rows, _ = read_csv(out / "ladder.csv")
    assert [num(r["penalty"]) for r in rows][-1] == 1024.0
    assert all(r["monotone"] == "1" for r in rows)
    report = json.loads((out / "report.json").read_text())
    assert abs(report["Y0"]) < 1e-3 and report["ladder"]["converged"]


def test_ladder_failure_exit_2(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text((CONFIGS / "zero_minus_one_ladder.ini").read_text().replace("stop_tol = 1e-3", "stop_tol = 1e-9"))
    code = main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 2
    assert len(read_csv(tmp_path / "o" / "ladder.csv")[0]) == 11


def test_picard_violation_exit_3(tmp_path, capsys):
    code, _ = run(tmp_path, "solve", "picard_violation.ini")
    assert code == 3
    assert "Picard contraction" in capsys.readouterr().err


def test_unknown_builtin_exit_3(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text((CONFIGS / "zero_minus_one.ini").read_text().replace("preset = zero_minus_one", "phi = wiggle 3"))
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert "wiggle" in capsys.readouterr().err


def test_missing_config_exit_3(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)]) == 3


@pytest.mark.parametrize("command, config", [("solve", "zero_minus_one.ini"), ("solve", "quadratic_mc.ini"), ("price", "put_band.ini")])
def test_byte_identical_reruns(tmp_path, command, config):
    code_a, a = run(tmp_path, command, config, "--seed", "7", sub="a")
    code_b, b = run(tmp_path, command, config, "--seed", "7", sub="b")
    assert code_a == code_b == 0
    names = sorted(os.listdir(a))
    assert names == sorted(os.listdir(b)) and names
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    assert not [n for n in names if n.startswith(".tmp")]


def test_seed_changes_monte_carlo_only(tmp_path):
    _, a = run(tmp_path, "solve", "quadratic_mc.ini", "--seed", "1", sub="a")
    _, b = run(tmp_path, "solve", "quadratic_mc.ini", "--seed", "2", sub="b")
    ra, rb = json.loads((a / "report.json").read_text()), json.loads((b / "report.json").read_text())
    assert ra["Y0"] == rb["Y0"]
    assert ra["monte_carlo"] != rb["monte_carlo"]
    for r in (ra, rb):
        hi = r["monte_carlo"]["sigma_high"]
        assert hi["value"] <= r["Y0"] + 4 * hi["stderr"]


def test_price_degenerate_put(tmp_path):
    code, out = run(tmp_path, "price", "put_degenerate.ini")
    assert code == 0
    (row,), header = read_csv(out / "price.csv")
    assert header[:3] == ["h_up", "method", "steps"]
    assert row["oracle"] == "crr"
    assert abs(num(row["h_up"]) - num(row["oracle_value"])) / num(row["oracle_value"]) < 1e-3


def test_price_call_has_no_boundary(tmp_path):
    code, out = run(tmp_path, "price", "call_r0.ini")
    assert code == 0
    rows, header = read_csv(out / "boundary.csv")
    assert rows == [] and header == ["i", "t", "s_low", "s_high", "x_low", "x_high"]
    (row,), _ = read_csv(out / "price.csv")
    assert row["oracle"] == "bs_sigma_high"


def test_price_put_boundary(tmp_path):
    code, out = run(tmp_path, "price", "put_band.ini")
    assert code == 0
    rows, _ = read_csv(out / "boundary.csv")
    assert len(rows) == 500
    assert all(num(r["s_high"]) < 100.0 for r in rows)


def test_bad_payoff_exit_3(tmp_path):
    assert run(tmp_path, "price", "bad_payoff.ini")[0] == 3


def test_oracle_command(tmp_path):
    code, out = run(tmp_path, "oracle", "put_degenerate.ini")
    assert code == 0
    (row,), _ = read_csv(out / "oracle.csv")
    assert row["kind"] == "crr" and num(row["value"]) == pytest.approx(6.088810110703039, rel=1e-12)


def test_grid_refine(tmp_path):
    code, out = run(tmp_path, "solve", "zero_minus_one.ini", "--grid-refine", "1")
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["grid"]["steps"] == 400 and report["grid"]["nodes"] == 401


def test_validate_fixture_reported(tmp_path, capsys):
    code, out = run(tmp_path, "validate", "validate_fixture.ini")
    assert code == 0
    rows, _ = read_csv(out / "validate.csv")
    status = {r["check"]: r["status"] for r in rows}
    assert status["comparison_reversed"] == "XFAIL"
    assert "XFAIL" in capsys.readouterr().out


def test_validate_empty_exit_3(tmp_path):
    assert run(tmp_path, "validate", "validate_empty.ini")[0] == 3


@pytest.mark.slow
def test_validate_full_corpus(tmp_path):
    code, out = run(tmp_path, "validate", "validate_all.ini")
    assert code == 0
    rows, _ = read_csv(out / "validate.csv")
    assert rows and all(r["status"] == "PASS" for r in rows)
    for r in rows:
        num(r["measured"]), num(r["tol"])


def test_builtins():
    import numpy as np

    x = np.array([-1.0, 0.0, 2.0])
    assert np.allclose(parse_builtin("poly 1 0 2")(x), [3, 1, 9])
    assert np.allclose(parse_builtin("table -1:0 0:1 1:0")(x), [0, 1, 0])
    assert np.allclose(parse_builtin("logput 1")(x), np.maximum(1 - np.exp(x), 0))
    assert np.allclose(parse_builtin("call 0.5")(x), [0, 0, 1.5])
    for bad in ("", "linear 1", "constant a", "table 1:0", "table 1:0 0:1", "spline 1"):
        with pytest.raises(ConfigError):
            parse_builtin(bad)


def test_console_script(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "gbsde.cli", "oracle", "--config", str(CONFIGS / "put_degenerate.ini"), "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0 and "crr=" in proc.stdout
