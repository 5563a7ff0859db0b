import json

import pytest

from bernoulli_dirac import io
from bernoulli_dirac.cli import main, run_cli


def _csv_rows(text):
    lines = [x for x in text.splitlines() if x and not x.startswith("#")]
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


def test_lyapunov_at_critical_energy(capsys):
    code = run_cli(["lyapunov", "--m", "0", "--c", "1", "--V", "0.5", "--E", "0.5",
                    "--steps", "1e6", "--realizations", "16", "--seed", "7"])
    assert code == 0
    out = capsys.readouterr().out
    assert "# seed: 7" in out
    (row,) = _csv_rows(out)
    gamma, stderr = float(row["gamma"]), float(row["stderr"])
    assert abs(gamma) < max(0.01, 3 * stderr)
    assert row["realizations"] == "16" and row["steps"] == "1000000"


def test_unknown_flag_is_usage_error(capsys):
    assert main(["lyapunov", "--E", "0", "--bogus", "1"]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_command_is_usage_error(capsys):
    assert main([]) == 2


def test_bad_parameter_is_usage_error(capsys):
    assert main(["lyapunov", "--E", "0", "--c", "-1", "--steps", "2000"]) == 2
    assert "error" in capsys.readouterr().err


def test_config_merges_and_flags_win(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"E": [0.1, 0.2], "steps": 2000, "realizations": 2, "seed": 4}))
    assert main(["lyapunov", "--config", str(cfg), "--seed", "9"]) == 0
    out = capsys.readouterr().out
    rows = _csv_rows(out)
    assert [r["E"] for r in rows] == ["0.10000000000000001", "0.20000000000000001"]
    assert all(r["seed"] == "9" and r["steps"] == "2000" for r in rows)


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"nope": 1}))
    assert main(["lyapunov", "--E", "0", "--config", str(cfg)]) == 2


def test_output_directory_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(io.OUTPUT_ENV, str(tmp_path))
    assert main(["lyapunov", "--E", "0", "0.3", "--steps", "2000", "--realizations", "2",
                 "--plot-data"]) == 0
    prov, cols, rows = io.read_csv(tmp_path / "lyapunov.csv")
    assert cols == list(io.LYAPUNOV_COLUMNS) and len(rows) == 2 and prov["steps"] == "2000"
    assert len((tmp_path / "lyapunov.dat").read_text().splitlines()) == len(prov) + 2


def test_out_flag_overrides_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(io.OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["moments", "--t-max", "5", "--points", "11", "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "moments.csv").exists()
    assert not (tmp_path / "env").exists()


def test_classify(capsys):
    assert main(["classify", "--E", "0", "--V", "1.4142135623730951"]) == 0
    out = capsys.readouterr().out
    assert "ZeroLyapunov (CriticalPair)" in out and "site +V: elliptic" in out


@pytest.mark.parametrize("argv", [
    ["spectrum", "--L", "40", "--m", "1", "--V", "1"],
    ["greens", "--L", "20", "--z", "0.5+1j"],
    ["evolve", "--t", "3"],
    ["laplace", "--N", "16", "--T", "1", "2"],
    ["nonrel-limit", "--N", "10", "--m", "1", "--V", "1"],
    ["compare-mass", "--m", "0.01", "--T", "2", "4"],
    ["wegner", "--L", "4", "20", "--realizations", "50", "--m", "1", "--V", "1"],
    ["critical-window", "--N", "200"],
])
def test_subcommands_run(argv, capsys):
    assert main(argv) == 0
    assert capsys.readouterr().out.strip()


def test_spectrum_too_small_box(capsys):
    assert main(["spectrum", "--L", "4"]) == 2


def test_nonrel_preset_prints_table(capsys):
    assert main(["check:theorem-2.1"]) == 0
    out = capsys.readouterr().out
    for c in ("8", "16", "32", "64"):
        assert f"c={c}" in out
    assert "PASS nonrelativistic limit" in out and "ratios=" in out
