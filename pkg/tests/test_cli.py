import subprocess
import sys

import pytest

from multifair import __version__
from multifair.cli import main

TINY = """
name = "tiny"
policies = ["drf", "pf"]
loads = [0.4]
replications = 2
horizon_jobs = 200

[[classes]]
share = 0.5
demand = [1.0, 0.2]

[[classes]]
share = 0.5
demand = [0.2, 1.0]
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY)
    return path


def criteria(tmp_path, text):
    path = tmp_path / "criteria.toml"
    path.write_text(text)
    return str(path)


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "multifair", "list-scenarios"],
                         capture_output=True, text=True, check=True).stdout
    assert "fig6erlang" in out and "fig4" in out
    out = subprocess.run([sys.executable, "-m", "multifair", "--version"],
                         capture_output=True, text=True, check=True).stdout
    assert __version__ in out


def test_run_writes_identical_csv_for_same_seed(config, tmp_path, capsys):
    a, b = tmp_path / "a" / "out.csv", tmp_path / "b.csv"
    assert main(["run", str(config), "--out", str(a), "--seed", "9", "--quiet"]) == 0
    assert main(["run", str(config), "--out", str(b), "--seed", "9", "--quiet"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert "# seed: 9" in a.read_text()


def test_dump_config_then_run(tmp_path, capsys):
    path = tmp_path / "fig1a.toml"
    assert main(["dump-config", "fig1a", "--out", str(path)]) == 0
    assert 'name = "fig1a"' in path.read_text()
    assert main(["dump-config", "fig4"]) == 0
    assert "betas" in capsys.readouterr().out


def test_invalid_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text(TINY.replace("share = 0.5\ndemand = [0.2", "share = 0.2\ndemand = [0.2"))
    assert main(["run", str(bad), "--out", str(tmp_path / "x.csv")]) == 1
    assert "shares sum" in capsys.readouterr().err
    assert main(["run", "nope", "--out", str(tmp_path / "x.csv")]) == 1


def test_verify_passing_criteria(config, tmp_path, capsys):
    path = criteria(tmp_path, "[criteria.counterexamples]\n")
    assert main(["verify", str(config), "--criteria", path]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS [4]") == 6 and "6/6 checks passed" in out


def test_verify_flags_tampered_tolerance(config, tmp_path, capsys):
    path = criteria(tmp_path, "[criteria.counterexamples]\nmin_gap = 10.0\n")
    assert main(["verify", str(config), "--criteria", path]) == 2
    assert "FAIL [4] alpha=2-shares-unequal" in capsys.readouterr().out


@pytest.mark.parametrize("text, fragment", [
    ("[criteria.no-such-thing]\n", "no-such-thing"),
    ("[criteria.counterexamples]\nwidth = 3\n", "width"),
    ("colour = 1\n", "colour"),
    ("[criteria\n", "criteria.toml"),
])
def test_verify_rejects_bad_criteria_files(config, tmp_path, capsys, text, fragment):
    assert main(["verify", str(config), "--criteria", criteria(tmp_path, text)]) == 1
    assert fragment in capsys.readouterr().err


def test_verify_checks_results_file(config, tmp_path, capsys):
    crit = criteria(tmp_path, "[criteria.counterexamples]\n")
    missing = tmp_path / "none.csv"
    assert main(["verify", str(config), "--criteria", crit, "--results", str(missing)]) == 1
    assert "missing scenario output" in capsys.readouterr().err

    out = tmp_path / "out.csv"
    main(["run", str(config), "--out", str(out), "--quiet"])
    assert main(["verify", str(config), "--criteria", crit, "--results", str(out)]) == 0
    assert "PASS [0] tiny-rows-complete" in capsys.readouterr().out

    # dropping a data row makes the results incomplete
    lines = out.read_text().splitlines(keepends=True)
    out.write_text("".join(lines[:-1]))
    assert main(["verify", str(config), "--criteria", crit, "--results", str(out)]) == 2
    assert "FAIL [0] tiny-rows-complete" in capsys.readouterr().out


def test_list_criteria(capsys):
    assert main(["list-criteria"]) == 0
    out = capsys.readouterr().out
    assert all(f"{n:2d} " in out for n in range(1, 11))
