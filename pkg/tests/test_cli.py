import csv
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from fairshaper.cli import _parse_sweep, main

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    return lines[0], list(csv.DictReader(lines[1:]))


def test_model_sweep(tmp_path):
    out = tmp_path / "model.csv"
    assert main(["model", "--p", "0.3", "--tau", "10", "--g-from", "4", "--g-to", "6", "-o", str(out)]) == 0
    comment, rows = read_csv(out)
    assert comment == f"# fairshaper model --p 0.3 --tau 10 --g-from 4 --g-to 6 -o {out}"
    assert [r["g"] for r in rows] == ["4", "5", "6"]
    assert float(rows[1]["eq_end_green"]) == pytest.approx(0.175)


def test_model_unstable_point_fails(capsys):
    assert main(["model", "--p", "0.3", "--g", "25", "--tau", "100"]) == 2
    assert "StabilityError" in capsys.readouterr().err


def test_model_skip_unstable(tmp_path):
    out = tmp_path / "m.csv"
    argv = ["model", "--p", "0.3", "--tau", "100", "--g-from", "29", "--g-to", "31", "--skip-unstable", "-o", str(out)]
    assert main(argv) == 0
    _, rows = read_csv(out)
    assert [r["stable_flag"] for r in rows] == ["0", "0", "1"]
    assert rows[0]["mean_wait"] == ""


@pytest.mark.parametrize("argv", [
    ["bogus"],
    ["model", "--p", "0.3"],
    ["model", "--p", "0.3", "--tau", "10"],
    ["model", "--p", "0.3", "--tau", "10", "--g-from", "6", "--g-to", "4"],
    ["allocate", "--scenario", "missing.cfg"],
    ["allocate", "--scenario", str(SCENARIOS / "example1.cfg"), "--sweep", "psi1=1:2"],
    ["allocate", "--scenario", str(SCENARIOS / "example1.cfg"), "--sweep", "sigma3=1:2"],
    ["trace", "--input", "missing.csv"],
])
def test_usage_errors(argv):
    assert main(argv) == 1


def test_domain_error_exit_code():
    assert main(["simulate", "--p", "0.3", "--tau", "10", "--g", "11"]) == 2


def test_infeasible_exit_code(tmp_path):
    cfg = tmp_path / "tight.cfg"
    cfg.write_text("1 0.01 1 yes\n2 0.01 1 yes\n")
    assert main(["allocate", "--scenario", str(cfg)]) == 3


def test_parse_sweep():
    assert _parse_sweep("sigma1=5:7") == (0, [5.0, 6.0, 7.0])
    assert _parse_sweep("sigma2=1:2:0.5") == (1, [1.0, 1.5, 2.0])


def test_simulate_is_byte_identical(tmp_path):
    argv = ["simulate", "--p", "0.3", "--tau", "100", "--g-from", "31", "--g-to", "40", "--cycles", "300"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(argv + ["-o", str(a)]) == 0
    assert main(argv + ["-o", str(b), "--workers", "2"]) == 0
    rows_a = a.read_text().splitlines()[1:]
    rows_b = b.read_text().splitlines()[1:]
    assert rows_a == rows_b
    header = rows_a[0].split(",")
    assert header == ["p", "g", "tau", "n_cycles", "seed", "mean_wait", "eq_end_green", "dummy_fraction",
                      "stable_flag", "miller_wait", "miller_eq"]
    assert len(rows_a) == 11


def test_same_argv_same_bytes(tmp_path):
    argv = ["simulate", "--g", "40", "--cycles", "200", "--seed", "4", "-o", str(tmp_path / "x.csv")]
    main(argv)
    first = (tmp_path / "x.csv").read_bytes()
    main(argv)
    assert (tmp_path / "x.csv").read_bytes() == first


def test_allocate_sweep(tmp_path):
    out = tmp_path / "alloc.csv"
    argv = ["allocate", "--scenario", str(SCENARIOS / "example1.cfg"),
            "--scenario", str(SCENARIOS / "example2.cfg"), "--sweep", "sigma1=5:15:5", "-o", str(out)]
    assert main(argv) == 0
    _, rows = read_csv(out)
    assert len(rows) == 12
    assert rows[0]["scenario"] == "example1:sigma1=5"
    assert all(r["feasible"] == "1" for r in rows)
    mixed_public = [r for r in rows if r["scenario"].startswith("example2") and r["flow"] == "2"]
    assert all(float(r["d_star"]) == 0 and r["w_f"] == "" for r in mixed_public)


def test_convexity_points(tmp_path, capsys):
    out = tmp_path / "cvx.csv"
    assert main(["convexity", "--point", "0.5", "0.9", "--point", "0.1", "0.5", "-o", str(out)]) == 0
    _, rows = read_csv(out)
    assert float(rows[0]["min_eig"]) < 0 < float(rows[1]["min_eig"])
    assert "indefinite_fraction=0.5000" in capsys.readouterr().err


def test_trace_synthetic(tmp_path):
    out, mat = tmp_path / "t.csv", tmp_path / "m.csv"
    argv = ["trace", "--synthetic", "3", "--duration", "3", "-o", str(out), "--matrix", str(mat)]
    assert main(argv) == 0
    _, rows = read_csv(out)
    assert [r["variant"] for r in rows] == ["unmodified", "slotted", "shaped"]
    assert float(rows[2]["mean_distance"]) == 0
    _, pairs = read_csv(mat)
    assert len(pairs) == 9


def test_trace_from_files(tmp_path):
    for name, times in (("a", "0.01\n0.2\n0.5\n"), ("b", "0.3\n0.31\n")):
        (tmp_path / f"{name}.csv").write_text(times)
    out = tmp_path / "t.csv"
    argv = ["trace", "--input", str(tmp_path / "a.csv"), str(tmp_path / "b.csv"), "-o", str(out)]
    assert main(argv) == 0


@pytest.mark.skipif(shutil.which("fairshaper") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["fairshaper", "model", "--p", "0.3", "--g", "5", "--tau", "10"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("# fairshaper model")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fairshaper.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "simulate" in proc.stdout
