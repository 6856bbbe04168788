import csv
import subprocess
import sys

import pytest

from securetime.analysis import RunReport
from securetime.cli import main, parse_matrix
from securetime.clock import ConfigError

SCN = """
name = cli-honest
delta_min = 0
delta_max = 1ms
rho_max = 50ppm
scheme = test
initial_offset = 1ms
sync_interval = 1s
horizon = 30s
seed = 2
"""


def test_bounds_examples(capsys):
    assert main(["bounds", "--dmin", "0", "--dmax", "5ms", "--rho", "100ppm"]) == 0
    assert capsys.readouterr().out.strip() == "eps_m=10ms eps_1=15ms eps_2=20.001ms"
    assert main(["bounds", "--dmin", "1ms", "--dmax", "1ms", "--rho", "50ppm"]) == 0
    assert capsys.readouterr().out.strip() == "eps_m=0 eps_1=0 eps_2=100ns"


@pytest.mark.parametrize("argv", [
    ["bounds", "--dmin", "2ms", "--dmax", "1ms", "--rho", "50ppm"],
    ["bounds", "--dmin", "0", "--dmax", "1ms", "--rho", "0ppm"],
    ["bounds", "--dmin", "zero", "--dmax", "1ms", "--rho", "50ppm"],
    ["run-scenario", "/nonexistent/file.scn"],
])
def test_config_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "securetime: error:" in capsys.readouterr().err


def test_run_scenario_writes_artifacts(tmp_path, capsys):
    path = tmp_path / "s.scn"
    path.write_text(SCN)
    out = tmp_path / "out"
    assert main(["run-scenario", str(path), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert text.startswith("--- report ---\n") and text.rstrip().endswith("--- end ---")
    assert "verdict=pass" in text and "scenario=cli-honest" in text
    for name in ("trace.csv", "report.txt", "offsets.png"):
        assert (out / name).stat().st_size > 0
    assert (out / "report.txt").read_text() == text
    rep = RunReport.from_text(text)
    assert rep.forged_accepted == 0 and rep.alarms == 0


def test_run_scenario_failing_verdict_exits_1(tmp_path, capsys):
    # A nonce space of 2 lets the pre-play flood win, which the checker must flag.
    path = tmp_path / "bad.scn"
    path.write_text(SCN + "mode = 2-step\nnonce_space = 2\nrotation_threshold = 4\n"
                    "adversary = preplay-flood\nadversary.k = 2\nadversary.nonce_space = 2\n")
    assert main(["run-scenario", str(path), "--out", str(tmp_path / "o"), "--no-plot"]) == 1
    out = capsys.readouterr().out
    assert "FAIL no-forgery" in out and "verdict=fail" in out


def test_seed_flag_and_env(tmp_path, capsys, monkeypatch):
    path = tmp_path / "s.scn"
    path.write_text(SCN)

    def digest(*extra):
        main(["run-scenario", str(path), "--out", str(tmp_path / "o"), "--no-plot", *extra])
        out = capsys.readouterr().out
        return [ln for ln in out.splitlines() if ln.startswith(("seed=", "trace_sha256="))]

    base = digest()
    assert base[0] == "seed=2"
    monkeypatch.setenv("SECURETIME_SEED", "7")
    env = digest()
    assert env[0] == "seed=7" and env[1] != base[1]
    assert digest("--seed", "2") == base
    monkeypatch.setenv("SECURETIME_SEED", "x")
    assert main(["run-scenario", str(path), "--out", str(tmp_path / "o"), "--no-plot"]) == 2


MATRIX = SCN.replace("name = cli-honest\n", "") + """
point b delta_max=2ms
point a delta_max=500us rho_max=20ppm
"""


def test_parse_matrix_overrides():
    scs = parse_matrix(MATRIX)
    assert [s.name for s in scs] == ["b", "a"]
    assert scs[0].net.delta_max == 2_000_000 and scs[1].net.delta_max == 500_000
    with pytest.raises(ConfigError, match="no 'point'"):
        parse_matrix(SCN)
    with pytest.raises(ConfigError, match="duplicate"):
        parse_matrix(SCN + "point a\npoint a\n")


def test_grid_writes_sorted_summary(tmp_path, capsys):
    m = tmp_path / "g.matrix"
    m.write_text(MATRIX)
    out = tmp_path / "grid"
    assert main(["grid", str(m), "--out-dir", str(out), "--jobs", "2"]) == 0
    rows = list(csv.DictReader(open(out / "summary.csv")))
    assert [r["name"] for r in rows] == ["a", "b"]
    assert rows[0]["eps_1"] == str(3 * 500_000) and all(r["verdict"] == "pass" for r in rows)
    assert (out / "summary.png").stat().st_size > 0
    assert "points=2 failed=0" in capsys.readouterr().out


def test_bench_crypto(capsys):
    assert main(["bench-crypto", "--scheme", "ed25519", "--iters", "20"]) == 0
    lines = dict(ln.split("=", 1) for ln in capsys.readouterr().out.splitlines() if "=" in ln)
    assert lines["scheme"] == "ed25519" and lines["reference_us"] == "75"
    assert float(lines["sign_verify_median_us"]) > 0


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "securetime", "bounds", "--dmin", "1ms", "--dmax", "3ms",
                        "--rho", "50ppm"], capture_output=True, text=True, check=True)
    assert r.stdout.strip() == "eps_m=4ms eps_1=6ms eps_2=8.0003ms"
