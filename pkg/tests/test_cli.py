import csv
import json
import os

import pytest

from wqed import cli
from wqed.errors import ConvergenceError


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen") / "run"
    assert cli.main(["generate", "--out", str(out)]) == 0
    return out


def test_generate_outputs(generated):
    names = set(os.listdir(generated))
    assert {"trace.csv", "summary.csv", "plot.svg", "manifest.json"} <= names
    rows = read_csv(generated / "summary.csv")
    assert float(rows[0]["peak_concurrence"]) == pytest.approx(0.27, abs=0.02)
    with open(generated / "trace.csv", newline="") as fh:
        header = fh.readline().strip().split(",")
    assert header == list(cli.TRACE_COLUMNS)


def test_csv_format_is_fixed(generated):
    raw = (generated / "trace.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    row = raw.decode().splitlines()[5].split(",")
    digits = row[2].lstrip("-").replace(".", "").split("e")[0].lstrip("0")
    assert len(digits) <= 17 and "." in row[2]


def test_manifest_digests(generated):
    man = json.loads((generated / "manifest.json").read_text())
    for name, digest in man["files"].items():
        assert cli.sha256(generated / name) == digest
    assert "config" in man and "numpy" in man["environment"]


def test_rerun_from_manifest_is_byte_identical(generated, tmp_path, capsys):
    out = tmp_path / "again"
    code, _, _ = run(["generate", "--config", str(generated / "manifest.json"), "--out", str(out)], capsys)
    assert code == 0
    for name in ("trace.csv", "summary.csv"):
        assert (out / name).read_bytes() == (generated / name).read_bytes()


def test_negative_gamma_is_config_error(tmp_path, capsys):
    cfg = write(tmp_path, "bad.ini", "[physical]\ngamma = -0.01\n")
    code, _, err = run(["generate", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
    assert code == cli.EXIT_CONFIG
    assert "physical.gamma" in err


@pytest.mark.parametrize("text", ["[wavguide]\ngamma = 0.01\n", "[run]\nn_times = many\n",
                                  "[run]\nengine = quantum\n", "[manipulation]\ndelta = 5, -1\n"])
def test_malformed_configs(tmp_path, capsys, text):
    cfg = write(tmp_path, "bad.ini", text)
    code, _, err = run(["manipulate", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
    assert code == cli.EXIT_CONFIG and err.startswith("config error")


def test_missing_config(tmp_path, capsys):
    code, _, _ = run(["generate", "--config", str(tmp_path / "nope.ini")], capsys)
    assert code == cli.EXIT_CONFIG


def test_detect_ratio(tmp_path, capsys):
    cfg = write(tmp_path, "det.ini", "[detection]\ngamma_over_mu = 0.5\n")
    code, _, _ = run(["detect", "--config", cfg, "--xi", "1", "--xi", "0", "--out", str(tmp_path / "d")],
                     capsys)
    assert code == 0
    rows = read_csv(tmp_path / "d" / "summary.csv")
    one = [r for r in rows if float(r["xi_re"]) == 1.0][0]
    assert float(one["p_rr_over_p0"]) == pytest.approx(2.0, abs=1e-3)


def test_engine_mismatch_exit(tmp_path, capsys):
    # a starved oracle (narrow window, no wings) cannot follow the decay
    cfg = write(tmp_path, "o.ini", "[run]\noracle_half_width = 0.5\noracle_wing = 0\n"
                                   "n_times = 51\noracle_times = 51\n")
    code, _, err = run(["generate", "--config", cfg, "--check-oracle", "--out", str(tmp_path / "o")],
                       capsys)
    assert code == cli.EXIT_MISMATCH and "engine mismatch" in err


def test_check_oracle_passes_with_defaults(tmp_path, capsys):
    cfg = write(tmp_path, "o.ini", "[run]\nn_times = 51\noracle_times = 51\n")
    code, out, _ = run(["generate", "--config", cfg, "--check-oracle", "--out", str(tmp_path / "o")],
                       capsys)
    assert code == 0 and "MISMATCH" not in out
    assert os.path.exists(tmp_path / "o" / "deviations.csv")


def test_convergence_exit(tmp_path, capsys, monkeypatch):
    def boom(cfg):
        raise ConvergenceError("P_RR not converged")

    monkeypatch.setattr(cli, "run_scenario", boom)
    code, _, err = run(["generate", "--out", str(tmp_path / "o")], capsys)
    assert code == cli.EXIT_CONVERGENCE and "convergence" in err


def test_check_defaults_pass(capsys):
    code, out, _ = run(["check"], capsys)
    assert code == 0
    assert "FAIL" not in out and "jump:phi_jump" in out


def test_check_negative_control(capsys):
    code, out, _ = run(["check", "--break-bound-term"], capsys)
    assert code == cli.EXIT_CHECK
    assert "FAIL" in out


def test_check_coarse_grid_warns(capsys):
    code, out, _ = run(["check", "--grid", "64"], capsys)
    assert "warning: grid 64 not converged" in out
    assert code == cli.EXIT_CHECK


def test_parse_complex():
    assert cli.parse_complex("i") == 1j
    assert cli.parse_complex("0.5-2i") == 0.5 - 2j
    with pytest.raises(cli.ConfigError):
        cli.parse_complex("x")


def test_fmt():
    assert cli.fmt(0.1) == "0.10000000000000001"
    assert cli.fmt(3) == "3" and cli.fmt(True) == "1" and cli.fmt(0.0) == "0"
