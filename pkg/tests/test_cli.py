import csv
import io
import subprocess
import sys

import pytest

from quenchlab import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_quench_landmarks(capsys, tmp_path):
    code, out, _ = run(capsys, "quench", "--engine", "ff", "--N", "48", "--h", "0.5",
                       "--out", str(tmp_path), "--no-plots")
    assert code == 0
    rows = {r["quantity"]: float(r["value"]) for r in table(out)}
    assert rows["valid_to"] == pytest.approx(12.0)
    assert rows["v_q"] == pytest.approx(1.0)
    assert rows["t_star"] == pytest.approx(5.0)
    assert rows["tau_s"] == pytest.approx(24.0)
    assert list(tmp_path.glob("*/series/N48_h0.5.csv"))


def test_quench_ed_open(capsys, tmp_path):
    code, out, _ = run(capsys, "quench", "--engine", "ed", "--N", "8", "--h", "1.5", "--delta", "-1",
                       "--boundary", "open", "--t-max", "1", "--out", str(tmp_path), "--no-plots")
    assert code == 0


@pytest.mark.parametrize("argv", [
    ["quench", "--engine", "ff", "--delta", "-1"],
    ["quench", "--bogus"],
    ["rates", "--h-grid", "spiral 0 1 3"],
    ["scaling"],
    ["op", "--series-dir", "/nonexistent", "--t-L", "2"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(capsys, tmp_path, argv):
    with pytest.raises(SystemExit) as exc:
        sys.exit(cli.main(argv + ["--out", str(tmp_path)] if argv[0] != "frobnicate" else argv))
    assert exc.value.code == 2


def test_rates_scaling_op_chain(capsys, tmp_path):
    code, out, err = run(capsys, "rates", "--N", "24", "--h-grid", "hn-log 0.05 0.4 6",
                         "--kappa", "1", "--out", str(tmp_path), "--sweep-id", "r", "--no-plots")
    assert code == 0, err
    rows = table(out)
    assert len(rows) == 7 and {r["model_id"] for r in rows} == {"exp"}
    code, out, err = run(capsys, "scaling", "--rates-file", str(tmp_path / "r" / "summary.csv"),
                         "--window", "0.05", "0.4")
    assert code == 0, err
    assert 0 < float(table(out)[0]["beta"]) < 3
    code, out, err = run(capsys, "op", "--series-dir", str(tmp_path / "r" / "series"),
                         "--kappa", "1", "--t-L", "2.0", "--alpha", "4", "--window", "0.05", "0.4")
    assert code == 0, err
    ops = table(out)
    assert {r["cutoff"] for r in ops} == {"fixed", "parametric"}
    assert all(float(r["op"]) > 0 for r in ops)
    assert "beta" in err


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("engine = freefermion\nN = 16\nh = 0.3\nh = 0.4\nkappa = 1\nplots = false\n")
    code, out, _ = run(capsys, "rates", "--config", str(cfg), "--out", str(tmp_path))
    assert code == 0 and len(table(out)) == 2
    code, out, _ = run(capsys, "rates", "--config", str(cfg), "--h", "0.6", "--out", str(tmp_path))
    assert [float(r["h"]) for r in table(out)] == [0.6]


def test_bad_config_key(capsys, tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("colour = red\n")
    code, _, err = run(capsys, "rates", "--config", str(cfg))
    assert code == 2 and "unknown key" in err


def test_gsqpt_and_otoc_small(capsys, tmp_path):
    code, out, _ = run(capsys, "gsqpt", "--N-list", "6", "8", "--h-grid", "lin 2 3 3",
                       "--out", str(tmp_path), "--no-plots")
    assert code == 0 and len(table(out)) == 6
    code, out, _ = run(capsys, "otoc", "--N", "6", "--dt", "0.2", "--out", str(tmp_path),
                       "--no-plots")
    assert code == 0
    assert float(table(out)[0]["F_mean"]) > 0


def test_nonint_small(capsys, tmp_path):
    code, out, err = run(capsys, "nonint", "--N", "8", "--h", "1.5", "--dt", "0.1",
                         "--out", str(tmp_path), "--no-plots", "--workers", "1")
    assert code == 0, err
    row = table(out)[0]
    assert row["region"] in ("dynamically_ordered", "crossover", "dynamically_disordered")


def test_help_lists_config_keys():
    out = subprocess.run([sys.executable, "-m", "quenchlab", "rates", "--help"],
                         capture_output=True, text=True, check=True).stdout
    assert "[config key: kappa]" in out
