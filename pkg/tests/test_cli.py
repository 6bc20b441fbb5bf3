import csv
import io
import json
import math
import subprocess
import sys

import pytest

from plaplace_mass.cli import THREADS_ENV, UsageError, load_config, run_command
from plaplace_mass.core import compute_constants, ProblemParams


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = run_command(argv, out, err)
    return code, out.getvalue(), err.getvalue()


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_config_file_parsed(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("# ball\np = 2   # exponent\ndim = 3\nlambda_grid = 0, 1.5\n")
    cfg = load_config(str(f))
    assert cfg.p == 2.0 and cfg.dim == 3 and cfg.lambda_grid == [0.0, 1.5]
    assert load_config(str(f), {"dim": 4}).dim == 4


def test_empty_config_gives_defaults(tmp_path):
    f = tmp_path / "empty.cfg"
    f.write_text("")
    cfg = load_config(str(f))
    assert (cfg.p, cfg.dim, cfg.radius, cfg.lam) == (2.0, 3, 1.0, 1.0)


@pytest.mark.parametrize("text,needle", [
    ("p = 2\ndim = three\n", "line 2"),
    ("p = 2\np = 3\n", "duplicate"),
    ("colour = red\n", "unknown key"),
    ("just words\n", "key = value"),
])
def test_bad_config_is_usage_error(tmp_path, text, needle):
    f = tmp_path / "bad.cfg"
    f.write_text(text)
    with pytest.raises(UsageError, match=needle if needle != "line 2" else ":2:"):
        load_config(str(f))
    code, _, err = run(["constants", "--config", str(f)])
    assert code == 1 and err


def test_type_mismatch_names_key_and_line(tmp_path):
    f = tmp_path / "bad.cfg"
    f.write_text("dim = 3\np = two\n")
    code, _, err = run(["constants", "--config", str(f)])
    assert code == 1
    assert "'p'" in err and ":2:" in err


def test_unknown_command_and_flag():
    assert run(["frobnicate"])[0] == 1
    assert run(["constants", "--bogus", "1"])[0] == 1
    assert run([])[0] == 1


def test_help_exits_zero(capsys):
    assert run_command(["--help"]) == 0
    assert "exit codes" in capsys.readouterr().out


def test_domain_error_exit_code():
    code, _, err = run(["mass", "--p", "2", "--dim", "2"])
    assert code == 2 and "domain" in err
    assert run(["mass", "--lambda", "20"])[0] == 2


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run(["constants", "--out-path", str(blocker)])[0] == 5


def test_constants_csv(tmp_path):
    code, out, _ = run(["constants", "--p", "2", "--dim", "3", "--out-path", str(tmp_path)])
    assert code == 0 and "elapsed" in out
    rows = read_csv(tmp_path / "constants.csv")
    header, values = rows[0], dict(zip(rows[0], map(float, rows[1])))
    assert header[0] == "p"
    c = compute_constants(ProblemParams(2, 3))
    assert values["C0"] == pytest.approx(1 / (4 * math.pi), rel=1e-15)
    assert values["S0"] == c.S0
    doc = json.loads((tmp_path / "constants.json").read_text())
    assert doc["config"]["p"] == 2.0 and "out_path" not in doc["config"]
    assert "S0" in doc["provenance"]


def test_mass_curve_csv_sorted(tmp_path):
    code, _, _ = run(["mass-curve", "--lambda-grid", "2,0,1", "--out-path", str(tmp_path)])
    assert code == 0
    raw = (tmp_path / "mass-curve.csv").read_bytes()
    assert b"\r" not in raw
    rows = read_csv(tmp_path / "mass-curve.csv")
    assert rows[0] == ["lambda", "mass"]
    lams = [float(r[0]) for r in rows[1:]]
    assert lams == [0.0, 1.0, 2.0]
    assert float(rows[3][1]) == pytest.approx(-0.0177672, abs=1e-7)


def test_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["mass-curve", "--lambda-grid", "0,1", "--out-path", str(d)])[0] == 0
    for name in ("mass-curve.csv", "mass-curve.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_thread_count_does_not_change_results(tmp_path, monkeypatch):
    outs = []
    for n in ("1", "2"):
        monkeypatch.setenv(THREADS_ENV, n)
        d = tmp_path / n
        assert run(["mass-curve", "--lambda-grid", "0,1,2", "--out-path", str(d)])[0] == 0
        outs.append((d / "mass-curve.csv").read_bytes())
    assert outs[0] == outs[1]


@pytest.mark.parametrize("bad", ["0", "-3", "many"])
def test_thread_count_validated(monkeypatch, bad):
    monkeypatch.setenv(THREADS_ENV, bad)
    assert run(["mass-curve", "--lambda-grid", "0,1"])[0] == 1


def test_lambda_star_stdout():
    code, out, _ = run(["lambda-star"])
    assert code == 0 and "2.4674" in out


def test_eigen_value(tmp_path):
    assert run(["eigen", "--out-path", str(tmp_path)])[0] == 0
    rows = read_csv(tmp_path / "eigen.csv")
    assert float(rows[1][rows[0].index("lambda1")]) == pytest.approx(math.pi**2, rel=1e-6)


def test_ground_state_nonexistent_exit_zero():
    code, out, _ = run(["ground-state", "--lambda", "2"])
    assert code == 0 and "nonexistent" in out


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "plaplace_mass", "constants"],
                          capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0 and "S0" in proc.stdout
