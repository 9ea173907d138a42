import io
import json
import subprocess
import sys

import numpy as np
import pytest

from tcfou import __version__
from tcfou.cli import SCHEMA, RunConfig, parse_grid, read_config_file, run
from tcfou.errors import ValidationError
from tcfou.fou_analytic import FouParams, variance, variance_limit


def _run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def _table(text):
    lines = text.strip().splitlines()
    return lines[0].split(","), np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])


# grids and config files ----------------------------------------------------------

def test_parse_grid_forms():
    assert parse_grid("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert parse_grid("0.5,1,2") == [0.5, 1.0, 2.0]
    assert parse_grid("3") == [3.0]
    assert parse_grid("0:1:5", count=True) == [0.0, 0.25, 0.5, 0.75, 1.0]
    for bad in ("1:0:0.1", "0:1", "a,b", "0:1:0", "nan"):
        with pytest.raises(ValidationError):
            parse_grid(bad)


def test_read_config_file(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# comment\nhurst = 0.8\n--t = 0:1:0.5  # trailing\n")
    assert read_config_file(str(f)) == {"hurst": "0.8", "t": "0:1:0.5"}
    f.write_text("no equals sign\n")
    with pytest.raises(ValidationError):
        read_config_file(str(f))


# subcommands ---------------------------------------------------------------------

def test_variance_output():
    code, out, _ = _run("variance", "--t", "0:2:0.5")
    assert code == 0
    cols, data = _table(out)
    assert cols == ["t", "V", "Vprime"]
    assert np.array_equal(data[:, 0], [0, 0.5, 1, 1.5, 2])
    assert np.allclose(data[:, 1], variance(FouParams(0.75, 1.0), data[:, 0]), rtol=1e-15, atol=0)
    assert data[0, 2] == 0.0 and np.all(data[1:, 2] > 0)


def test_moments_bound_is_stationary_moment():
    code, out, _ = _run("moments", "--n", "2", "--t", "1,10")
    assert code == 0
    _, data = _table(out)
    assert np.allclose(data[:, 2], 3 * variance_limit(FouParams(0.75, 1.0)) ** 2, rtol=1e-15)
    assert np.all(data[:, 1] <= data[:, 2])


def test_density_laplace_rejects_origin():
    code, out, err = _run("density", "--method", "laplace", "--x", "-1,0,1")
    assert code == 2 and out == ""
    msg = json.loads(err)
    assert msg["exit_code"] == 2 and "x = 0" in msg["message"]


def test_density_methods_agree():
    outs = [_table(_run("density", "--method", m, "--x", "-1,0.5,2")[1])[1] for m in ("mixture", "laplace")]
    assert np.allclose(outs[0][:, 1], outs[1][:, 1], rtol=1e-7)


def test_fe_command():
    code, out, _ = _run("fe", "--model", "stable:0.5", "--t", "1", "--y", "0.5,1")
    assert code == 0
    _, data = _table(out)
    assert np.allclose(data[:, 1], np.exp(-data[:, 0] ** 2 / 4) / np.sqrt(np.pi), rtol=1e-12)


def test_invalid_input_is_reported_as_json():
    for argv in (("variance", "--hurst", "0.4"), ("moments", "--model", "levy:1"), ("bogus",), ()):
        code, _, err = _run(*argv)
        assert code == 2
        msg = json.loads(err)
        assert set(msg) == {"error", "message", "exit_code"}


def test_verify_fp_passes_and_fails_by_tolerance():
    code, out, _ = _run("verify-fp", "--lambda", "0.5,2", "--x", "-1,1")
    assert code == 0
    assert out.splitlines()[0].split(",")[0] == "form"
    code, _, _ = _run("verify-fp", "--lambda", "1", "--x", "1", "--mild-tol", "1e-30")
    assert code == 1
    assert _run("verify-fp", "--x", "0,1")[0] == 2


# reproducibility and sidecars ----------------------------------------------------

SIM = ("simulate", "--paths", "300", "--dt", "0.0625", "--t", "0.5,1", "--seed", "7", "--fine-factor", "4")


def test_simulation_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert _run(*SIM, "--out", str(a))[0] == 0
    assert _run(*SIM, "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert _run(*SIM[:-4], "--seed", "8", "--fine-factor", "4", "--out", str(b))[0] == 0
    assert a.read_bytes() != b.read_bytes()


def test_sidecar_round_trip(tmp_path):
    out = tmp_path / "m.csv"
    assert _run(*SIM, "--out", str(out))[0] == 0
    side = json.loads((tmp_path / "m.csv.json").read_text())
    assert side["schema"] == SCHEMA and side["version"] == __version__ and side["seed"] == 7
    cfg = RunConfig.from_dict(side["config"])
    assert cfg.subcommand == "simulate" and cfg.mc["paths"] == 300 and cfg.grids["t"] == [0.5, 1.0]
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    assert len(side["summary"]["estimates"]) == 2


def test_config_file_matches_flags(tmp_path):
    f = tmp_path / "v.cfg"
    f.write_text("hurst = 0.8\ntheta = 2\nt = 0:1:0.25\n")
    by_file = _run("variance", "--config", str(f))[1]
    by_flags = _run("variance", "--hurst", "0.8", "--theta", "2", "--t", "0:1:0.25")[1]
    assert by_file == by_flags
    f.write_text("paths = 3\n")
    assert _run("variance", "--config", str(f))[0] == 2


def test_negative_grid_values_bind_to_their_flag():
    code, out, _ = _run("density", "--x", "-2:2:1")
    assert code == 0
    _, data = _table(out)
    assert np.array_equal(data[:, 0], [-2, -1, 0, 1, 2])
    assert np.allclose(data[:, 1], data[::-1, 1], rtol=1e-15)


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "tcfou.cli", "variance", "--t", "1"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("t,V,Vprime")


@pytest.mark.slow
def test_check_quick_exit_code(tmp_path):
    out = tmp_path / "check.json"
    code, text, _ = _run("check", "--quick", "--out", str(out))
    assert code == 0, text
    res = json.loads(out.read_text())["results"]
    assert len(res) == 10
    assert text.strip().splitlines()[-1].startswith("PASS")
