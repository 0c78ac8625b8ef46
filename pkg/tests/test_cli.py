import json
import math

import pytest

from pwlab.cli import main
from pwlab.config import validate_config
from pwlab.errors import ConfigError
from pwlab.grid import read_fields


def write_cfg(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def base_cfg(**over):
    doc = {
        "dimension": 1,
        "grid": [64],
        "T": 0.5,
        "system": {"kind": "preset", "name": "strict", "coupling": 1.0},
        "params": {},
    }
    doc.update(over)
    return doc


# ---------------------------------------------------------------------------
# config validation
# ---------------------------------------------------------------------------

def test_validate_config_defaults():
    cfg = validate_config(base_cfg())
    assert cfg["seed"] == 0xC0FFEE


def test_validate_config_rejects_bad_docs():
    with pytest.raises(ConfigError):
        validate_config({"dimension": 3, "grid": [64, 64, 64],
                         "system": {"kind": "preset", "name": "strict"}})
    with pytest.raises(ConfigError):
        validate_config(base_cfg(system={"kind": "nope"}))
    with pytest.raises(ConfigError):
        validate_config(base_cfg(grid=[64, 64]))


def test_exit_code_2_on_bad_config(tmp_path):
    path = write_cfg(tmp_path, {"dimension": 9})
    assert main(["check", "--config", path, "--out", str(tmp_path / "o")]) == 2


def test_exit_code_2_on_bad_override(tmp_path):
    path = write_cfg(tmp_path, base_cfg())
    rc = main(["check", "--config", path, "--out", str(tmp_path / "o"),
               "--set", "dimension=3"])
    assert rc == 2


def test_exit_code_1_writes_error_json(tmp_path):
    doc = base_cfg(params={"K": 50000, "window": [10, 20]})
    path = write_cfg(tmp_path, doc)
    out = tmp_path / "o"
    rc = main(["weyl", "--config", path, "--out", str(out)])
    assert rc == 1
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "ShapeError"
    assert "config" in err


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def test_check_command_glancing(tmp_path):
    doc = base_cfg(system={"kind": "preset", "name": "glancing"})
    path = write_cfg(tmp_path, doc)
    out = tmp_path / "o"
    assert main(["check", "--config", path, "--out", str(out)]) == 0
    rep = json.loads((out / "check.json").read_text())
    assert rep["M"] == 2
    assert rep["ok"] is True
    assert (out / "check.csv").exists()
    assert (out / "check.png").exists()


def test_solve_command_free_system(tmp_path):
    doc = base_cfg(system={"kind": "roots",
                           "roots": ["reg_norm_xi", "-reg_norm_xi"],
                           "B": [["0", "0"], ["0", "0"]]},
                   params={"t": 0.5, "N": 4, "nodes": 16,
                           "data": {"kind": "weighted_modes",
                                    "weights": {"0": 1.0, "1": 0.2}}})
    path = write_cfg(tmp_path, doc)
    out = tmp_path / "o"
    assert main(["solve", "--config", path, "--out", str(out)]) == 0
    rep = json.loads((out / "solve.json").read_text())
    assert rep["residual"] <= 1e-9
    with open(out / "u.pwf", "rb") as fh:
        v = read_fields(fh)
    assert v.m == 2
    assert (out / "u.csv").exists()
    assert (out / "solve.png").exists()


def test_solve_reruns_bit_identical(tmp_path):
    doc = base_cfg(params={"t": 0.3, "N": 3, "nodes": 16, "reference": False,
                           "data": {"kind": "weighted_modes",
                                    "weights": {"0": 1.0}}})
    path = write_cfg(tmp_path, doc)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--config", path, "--out", str(out1),
                 "--no-figures"]) == 0
    assert main(["solve", "--config", path, "--out", str(out2),
                 "--no-figures"]) == 0
    assert (out1 / "solve.json").read_bytes() == (out2 / "solve.json").read_bytes()
    assert (out1 / "u.csv").read_bytes() == (out2 / "u.csv").read_bytes()
    assert (out1 / "u.pwf").read_bytes() == (out2 / "u.pwf").read_bytes()


def test_flow_command(tmp_path):
    doc = base_cfg(system={"kind": "preset", "name": "glancing"},
                   params={"J": [1, 2], "x0": [math.pi / 2], "xi0": [1.0],
                           "T": 2.5})
    path = write_cfg(tmp_path, doc)
    out = tmp_path / "o"
    assert main(["flow", "--config", path, "--out", str(out)]) == 0
    rep = json.loads((out / "flow.json").read_text())
    assert rep["completed"] is True
    assert rep["switch_times"][0] == pytest.approx(math.pi / 2, abs=1e-5)
    lines = (out / "flow.csv").read_text().strip().splitlines()
    assert lines[0] == "t,x1,xi1,root"


def test_xi_command_small(tmp_path):
    doc = base_cfg(system={"kind": "preset", "name": "glancing"},
                   params={"J": [1, 2], "samples": 4000, "T": 1.5,
                           "eps": [0.3, 0.1, 0.03, 0.01], "M": 2})
    path = write_cfg(tmp_path, doc)
    out = tmp_path / "o"
    assert main(["xi", "--config", path, "--out", str(out)]) == 0
    rep = json.loads((out / "xi.json").read_text())
    assert rep["fitted_exponent"] is not None
    assert (out / "xi.csv").exists()


def test_weyl_command(tmp_path):
    doc = base_cfg(system={"kind": "preset", "name": "elliptic_gap",
                           "coupling": 0.0},
                   params={"K": 128, "window": [20.0, 60.0],
                           "predict_samples": 50000})
    path = write_cfg(tmp_path, doc)
    out = tmp_path / "o"
    assert main(["weyl", "--config", path, "--out", str(out)]) == 0
    rep = json.loads((out / "weyl.json").read_text())
    assert rep["c_lead"] == pytest.approx(3.0, rel=0.05)
    assert rep["second_reliable"] is False  # constant-coefficient torus
    assert (out / "weyl.csv").exists()


def test_smoothing_command_tiny(tmp_path):
    doc = base_cfg(params={"levels": [1], "bands": [3, 4], "probes": 1,
                           "t": 0.5, "nodes": 16})
    path = write_cfg(tmp_path, doc)
    out = tmp_path / "o"
    assert main(["smoothing", "--config", path, "--out", str(out)]) == 0
    rep = json.loads((out / "smoothing.json").read_text())
    assert "1" in rep["N_emp"]


def test_sublevel_command_small(tmp_path):
    doc = base_cfg(params={"M_list": [1], "draws": 10,
                           "eps": [1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
                           "refine": 1024})
    path = write_cfg(tmp_path, doc)
    out = tmp_path / "o"
    assert main(["sublevel", "--config", path, "--out", str(out)]) == 0
    rep = json.loads((out / "sublevel.json").read_text())
    assert rep["per_M"]["1"]["ladder_pass"] is True
    assert rep["per_M"]["1"]["count_bound_violations"] == 0


def test_wavefront_command_small(tmp_path):
    doc = base_cfg(system={"kind": "preset", "name": "glancing"},
                   grid=[128],
                   params={"x0": [2.0], "T": 0.8, "max_switches": 1,
                           "mass_check": False})
    path = write_cfg(tmp_path, doc)
    out = tmp_path / "o"
    assert main(["wavefront", "--config", path, "--out", str(out)]) == 0
    lines = (out / "wavefront.csv").read_text().strip().splitlines()
    assert len(lines) > 1


def test_console_entrypoint(tmp_path):
    import subprocess
    import sys as _s
    doc = base_cfg(system={"kind": "preset", "name": "glancing"})
    path = write_cfg(tmp_path, doc)
    out = tmp_path / "o"
    proc = subprocess.run(
        [_s.executable, "-m", "pwlab.cli", "check", "--config", path,
         "--out", str(out), "--no-figures"],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (out / "check.json").exists()


def test_lpscan_command_tiny(tmp_path):
    doc = base_cfg(params={"p_list": [4.0], "bands": [3, 4], "t": 0.25,
                           "N": 3, "nodes": 16})
    path = write_cfg(tmp_path, doc)
    out = tmp_path / "o"
    assert main(["lpscan", "--config", path, "--out", str(out)]) == 0
    rep = json.loads((out / "lpscan.json").read_text())
    key = next(iter(rep["per_p"]))
    assert rep["per_p"][key]["alpha"] == 0.0  # n = 1: no loss
    assert (out / "lpscan.csv").exists()
    assert (out / "lpscan.png").exists()
