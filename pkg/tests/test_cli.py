import os

import numpy as np
import pytest

from qgdms.cli import EXIT_BLOWUP, EXIT_CFL, EXIT_CONFIG, EXIT_OK, main
from qgdms.coefficient import save_raster, uniform_field

PRESETS_DIR = os.path.join(os.path.dirname(__file__), "..", "presets")


def write_field(tmp_path, nx=20, ny=20, value=1.0):
    path = tmp_path / "kappa.txt"
    save_raster(uniform_field(nx, ny, value), path)
    return path


def solve_config(tmp_path, **over):
    field = write_field(tmp_path)
    opts = {
        "nx": 20, "ny": 20, "nxc": 4, "nyc": 4, "ell": 2, "m": 2,
        "alpha": 0.3, "T": 0.02, "dt": 1e-3, "source": "static_sine",
        "out": tmp_path / "out", "field": field, "reference": "true",
    }
    opts.update(over)
    text = f"""
[mesh]
nx = {opts['nx']}
ny = {opts['ny']}
nx_coarse = {opts['nxc']}
ny_coarse = {opts['nyc']}

[field]
path = {opts['field']}

[cem]
ell = {opts['ell']}
m = {opts['m']}

[time]
alpha = {opts['alpha']}
t = {opts['T']}
dt = {opts['dt']}
source = {opts['source']}
reference = {opts['reference']}

[output]
dir = {opts['out']}
"""
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return path


def test_dry_run(tmp_path, capsys):
    cfg = solve_config(tmp_path)
    assert main(["solve", "--config", str(cfg), "--dry-run"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "dry-run ok" in out and "H=" in out and "N_T=" in out and "cfl_slack=" in out


def test_missing_config_exit2(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "nope.cfg")]) == EXIT_CONFIG


def test_bad_nesting_exit2(tmp_path):
    cfg = solve_config(tmp_path, nxc=3)
    assert main(["solve", "--config", str(cfg), "--dry-run"]) == EXIT_CONFIG


def test_missing_key_exit2(tmp_path):
    cfg = solve_config(tmp_path)
    text = cfg.read_text().replace("alpha = 0.3\n", "")
    cfg.write_text(text)
    assert main(["solve", "--config", str(cfg), "--dry-run"]) == EXIT_CONFIG


def test_solve_writes_outputs(tmp_path, capsys):
    cfg = solve_config(tmp_path)
    assert main(["solve", "--config", str(cfg)]) == EXIT_OK
    out_dir = tmp_path / "out"
    assert (out_dir / "energy.csv").exists()
    assert (out_dir / "errors.csv").exists()
    assert (out_dir / "meta.json").exists()
    header = (out_dir / "errors.csv").read_text().splitlines()[0]
    assert header == "H,m,alpha,e_l2,e_a,dt,T,source,field_hash,wall_seconds"
    stdout = capsys.readouterr().out
    assert stdout.strip().splitlines()[-1].startswith("solve ok")


def test_no_silent_overwrite(tmp_path, capsys):
    cfg = solve_config(tmp_path, reference="false")
    assert main(["solve", "--config", str(cfg)]) == EXIT_OK
    assert main(["solve", "--config", str(cfg)]) == EXIT_OK
    assert (tmp_path / "out").exists()
    assert (tmp_path / "out-1").exists()
    assert main(["solve", "--config", str(cfg), "--overwrite"]) == EXIT_OK
    assert not (tmp_path / "out-2").exists()


def test_cfl_refusal_exit3(tmp_path):
    # a manifestly unstable step on a contrasty field fails the check
    field = tmp_path / "contrast.txt"
    vals = np.ones((20, 20))
    vals[8:10, :] = 1e3
    from qgdms.coefficient import PermeabilityField

    save_raster(PermeabilityField(vals), field)
    cfg = solve_config(tmp_path, field=field, alpha=1e-3, dt=1e-2, T=0.1)
    assert main(["solve", "--config", str(cfg)]) == EXIT_CFL


def test_blowup_exit4(tmp_path):
    field = tmp_path / "contrast.txt"
    vals = np.ones((20, 20))
    vals[8:10, :] = 1e3
    from qgdms.coefficient import PermeabilityField

    save_raster(PermeabilityField(vals), field)
    cfg = solve_config(tmp_path, field=field, alpha=1e-3, dt=1e-2, T=0.1,
                       source="static_sine", reference="false")
    assert main(["solve", "--config", str(cfg), "--allow-unstable"]) == EXIT_BLOWUP


def test_env_override(tmp_path, capsys, monkeypatch):
    cfg = solve_config(tmp_path)
    monkeypatch.setenv("QGD_TIME__DT", "2e-3")
    assert main(["solve", "--config", str(cfg), "--dry-run"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "N_T=10" in out  # T=0.02 at dt=2e-3 overridden from the environment


def study_config(tmp_path, rows="4:1, 5:1", alphas="0.5, 0.1", extra=""):
    field = write_field(tmp_path)
    text = f"""
[mesh]
nx = 20
ny = 20
nx_coarse = 4
ny_coarse = 4

[field]
path = {field}

[cem]
ell = 1
m = 1

[time]
alpha = 0.5
t = 0.05
dt = 2e-3
source = static_sine

[study]
rows = {rows}
alphas = {alphas}

[output]
dir = {tmp_path / 'study_out'}
cache_dir = {tmp_path / 'cache'}
{extra}
"""
    path = tmp_path / "study.cfg"
    path.write_text(text)
    return path


def test_study_outputs(tmp_path, capsys):
    cfg = study_config(tmp_path)
    assert main(["study", "--config", str(cfg)]) == EXIT_OK
    out_dir = tmp_path / "study_out"
    lines = (out_dir / "table.csv").read_text().strip().splitlines()
    assert len(lines) == 5  # header + 2 rows x 2 alphas
    assert (out_dir / "table_e_a.svg").exists()
    assert capsys.readouterr().out.strip().splitlines()[-1].startswith("study ok")


def test_study_empty_rows_exit2(tmp_path):
    cfg = study_config(tmp_path, rows="")
    assert main(["study", "--config", str(cfg)]) == EXIT_CONFIG


def test_study_max_cells(tmp_path):
    cfg = study_config(tmp_path)
    assert main(["study", "--config", str(cfg), "--max-cells", "2"]) == EXIT_OK
    lines = (tmp_path / "study_out" / "table.csv").read_text().strip().splitlines()
    assert len(lines) == 3


def test_study_dry_run(tmp_path, capsys):
    cfg = study_config(tmp_path)
    assert main(["study", "--config", str(cfg), "--dry-run"]) == EXIT_OK
    assert "cells=4" in capsys.readouterr().out


def test_diagnose_outputs(tmp_path, capsys):
    field = write_field(tmp_path)
    text = f"""
[mesh]
nx = 20
ny = 20
nx_coarse = 4
ny_coarse = 4

[field]
path = {field}

[cem]
ell = 1
m = 1

[time]
alpha = 0.3

[decay]
m_list = 0,1,2

[scan]
factors = 0.25, 4
steps = 1500

[output]
dir = {tmp_path / 'diag_out'}
"""
    cfg = tmp_path / "diag.cfg"
    cfg.write_text(text)
    assert main(["diagnose", "--config", str(cfg)]) == EXIT_OK
    out_dir = tmp_path / "diag_out"
    assert (out_dir / "decay.csv").exists()
    assert (out_dir / "scan.csv").exists()
    assert (out_dir / "basis" / "basis_R.coo.txt").exists()
    assert (out_dir / "meta.json").exists()
    assert capsys.readouterr().out.strip().splitlines()[-1].startswith("diagnose ok")


def test_generator_field_config(tmp_path):
    text = f"""
[mesh]
nx = 20
ny = 20
nx_coarse = 4
ny_coarse = 4

[field]
generator = channels
background = 1.0
channel_value = 100.0
seed = 3

[cem]
ell = 1
m = 1

[time]
alpha = 0.3
t = 0.02
dt = 1e-3
source = static_sine

[output]
dir = {tmp_path / 'gen_out'}
"""
    cfg = tmp_path / "gen.cfg"
    cfg.write_text(text)
    assert main(["solve", "--config", str(cfg), "--dry-run"]) == EXIT_OK


@pytest.mark.parametrize("name", ["table1", "table2", "table3", "table4", "fig3"])
def test_study_presets_dry_run(name, capsys):
    cfg = os.path.join(PRESETS_DIR, f"{name}.cfg")
    assert main(["study", "--config", cfg, "--dry-run"]) == EXIT_OK
    assert "dry-run ok" in capsys.readouterr().out


@pytest.mark.parametrize("name", ["decay", "cfl-scan"])
def test_diagnose_presets_dry_run(name, capsys):
    cfg = os.path.join(PRESETS_DIR, f"{name}.cfg")
    assert main(["diagnose", "--config", cfg, "--dry-run"]) == EXIT_OK
    assert "dry-run ok" in capsys.readouterr().out
