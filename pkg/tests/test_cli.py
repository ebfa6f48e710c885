import csv
import json
import subprocess
import sys

import pytest

from conftest import reference_energies
from qcbtafqmc.cli import main


def write_config(tmp_path, body, name="run.toml"):
    path = tmp_path / name
    path.write_text(body)
    return str(path)


def run(tmp_path, command, body, *extra, out="out"):
    cfg = write_config(tmp_path, body)
    code = main([command, "--config", cfg, "--output-dir", str(tmp_path / out), *extra])
    return code, tmp_path / out


def load(path):
    return json.loads(path.read_text())


def sweep_rows(path):
    return list(csv.DictReader(line for line in path.read_text().splitlines() if not line.startswith("#")))


H2 = "fcidump = 'bundled:h2_sto3g'\nseed = 3\n"
H4 = "fcidump = 'bundled:h4_sto3g'\nseed = 3\n"


def test_exact_h2(tmp_path):
    code, out = run(tmp_path, "exact", H2)
    assert code == 0
    lines = [ln for ln in (out / "state.txt").read_text().splitlines() if ln and not ln.startswith("#")]
    assert len(lines) == 4
    energy = load(out / "energy.json")
    assert abs(energy["energy"] - reference_energies()["h2_sto3g"]["e_fci"]) <= 1e-8
    assert energy["n_determinants"] == 4 and len(energy["config_sha256"]) == 64


def test_rerun_is_byte_identical(tmp_path):
    body = H4 + "[cbt]\nshots = 1000\n[afqmc]\nblocks = 6\nn_equilibration = 2\nn_walkers = 16\n"
    for command in ("exact", "tomograph", "afqmc"):
        assert run(tmp_path, command, body, out="a")[0] == 0
        assert run(tmp_path, command, body, out="b")[0] == 0
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name


def test_seed_override_changes_outputs(tmp_path):
    body = H4 + "[cbt]\nshots = 1000\n"
    run(tmp_path, "tomograph", body, out="a")
    run(tmp_path, "tomograph", body, "--seed", "4", out="b")
    assert (tmp_path / "a" / "trial.txt").read_text() != (tmp_path / "b" / "trial.txt").read_text()


def test_missing_fcidump(tmp_path, capsys):
    code, _ = run(tmp_path, "exact", "fcidump = 'nowhere/missing.fcidump'\n")
    assert code == 2
    assert "missing.fcidump" in capsys.readouterr().err


def test_missing_config(tmp_path, capsys):
    code = main(["exact", "--config", str(tmp_path / "absent.toml")])
    assert code == 2
    assert "absent.toml" in capsys.readouterr().err


def test_malformed_fcidump(tmp_path, capsys):
    (tmp_path / "bad.fcidump").write_text("&FCI NORB=2,NELEC=2,MS2=0,\n&END\n0.5 1 1\n")
    code, _ = run(tmp_path, "exact", "fcidump = 'bad.fcidump'\n")
    assert code == 2
    assert "line 3" in capsys.readouterr().err


def test_bad_toml_and_unknown_keys(tmp_path):
    assert run(tmp_path, "exact", "fcidump = \n")[0] == 2
    assert run(tmp_path, "afqmc", H2 + "[afqmc]\nwalkers = 3\n")[0] == 2
    assert run(tmp_path, "tomograph", H2 + "[cbt]\nshots = -4\n")[0] == 2


def test_tomograph_exact_shots(tmp_path):
    code, out = run(tmp_path, "tomograph", H2, "--shots", "inf")
    assert code == 0
    result = load(out / "tomograph.json")
    assert result["fidelity"] == pytest.approx(1.0, abs=1e-12)
    assert result["total_shots"] == "inf"


def test_tomograph_shot_total(tmp_path):
    code, out = run(tmp_path, "tomograph", H4 + "[cbt]\nshots = 1000000\nr_max = 5\n")
    assert code == 0
    result = load(out / "tomograph.json")
    assert result["R"] == 5 and result["total_shots"] == 9 * 10**6
    assert "# total_shots: 9000000" in (out / "trial.txt").read_text()


def test_tomograph_sweep(tmp_path):
    body = H2 + "[cbt]\nsweep = true\nsweep_shots = [1000, 10000, 100000, 1000000]\nsweep_seeds = 20\n"
    code, out = run(tmp_path, "tomograph", body)
    assert code == 0
    rows = sweep_rows(out / "sweep.csv")
    assert len(rows) == 80
    assert {int(r["shots"]) for r in rows} == {10**3, 10**4, 10**5, 10**6}
    assert load(out / "tomograph.json")["sweep_rows"] == 80


def test_tomograph_from_state_file(tmp_path):
    run(tmp_path, "exact", H2, out="e")
    code = main(["tomograph", "--state", str(tmp_path / "e" / "state.txt"), "--shots", "inf",
                 "--output-dir", str(tmp_path / "t")])
    assert code == 0
    assert load(tmp_path / "t" / "tomograph.json")["fidelity"] == pytest.approx(1.0, abs=1e-12)
    assert main(["tomograph", "--state", str(tmp_path / "nope.txt"), "--output-dir", str(tmp_path / "t")]) == 2


def test_afqmc_command(tmp_path):
    body = H2 + "[afqmc]\ntrial = 'hf'\nblocks = 10\nn_equilibration = 2\nn_walkers = 16\n"
    code, out = run(tmp_path, "afqmc", body)
    assert code == 0
    summary = load(out / "afqmc.json")
    assert summary["trial_determinants"] == 1
    assert abs(summary["mean"] - reference_energies()["h2_sto3g"]["e_fci"]) < 0.05
    assert (out / "trace.csv").read_text().startswith("# config_sha256:")


def test_energy_command(tmp_path):
    body = ("fcidump = 'bundled:h2_631g'\nseed = 1\n[active_space]\nn_orb = 2\nn_elec = 2\n"
            "[cbt]\nshots = 'inf'\n[afqmc]\nblocks = 10\nn_equilibration = 2\nn_walkers = 16\n")
    code, out = run(tmp_path, "energy", body)
    assert code == 0
    res = load(out / "composite.json")
    assert res["total"] == res["e_act_ref"] + (res["e_full_afqmc"] - res["e_act_afqmc"])
    assert (out / "trace_full.csv").is_file() and (out / "trace_active.csv").is_file()


def test_energy_invalid_active_space(tmp_path, capsys):
    body = H2 + "[active_space]\nn_orb = 3\nn_elec = 2\n"
    assert run(tmp_path, "energy", body)[0] == 2
    assert "active" in capsys.readouterr().err.lower()


def test_cbs_bundled(tmp_path):
    code, out = run(tmp_path, "cbs", "")
    assert code == 0
    assert load(out / "cbs_regression.json")["all_pass"]
    assert {p.name for p in out.glob("cbs_*.json")} >= {"cbs_exp.json", "cbs_zeta.json"}


def test_cbs_scheme_error_exit_code(tmp_path, capsys):
    (tmp_path / "s.csv").write_text("species,cardinal,e_ref,e_corr\nX,3,-1.0,-0.1\nX,4,-1.05,-0.12\n")
    code, _ = run(tmp_path, "cbs", "[cbs]\nseries = 's.csv'\nschemes = ['exp']\n")
    assert code == 3
    assert "3 points" in capsys.readouterr().err


def test_cbs_constant_series(tmp_path):
    (tmp_path / "s.csv").write_text("species,cardinal,e_ref,e_corr\nX,3,-1.5,-0.2\nX,4,-1.5,-0.2\n")
    code, out = run(tmp_path, "cbs", "[cbs]\nseries = 's.csv'\nschemes = ['inv_cube']\n")
    assert code == 0
    results = load(out / "cbs_inv_cube.json")["results"]
    assert results["X"]["e_inf"] == pytest.approx(-0.2, abs=1e-12)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "qcbtafqmc.cli", "exact", "--config",
                           write_config(tmp_path, H2), "--output-dir", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "energy" in json.loads(proc.stdout)
