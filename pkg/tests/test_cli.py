import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from soc1d.cli import main


def run(tmp_path, *argv, config=None):
    args = list(argv)
    if config is not None:
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(config))
        args += ["--config", str(cfg)]
    return main(args)


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=object)


def test_bands_defaults(tmp_path):
    out = tmp_path / "b.csv"
    assert run(tmp_path, "bands", "--out", str(out), "--svg") == 0
    header, rows = read_csv(out)
    assert header == ["kx_nm_inv"] + [f"e{i}_meV" for i in range(1, 7)]
    data = rows.astype(float)
    i0 = np.argmin(np.abs(data[:, 0]))
    assert data[i0, 0] == 0.0
    assert abs(data[i0, 1] + 250) < 12.5 and data[i0, 2] - data[i0, 1] < 1e-9
    assert (tmp_path / "b.svg").read_text().lstrip().startswith("<?xml")


def test_bands_without_soc(tmp_path):
    out = tmp_path / "b.csv"
    assert run(tmp_path, "bands", "--out", str(out), config={"interface": {"delta_aso": 0, "delta_z": 0}}) == 0
    data = read_csv(out)[1].astype(float)
    assert np.allclose(data[:, 1], data[:, 2]) and np.allclose(data[:, 3], data[:, 4])
    assert np.allclose(data[:, 5], data[:, 6])


def test_full_precision(tmp_path):
    out = tmp_path / "b.csv"
    run(tmp_path, "bands", "--out", str(out))
    value = read_csv(out)[1][1, 1]
    assert float(value) == float(repr(float(value)))
    assert len(value.lstrip("-").replace(".", "").lstrip("0")) >= 16


def test_empty_k_range_is_usage_error(tmp_path):
    assert run(tmp_path, "bands", config={"bands": {"kx_min": 0.5, "kx_max": 0.5}}) == 1


def test_unknown_key_is_usage_error(tmp_path, capsys):
    assert run(tmp_path, "scf", config={"scf": {"mixng": 0.1}}) == 1
    assert "scf.mixng" in capsys.readouterr().err


def test_bad_subcommand_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_unwritable_output(tmp_path):
    assert run(tmp_path, "bands", "--out", str(tmp_path / "missing" / "b.csv")) == 2


def test_missing_config_is_io_error(tmp_path):
    assert main(["bands", "--config", str(tmp_path / "nope.json")]) == 2


def test_scf_zero_interaction(tmp_path):
    out = tmp_path / "s.json"
    assert run(tmp_path, "scf", "--out", str(out), config={"u0": 0.0}) == 0
    rec = json.loads(out.read_text())
    assert set(rec) == {"b", "mu", "u0", "alpha_v", "alpha_l", "t", "delta", "sigma_alpha", "sigma_beta",
                        "chi_re", "chi_im", "phase", "g", "n_s", "n_t", "iterations", "residual", "converged"}
    for key in ("delta", "sigma_alpha", "sigma_beta", "chi_re", "chi_im"):
        assert rec[key] == 0.0
    assert rec["converged"] and rec["iterations"] == 1


def test_scf_dump_and_fail_hard(tmp_path):
    out, dump = tmp_path / "s.json", tmp_path / "k.csv"
    cfg = {"kgrid": {"n_points": 401}}
    assert run(tmp_path, "scf", "--out", str(out), "--dump", str(dump), "--svg", config=cfg) == 0
    header, rows = read_csv(dump)
    assert header == ["k_nm_inv", "occ_alpha", "occ_beta", "pair_re", "pair_im", "singlet_abs", "triplet_abs"]
    assert len(rows) == 401
    assert json.loads(out.read_text())["phase"] == "P"
    cfg["scf"] = {"max_iter": 2}
    assert run(tmp_path, "scf", "--out", str(out), config=cfg) == 0
    assert json.loads(out.read_text())["phase"] == "NC"
    assert run(tmp_path, "scf", "--out", str(out), "--fail-hard", config=cfg) == 3


def test_overlap_zero_coupling(tmp_path):
    out = tmp_path / "o.csv"
    assert run(tmp_path, "overlap", "--out", str(out), config={"overlap": {"alpha_l": [0.0]}}) == 0
    header, rows = read_csv(out)
    assert header == ["b_tesla", "alpha_l_meV_nm", "overlap"]
    assert np.all(rows[:, 2].astype(float) == 1.0)


def test_conductance_map(tmp_path, caplog):
    out = tmp_path / "g.csv"
    cfg = {"conductance": {"b_range": [0, 3, 4], "mu_range": [0.0, 0.6, 4], "n_k": 1001},
           "waveguide": {"alpha_l": 1.0}}
    assert run(tmp_path, "conductance", "--out", str(out), "--svg", config=cfg) == 0
    header, rows = read_csv(out)
    assert header == ["b_tesla", "mu_meV", "g_e2_per_h"]
    assert len(rows) == 16
    assert "overlap" in caplog.text  # alpha_l = 1 drops the overlap just below 0.9 near 2.3 T


SWEEP_CFG = {"sweep": {"b_range": [0, 3, 3], "mu_range": [0.25, 0.3, 2]}, "kgrid": {"n_points": 401}}


def test_sweep_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(tmp_path, "sweep", "--out", str(a), "--svg", config=SWEEP_CFG) == 0
    assert run(tmp_path, "sweep", "--out", str(b), config=SWEEP_CFG) == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a_phase.svg").exists()


def test_sweep_resume_flag(tmp_path, monkeypatch):
    a = tmp_path / "a.csv"
    assert run(tmp_path, "sweep", "--out", str(a), config=SWEEP_CFG) == 0
    full = a.read_bytes()
    a.write_text("\n".join(a.read_text().splitlines()[:3]) + "\n")
    monkeypatch.setenv("SOC1D_THREADS", "2")
    assert run(tmp_path, "sweep", "--out", str(a), "--resume", config=SWEEP_CFG) == 0
    assert a.read_bytes() == full
    other = dict(SWEEP_CFG, u0=-3.0)
    assert run(tmp_path, "sweep", "--out", str(a), "--resume", config=other) == 1


def test_bad_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SOC1D_THREADS", "zero")
    assert run(tmp_path, "overlap", "--out", str(tmp_path / "o.csv")) == 1


def test_module_entry_point(tmp_path):
    out = tmp_path / "o.csv"
    proc = subprocess.run([sys.executable, "-m", "soc1d", "overlap", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "minimum overlap" in proc.stdout
