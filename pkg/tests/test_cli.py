import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from svarproj.cli import load_config, main

from conftest import DGP_A, DGP_SIGMA, simulate_var


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    y = simulate_var(DGP_A, DGP_SIGMA, 150, seed=19)
    with open(root / "data.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["emp", "wage"])
        w.writerows(y.tolist())
    return root


def write_config(root, name="config.json", **overrides):
    cfg = {
        "data": "data.csv",
        "lags": 1,
        "alpha": 0.68,
        "horizons": [0, 1],
        "targets": {"variables": [1], "shocks": [1]},
        "restrictions": {"preset": "bh_labor_market", "V": 1.0},
        "seed": 4,
        "output_dir": str(root / "out"),
    }
    cfg.update(overrides)
    path = root / name
    path.write_text(json.dumps(cfg))
    return path


def test_estimate_writes_document(workdir):
    cfg = write_config(workdir)
    assert main(["estimate", str(cfg)]) == 0
    doc = json.loads((workdir / "out" / "estimate.json").read_text())
    assert doc["n"] == 2 and doc["p"] == 1
    assert doc["T"] == 149
    assert len(doc["provenance"]["config_hash"]) == 64
    assert doc["provenance"]["seed"] == 4
    assert np.asarray(doc["Sigma"]).shape == (2, 2)


def test_project_outputs_and_rerun_identical(workdir):
    cfg = write_config(workdir)
    assert main(["project", str(cfg)]) == 0
    out = workdir / "out"
    first_json = (out / "project.json").read_bytes()
    first_csv = (out / "project_plot.csv").read_bytes()
    assert main(["project", str(cfg)]) == 0
    assert (out / "project.json").read_bytes() == first_json
    assert (out / "project_plot.csv").read_bytes() == first_csv


def test_project_plot_csv_format(workdir):
    cfg = write_config(workdir)
    assert main(["project", str(cfg)]) == 0
    raw = (workdir / "out" / "project_plot.csv").read_bytes()
    # RFC 4180 line endings from the csv module's default dialect
    assert b"\r\n" in raw
    rows = list(csv.reader(raw.decode().splitlines()))
    assert rows[0] == ["horizon", "variable", "shock", "lower", "upper",
                       "plugin_lower", "plugin_upper"]
    assert len(rows) == 3   # header + two horizons
    lo, hi = float(rows[1][3]), float(rows[1][4])
    plo, phi = float(rows[1][5]), float(rows[1][6])
    assert lo <= plo <= phi <= hi


def test_project_respects_c_override(workdir):
    cfg = write_config(workdir, name="c0.json", c=0.0,
                       output_dir=str(workdir / "out_c0"))
    assert main(["project", str(cfg)]) == 0
    doc = json.loads((workdir / "out_c0" / "project.json").read_text())
    assert doc["c"] == 0.0
    for entry in doc["intervals"]:
        assert entry["lower"] == pytest.approx(entry["plugin_lower"], abs=1e-9)
        assert entry["upper"] == pytest.approx(entry["plugin_upper"], abs=1e-9)


def test_missing_config_key_is_input_error(workdir):
    path = workdir / "broken.json"
    path.write_text(json.dumps({"data": "data.csv", "lags": 1}))
    assert main(["project", str(path)]) == 2


def test_malformed_json_is_input_error(workdir):
    path = workdir / "mangled.json"
    path.write_text("{not json")
    assert main(["estimate", str(path)]) == 2


def test_missing_data_file_is_input_error(workdir):
    cfg = write_config(workdir, name="nodata.json", data="absent.csv")
    assert main(["estimate", str(cfg)]) == 2


def test_unknown_preset_is_input_error(workdir):
    cfg = write_config(workdir, name="nopreset.json",
                       restrictions={"preset": "mystery"})
    assert main(["estimate", str(cfg)]) == 2


def test_bad_alpha_is_input_error(workdir):
    cfg = write_config(workdir, name="badalpha.json", alpha=1.5)
    assert main(["project", str(cfg)]) == 2


def test_restriction_file_roundtrip(workdir):
    from svarproj.restrictions import bh_labor_market_preset, save_restrictions
    rules = workdir / "rules.json"
    save_restrictions(bh_labor_market_preset(1.0), rules)
    cfg = write_config(workdir, name="fromfile.json",
                       restrictions=str(rules),
                       output_dir=str(workdir / "out_file"))
    assert main(["project", str(cfg)]) == 0


def test_infeasible_restrictions_exit_code_one(workdir):
    from svarproj.restrictions import (Restriction, RestrictionSet,
                                       save_restrictions)
    rules = workdir / "impossible.json"
    save_restrictions(RestrictionSet(n=2, restrictions=(
        Restriction(kind="sign_irf", j=1, i=1, k=0, sense=">=", bound=90.0),
    )), rules)
    cfg = write_config(workdir, name="impossible_cfg.json",
                       restrictions=str(rules), horizons=[0],
                       solver={"starts": 2, "max_iter": 60},
                       output_dir=str(workdir / "out_badset"))
    with pytest.warns(Warning):
        rc = main(["project", str(cfg)])
    assert rc == 1
    # partial output still lands on disk
    assert (workdir / "out_badset" / "project.json").exists()


def test_env_seed_override(workdir, monkeypatch):
    cfg = write_config(workdir, name="envseed.json",
                       output_dir=str(workdir / "out_env"))
    monkeypatch.setenv("SVARPROJ_SEED", "99")
    assert main(["estimate", str(cfg)]) == 0
    doc = json.loads((workdir / "out_env" / "estimate.json").read_text())
    assert doc["provenance"]["seed"] == 99


def test_env_output_dir_override(workdir, monkeypatch):
    cfg = write_config(workdir, name="envout.json")
    target = workdir / "redirected"
    monkeypatch.setenv("SVARPROJ_OUTPUT_DIR", str(target))
    assert main(["estimate", str(cfg)]) == 0
    assert (target / "estimate.json").exists()


def test_config_hash_tracks_content(workdir):
    a = load_config(str(write_config(workdir, name="h1.json")))
    b = load_config(str(write_config(workdir, name="h2.json")))
    c = load_config(str(write_config(workdir, name="h3.json", lags=2)))
    assert a.config_hash == b.config_hash
    assert a.config_hash != c.config_hash


def test_console_entry_point(workdir):
    cfg = write_config(workdir, name="subproc.json",
                       output_dir=str(workdir / "out_sub"))
    out = subprocess.run([sys.executable, "-m", "svarproj.cli",
                          "estimate", str(cfg)],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert (workdir / "out_sub" / "estimate.json").exists()


def test_calibrate_writes_nested_regions(workdir):
    cfg = write_config(workdir, name="cal.json", M=40, eta=0.05,
                       horizons=[0],
                       output_dir=str(workdir / "out_cal"))
    rc = main(["calibrate", str(cfg)])
    assert rc == 0
    doc = json.loads((workdir / "out_cal" / "calibrate.json").read_text())
    assert doc["c_star"] <= doc["baseline_c"] + 1e-9
    raw = (workdir / "out_cal" / "calibrate_plot.csv").read_bytes()
    rows = list(csv.reader(raw.decode().splitlines()))
    assert rows[0] == ["horizon", "variable", "shock", "baseline_lower",
                       "baseline_upper", "calibrated_lower",
                       "calibrated_upper"]
    blo, bhi = float(rows[1][3]), float(rows[1][4])
    clo, chi = float(rows[1][5]), float(rows[1][6])
    assert blo - 1e-9 <= clo <= chi <= bhi + 1e-9


def test_coverage_writes_table(workdir):
    cfg = write_config(workdir, name="cov.json",
                       radii=[1.0], coverage_m=10, coverage_k=2,
                       coverage_target={"horizon": 0, "variable": 1,
                                        "shock": 1},
                       output_dir=str(workdir / "out_cov"))
    assert main(["coverage", str(cfg)]) == 0
    raw = (workdir / "out_cov" / "coverage_table.csv").read_text()
    rows = list(csv.reader(raw.splitlines()))
    assert rows[0] == ["radius", "approx_cl"]
    assert len(rows) == 2
    assert 0.0 <= float(rows[1][1]) <= 1.0
