import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from mfi_lab.cli import ConfigError, MixedReportKinds, main, report_table, run_config


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


VERIFY_CONFIG = {
    "kind": "verify",
    "seed": 42,
    "model.type": "voronoi",
    "box.side": 8.0,
    "box.margin": 4.0,
    "model.intensity": 1.0,
    "model.value_law": ["uniform", 0.0, 1.0],
    "observable.0.kind": "window-average",
    "observable.0.name": "wa",
    "observable.0.radius": 2.5,
    "weight.family": "stretched-exp",
    "weight.C": 2.0,
    "estimator.n": 48,
    "estimator.K": 4,
    "estimator.n_rhs": 6,
    "estimator.inequality": "MSG",
}


def test_generate_smoke(tmp_path):
    cfg = {"kind": "generate", "seed": 1, "model.type": "voronoi", "box.side": 4.0,
           "box.margin": 2.0, "model.value_law": ["uniform", 0, 1], "generate.n": 1}
    out = tmp_path / "out"
    manifest = run_config(cfg, out)
    assert (out / "field_0.csv").exists()
    assert (out / "manifest.json").exists()
    echoed = json.loads((out / "manifest.json").read_text())
    assert echoed["box.spacing"] == 1.0  # default echoed in the manifest
    assert "field_0.csv" in echoed["artifacts"]
    header = (out / "field_0.csv").read_text().splitlines()[0]
    assert header == "x1,x2,value"


def test_generate_binary_format(tmp_path):
    cfg = {"kind": "generate", "seed": 2, "model.type": "moving-average",
           "box.side": 4.0, "model.window_radius": 1.0, "generate.n": 1,
           "generate.format": "binary"}
    out = tmp_path / "out"
    run_config(cfg, out)
    raw = np.fromfile(out / "field_0.bin", dtype="<f8")
    sidecar = json.loads((out / "field_0.bin.json").read_text())
    assert sidecar["shape"] == [4, 4] and len(raw) == 16


def test_tail_pipeline(tmp_path):
    cfg = {"kind": "tail", "seed": 3, "model.type": "parking", "box.side": 8.0,
           "model.R": 1.0, "model.horizon": 2.0, "tail.n": 220, "tail.ell": 0.0,
           "tail.family": "exponential"}
    out = tmp_path / "out"
    run_config(cfg, out)
    radii = (out / "radii.csv").read_text().splitlines()
    assert radii[0] == "x,ell,rho,realization_id"
    fit = json.loads((out / "tail.json").read_text())
    assert fit["family"] == "exponential" and np.isfinite(fit["rate"])


def test_unknown_key_names_offender(tmp_path):
    cfg = dict(VERIFY_CONFIG)
    cfg["estimator.bogus"] = 1
    with pytest.raises(ConfigError, match="estimator.bogus"):
        run_config(cfg, tmp_path / "out")


def test_missing_seed_rejected(tmp_path):
    cfg = {k: v for k, v in VERIFY_CONFIG.items() if k != "seed"}
    with pytest.raises(ConfigError, match="seed"):
        run_config(cfg, tmp_path / "out")


def test_cli_exit_codes(tmp_path):
    bad = write_config(tmp_path, {"kind": "verify", "seed": 1, "bogus.key": 2},
                       name="bad.json")
    assert main(["run", str(bad), "--out", str(tmp_path / "o1")]) == 2
    # runtime failure: weight support not covered by the scale grid
    cfg = dict(VERIFY_CONFIG)
    cfg["estimator.scale_grid"] = [0.0, 0.5]
    cfg["weight.family"] = "exp"
    cfg["weight.C"] = 4.0
    broken = write_config(tmp_path, cfg, name="broken.json")
    assert main(["run", str(broken), "--out", str(tmp_path / "o2")]) == 3
    good = write_config(tmp_path, VERIFY_CONFIG, name="good.json")
    assert main(["run", str(good), "--out", str(tmp_path / "o3")]) == 0


def test_determinism_across_workers(tmp_path):
    cfg = write_config(tmp_path, VERIFY_CONFIG)
    out1, out2 = tmp_path / "w1", tmp_path / "w2"
    assert main(["run", str(cfg), "--out", str(out1), "--workers", "1"]) == 0
    assert main(["run", str(cfg), "--out", str(out2), "--workers", "3"]) == 0
    for name in ("report_wa.json", "reports.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    m1 = json.loads((out1 / "manifest.json").read_text())
    m2 = json.loads((out2 / "manifest.json").read_text())
    m1.pop("workers_requested")
    m2.pop("workers_requested")
    assert m1 == m2


def test_report_table_sorted_and_mixed_kinds(tmp_path):
    cfg = dict(VERIFY_CONFIG)
    out1 = tmp_path / "r1"
    run_config(cfg, out1)
    cfg2 = dict(VERIFY_CONFIG)
    cfg2["model.type"] = "moving-average"
    cfg2["model.window_radius"] = 1.0
    out2 = tmp_path / "r2"
    run_config(cfg2, out2)
    table = report_table([out2 / "report_wa.json", out1 / "report_wa.json"])
    lines = table.strip().split("\n")
    assert len(lines) == 3
    assert lines[1].split(",")[1] == "moving-average"  # sorted by model id
    mlsi = dict(VERIFY_CONFIG)
    mlsi["estimator.inequality"] = "MLSI"
    mlsi["model.value_law"] = ["uniform", 0.5, 1.5]
    out3 = tmp_path / "r3"
    run_config(mlsi, out3)
    with pytest.raises(MixedReportKinds):
        report_table([out1 / "report_wa.json", out3 / "report_wa.json"])


def test_efron_stein_and_brascamp_lieb_kinds(tmp_path):
    run_config({"kind": "efron-stein", "seed": 5, "es.n_vars": 3,
                "es.law": ["uniform", 0, 1], "es.functional": "sum",
                "es.n_mc": 2000}, tmp_path / "es")
    es = json.loads((tmp_path / "es" / "efron_stein.json").read_text())
    assert abs(es["ratio"] - 1.0) < 3 * es["ratio_stderr"] + 0.05
    run_config({"kind": "brascamp-lieb", "seed": 6, "bl.F": [[1.0, 0.0], [0.0, 1.0]],
                "bl.observable": "product", "bl.level": 8}, tmp_path / "bl")
    bl = json.loads((tmp_path / "bl" / "brascamp_lieb.json").read_text())
    assert bl["lhs"] <= bl["rhs"] + 1e-10


def test_console_entry_point(tmp_path):
    cfg = write_config(tmp_path, {"kind": "brascamp-lieb", "seed": 1,
                                  "bl.F": [[1.0]], "bl.observable": "linear",
                                  "bl.level": 6})
    proc = subprocess.run([sys.executable, "-m", "mfi_lab.cli", "run", str(cfg),
                           "--out", str(tmp_path / "o")], capture_output=True)
    assert proc.returncode == 0
