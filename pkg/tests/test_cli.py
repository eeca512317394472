import json
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from fdaudit.cli import main
from fdaudit.report import table_row
from fdaudit.simlab import DgpSpec, generate

COLS = ["--unit", "cz", "--period", "yr", "--y", "emp", "--d", "imp", "--cluster", "ind"]


@pytest.fixture(scope="module")
def panel_csv(tmp_path_factory):
    spec = DgpSpec(n_units=300, n_periods=3, treatment="ar1", ar_slope=0.8,
                   slope_intercepts=(1.0, 1.0, 1.5), slope_on_baseline=(0.0, 0.0, 0.5))
    p, _ = generate(spec, 1)
    r = np.random.default_rng(0)
    z = p.d + 0.5 * r.standard_normal(len(p.d))
    frame = pd.DataFrame({"cz": p.unit, "yr": p.period * 8 + 1991, "emp": p.y, "imp": p.d,
                          "zz": z, "ind": p.unit // 3})
    path = tmp_path_factory.mktemp("data") / "panel.csv"
    frame.to_csv(path, index=False)
    return path


def run_cli(args, capsys):
    code = main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out, err


COMMANDS = [
    ["balance"],
    ["balance", "--instrument", "--z", "zz"],
    ["estimate"],
    ["estimate", "--stacked"],
    ["estimate", "--instrument", "--z", "zz"],
    ["estimate", "--pair", "1991,1999"],
    ["weights", "--yitzhaki", "--d1-bins", "4", "--x-grid", "10"],
    ["ddml", "--learner", "poly-ols", "--bootstrap", "9"],
    ["ddml", "--learner", "lasso", "--instrument", "--z", "zz", "--bootstrap", "0"],
    ["ddml", "--learner", "mlp", "--mlp-iters", "50", "--bootstrap", "0"],
    ["stack", "--learner", "poly-ols", "--bootstrap", "0"],
    ["placebo", "--learner", "poly-ols"],
]


@pytest.mark.parametrize("cmd", COMMANDS, ids=[" ".join(c) for c in COMMANDS])
def test_command_succeeds_and_is_reproducible(cmd, panel_csv, tmp_path, capsys):
    out_a, out_b = tmp_path / "a.json", tmp_path / "b.json"
    args = cmd + ["--input", panel_csv] + COLS
    code, stdout, _ = run_cli(args + ["--out-json", out_a, "--out-csv", tmp_path / "a.csv"], capsys)
    assert code == 0
    code, _, _ = run_cli(args + ["--out-json", out_b], capsys)
    assert out_a.read_bytes() == out_b.read_bytes()
    report = json.loads(out_a.read_text())
    assert stdout.strip() == table_row(report)
    prov = report["provenance"]
    assert prov["input_sha256"] and prov["versions"]["numpy"] and len(prov["config_hash"]) == 64
    assert (tmp_path / "a.csv").read_text().count("\n") >= 2


def test_ddml_report_documents_learner(panel_csv, tmp_path, capsys):
    out = tmp_path / "r.json"
    code, _, _ = run_cli(["ddml", "--input", panel_csv, *COLS, "--learner", "lasso", "--degree", "3",
                          "--folds", "5", "--seed", "7", "--bootstrap", "19", "--out-json", out], capsys)
    assert code == 0
    r = json.loads(out.read_text())
    res = r["result"]
    assert res["learner"]["kind"] == "poly-lasso" and res["learner"]["seed"] == 7
    assert res["folds"] == {"n_folds": 5, "seed": 7}
    assert res["hausman"]["method"] == "bootstrap" and res["hausman"]["n_boot"] == 19
    assert res["n"] == 300 and res["n_clusters"] == 100
    lasso_diag = res["diagnostics"]["outcome_learner"][0]
    assert "selected_features" in lasso_diag and lasso_diag["duality_gap"] <= 1e-8
    assert r["provenance"]["learner_digest"] == res["learner"]["digest"]


def test_seed_changes_output(panel_csv, tmp_path, capsys):
    outs = []
    for seed in (1, 2):
        out = tmp_path / f"s{seed}.json"
        run_cli(["ddml", "--input", panel_csv, *COLS, "--learner", "poly-ols", "--bootstrap", "0",
                 "--seed", seed, "--out-json", out], capsys)
        outs.append(json.loads(out.read_text())["result"]["estimate"])
    assert outs[0] != outs[1]


def test_config_file_and_flag_precedence(panel_csv, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"input": str(panel_csv), "unit": "cz", "period": "yr", "y": "emp", "d": "imp",
                               "cluster": "ind", "learner": "poly-ols", "bootstrap": 0, "folds": 3}))
    out = tmp_path / "c.json"
    code, _, _ = run_cli(["ddml", "--config", cfg, "--folds", "4", "--out-json", out], capsys)
    assert code == 0
    res = json.loads(out.read_text())["result"]
    assert res["folds"]["n_folds"] == 4 and res["learner"]["kind"] == "poly-ols"
    cfg.write_text(json.dumps({"bogus": 1}))
    code, _, err = run_cli(["ddml", "--config", cfg], capsys)
    assert code == 2 and "unknown config keys" in err


def test_constant_change_exits_2(tmp_path, capsys):
    frame = pd.DataFrame({"unit": np.repeat(np.arange(10), 2), "period": np.tile([1, 2], 10),
                          "y": np.arange(20.0), "d": np.repeat(np.arange(10.0), 2) + np.tile([0.0, 1.0], 10)})
    path = tmp_path / "c.csv"
    frame.to_csv(path, index=False)
    code, _, err = run_cli(["estimate", "--input", path], capsys)
    assert code == 2 and "zero variance" in err


def test_unbalanced_and_missing_input_exit_2(tmp_path, capsys):
    frame = pd.DataFrame({"unit": [1, 1, 2], "period": [1, 2, 1], "y": [1.0, 2, 3], "d": [0.0, 1, 2]})
    path = tmp_path / "u.csv"
    frame.to_csv(path, index=False)
    assert run_cli(["estimate", "--input", path], capsys)[0] == 2
    assert run_cli(["estimate", "--input", tmp_path / "none.csv"], capsys)[0] == 2
    assert run_cli(["estimate"], capsys)[0] == 2


def test_numerical_failure_exits_1(panel_csv, capsys):
    code, _, err = run_cli(["ddml", "--input", panel_csv, *COLS, "--learner", "mlp", "--mlp-rate", "1e8",
                            "--bootstrap", "0"], capsys)
    assert code == 1 and "learning rate" in err


def test_usage_errors_exit_64(capsys):
    assert run_cli(["estimate", "--bogus"], capsys)[0] == 64
    assert run_cli(["frobnicate"], capsys)[0] == 64
    assert run_cli([], capsys)[0] == 64
    assert run_cli(["ddml", "--learner", "forest"], capsys)[0] == 64
    assert run_cli(["--help"], capsys)[0] == 0


def test_simulate_oracle(tmp_path, capsys):
    out = tmp_path / "sim.json"
    code, stdout, _ = run_cli(["simulate", "--oracle", "ovb", "--reps", "30", "--n-units", "2000",
                               "--out-json", out, "--out-csv", tmp_path / "sim.csv"], capsys)
    assert code == 0 and stdout.startswith("oracle ovb") and "PASS" in stdout
    res = json.loads(out.read_text())["result"]
    assert res["n_reps"] == 30 and res["dgp"]["n_units"] == 2000
    assert (tmp_path / "sim.csv").read_text().count("\n") == 31


def test_simulate_dgp_config_mismatch_exits_2(tmp_path, capsys):
    cfg = tmp_path / "dgp.json"
    cfg.write_text(json.dumps(DgpSpec(assumption="sequential").to_dict()))
    code, _, err = run_cli(["simulate", "--oracle", "path-weights", "--dgp-config", cfg, "--reps", "5"], capsys)
    assert code == 2 and "assumption switch" in err


def test_module_entry_point(panel_csv):
    proc = subprocess.run([sys.executable, "-m", "fdaudit", "estimate", "--input", str(panel_csv), *COLS],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("estimate:")
    proc = subprocess.run([sys.executable, "-m", "fdaudit", "estimate", "--nope"], capture_output=True, text=True)
    assert proc.returncode == 64 and "usage" in proc.stderr
