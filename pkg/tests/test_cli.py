"""CLI pipeline: stages, dependency errors, exit codes, determinism."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

SRC = str(Path(__file__).resolve().parents[1] / "src")

TINY_CONFIG = """\
[dataset]
source = sbm
blocks = 2
nodes_per_block = 20
p_in = 0.25
p_out = 0.02
feature_dim = 5
feature_shift = 1.2
seed = 3

[model]
epochs = 30
heads = 2
hidden_dim = 4

[fgai]
outer_steps = 3
pred_attack_steps = 2
interp_attack_steps = 2

[attack]
n_nodes = 3
n_edges = 4
pgd_steps = 3

[eval]
ratios = 0.0,0.2,0.5
trials = 3

[run]
seeds = 0,1
output_dir = {out}
"""


def run_cli(*args, cwd):
    env = {"PYTHONPATH": SRC, "PATH": "/usr/bin:/bin"}
    return subprocess.run(
        [sys.executable, "-m", "faithgat", *args],
        cwd=cwd, env=env, capture_output=True, text=True,
    )


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One fully-run tiny pipeline, reused by the read-only assertions."""
    root = tmp_path_factory.mktemp("run")
    out = root / "out"
    cfg = root / "run.ini"
    cfg.write_text(TINY_CONFIG.format(out=out))
    for stage in ("gen-data", "train", "fgai", "attack", "eval-stability", "eval-fidelity"):
        res = run_cli(stage, "--config", str(cfg), cwd=root)
        assert res.returncode == 0, (stage, res.stderr, res.stdout)
    res = run_cli("report", str(out), cwd=root)
    assert res.returncode == 0, res.stderr
    return root, cfg, out


def test_gen_data_outputs(pipeline):
    _, _, out = pipeline
    for name in ("edges.txt", "features.csv", "labels.txt", "split.txt", "dataset_manifest.json"):
        assert (out / "data" / name).exists()
    manifest = json.loads((out / "data" / "dataset_manifest.json").read_text())
    assert manifest["N"] == 40 and manifest["C"] == 2 and manifest["seed"] == 3


def test_stage_outputs_exist(pipeline):
    _, _, out = pipeline
    for seed in (0, 1):
        assert (out / "models" / f"vanilla_seed{seed}.json").exists()
        assert (out / "models" / f"fgai_seed{seed}.json").exists()
        assert (out / "logs" / f"train_seed{seed}.csv").exists()
        assert (out / "logs" / f"fgai_seed{seed}.csv").exists()
        assert (out / "attacks" / f"vanilla_seed{seed}" / "edges.txt").exists()
    for kind in ("vanilla", "fgai"):
        assert (out / "reports" / f"stability_{kind}.json").exists()
        assert (out / "reports" / f"fidelity_{kind}.json").exists()


def test_fidelity_csv_row_count(pipeline):
    _, _, out = pipeline
    csv = (out / "reports" / "fidelity_vanilla_seed0_clean.csv").read_text().strip().splitlines()
    assert csv[0] == "r,f_plus,f_minus"
    assert len(csv) == 1 + 3  # header + one row per configured ratio


def test_stability_report_schema(pipeline):
    _, _, out = pipeline
    doc = json.loads((out / "reports" / "stability_fgai.json").read_text())
    assert doc["model"] == "fgai"
    assert doc["seed_list"] == [0, 1]
    for key in ("f1", "f1_attacked", "g_tvd", "g_jsd"):
        assert set(doc[key]) == {"values", "mean", "std"}
        assert len(doc[key]["values"]) == 2
    assert "faithfulness" in doc


def test_report_aggregates_both_models(pipeline):
    _, _, out = pipeline
    doc = json.loads((out / "reports" / "report.json").read_text())
    models = sorted(row["model"] for row in doc["rows"])
    assert models == ["fgai", "vanilla"]
    for row in doc["rows"]:
        assert "fidelity" in row and "fidelity_attacked" in row
    csv = (out / "reports" / "report.csv").read_text().strip().splitlines()
    assert len(csv) == 3  # header + two model rows


def test_fgai_before_train_is_dependency_error(tmp_path):
    out = tmp_path / "out"
    cfg = tmp_path / "run.ini"
    cfg.write_text(TINY_CONFIG.format(out=out))
    res = run_cli("gen-data", "--config", str(cfg), cwd=tmp_path)
    assert res.returncode == 0
    res = run_cli("fgai", "--config", str(cfg), cwd=tmp_path)
    assert res.returncode == 3
    assert "train" in res.stderr


def test_train_before_gen_data_is_dependency_error(tmp_path):
    out = tmp_path / "out"
    cfg = tmp_path / "run.ini"
    cfg.write_text(TINY_CONFIG.format(out=out))
    res = run_cli("train", "--config", str(cfg), cwd=tmp_path)
    assert res.returncode == 3
    assert "gen-data" in res.stderr


def test_bad_config_exit_code(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[dataset]\nsource = nonsense\n")
    res = run_cli("gen-data", "--config", str(cfg), cwd=tmp_path)
    assert res.returncode == 2
    assert "config error" in res.stderr


def test_unknown_key_rejected(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[model]\nlearning_rate = 0.1\n")
    res = run_cli("train", "--config", str(cfg), cwd=tmp_path)
    assert res.returncode == 2


def test_missing_config_file(tmp_path):
    res = run_cli("gen-data", "--config", str(tmp_path / "nope.ini"), cwd=tmp_path)
    assert res.returncode == 2


def test_seed_flag_overrides_seed_list(tmp_path):
    out = tmp_path / "out"
    cfg = tmp_path / "run.ini"
    cfg.write_text(TINY_CONFIG.format(out=out))
    assert run_cli("gen-data", "--config", str(cfg), cwd=tmp_path).returncode == 0
    res = run_cli("train", "--config", str(cfg), "--seed", "5", cwd=tmp_path)
    assert res.returncode == 0
    assert (out / "models" / "vanilla_seed5.json").exists()
    assert not (out / "models" / "vanilla_seed0.json").exists()


def test_gen_data_rerun_identical_manifest_hash(tmp_path):
    out = tmp_path / "out"
    cfg = tmp_path / "run.ini"
    cfg.write_text(TINY_CONFIG.format(out=out))
    first = run_cli("gen-data", "--config", str(cfg), cwd=tmp_path)
    h1 = json.loads((out / "manifest.json").read_text())["manifest_hash"]
    second = run_cli("gen-data", "--config", str(cfg), cwd=tmp_path)
    h2 = json.loads((out / "manifest.json").read_text())["manifest_hash"]
    assert first.returncode == second.returncode == 0
    assert h1 == h2


def test_log_csv_headers(pipeline):
    _, _, out = pipeline
    train_log = (out / "logs" / "train_seed0.csv").read_text().splitlines()
    assert train_log[0] == "epoch,loss,train_f1,val_f1"
    assert len(train_log) == 1 + 30
    fgai_log = (out / "logs" / "fgai_seed0.csv").read_text().splitlines()
    assert fgai_log[0] == "step,closeness,similarity,pred_stability,interp_stability,total"
    assert len(fgai_log) == 1 + 3


def test_unwritable_output_dir_is_io_error(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(TINY_CONFIG.format(out="/proc/faithgat_cannot_write"))
    res = run_cli("gen-data", "--config", str(cfg), cwd=tmp_path)
    assert res.returncode != 0


def test_divergent_training_exits_numerical(tmp_path):
    out = tmp_path / "out"
    cfg = tmp_path / "run.ini"
    cfg.write_text(TINY_CONFIG.format(out=out).replace("epochs = 30", "epochs = 5\nlr = 1e200"))
    assert run_cli("gen-data", "--config", str(cfg), cwd=tmp_path).returncode == 0
    res = run_cli("train", "--config", str(cfg), cwd=tmp_path)
    assert res.returncode == 4
    assert "numerical error" in res.stderr


def test_report_accepts_multiple_run_dirs(pipeline):
    root, _, out = pipeline
    res = run_cli("report", str(out), str(out), cwd=root)
    assert res.returncode == 0
    doc = json.loads((out / "reports" / "report.json").read_text())
    assert len(doc["rows"]) == 4  # two models from each of the two dirs
