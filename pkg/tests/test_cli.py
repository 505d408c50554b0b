import json
import os
import subprocess
import sys

import pytest

from coarseflow.cli import run
from coarseflow.datagen import synthetic_dataset, write_dataset

TINY_CONFIG = {
    "preset": "toy",
    "n": 8,
    "epochs": 2,
    "batch_size": 8,
    "atom": {"num_blocks": 2, "coarsen_factors": [2], "steps": 1,
             "rgcn_layers": 1, "hidden": 8},
    "bond": {"num_blocks": 2, "steps": 1, "hidden": 8},
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "train.smi"
    write_dataset(synthetic_dataset(24, seed=31, max_atoms=6), str(data), comment="toy set")
    cfg_path = root / "cfg.json"
    cfg_path.write_text(json.dumps(TINY_CONFIG))
    ckpt = root / "run1"
    code = run(["train", "--config", str(cfg_path), "--data", str(data), "--out", str(ckpt)])
    assert code == 0
    return root, str(data), str(cfg_path), str(ckpt)


def test_train_writes_artifacts(workspace):
    root, data, cfg_path, ckpt = workspace
    assert os.path.exists(ckpt + ".json")
    assert os.path.exists(ckpt + ".bin")
    assert os.path.exists(ckpt + ".log.tsv")


def test_sample_cli_and_determinism(workspace, capsys):
    root, data, cfg_path, ckpt = workspace
    out1 = str(root / "s1.tsv")
    out2 = str(root / "s2.tsv")
    assert run(["sample", "--ckpt", ckpt, "--n", "20", "--temperature", "0.7",
                "--seed", "7", "--data", data, "--out", out1]) == 0
    captured = capsys.readouterr().out
    assert "validity" in captured and "seed: 7" in captured
    assert run(["sample", "--ckpt", ckpt, "--n", "20", "--temperature", "0.7",
                "--seed", "7", "--data", data, "--out", out2]) == 0
    with open(out1, "rb") as fh:
        b1 = fh.read()
    with open(out2, "rb") as fh:
        b2 = fh.read()
    assert b1 == b2  # byte-identical TSV for identical argv


def test_reconstruct_cli(workspace, capsys):
    root, data, cfg_path, ckpt = workspace
    assert run(["reconstruct", "--ckpt", ckpt, "--data", data, "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert "reconstruction: 24/24 = 1.0000" in out


def test_optimize_cli(workspace, capsys):
    root, data, cfg_path, ckpt = workspace
    out = str(root / "opt.tsv")
    assert run(["optimize", "--ckpt", ckpt, "--data", data, "--n", "4",
                "--scorer", "carbon_count", "--alpha", "0.5", "--steps", "2",
                "--delta", "0.4", "--seed", "1", "--surrogate-epochs", "1",
                "--out", out]) == 0
    lines = open(out).read().strip().split("\n")
    assert lines[0].startswith("start_smiles\tbest_smiles")
    assert len(lines) == 5


def test_resample_cli(workspace):
    root, data, cfg_path, ckpt = workspace
    out = str(root / "grid.tsv")
    assert run(["resample", "--ckpt", ckpt, "--data", data, "--n", "2",
                "--temperature", "0.7", "--seed", "2", "--out", out]) == 0
    lines = open(out).read().strip().split("\n")
    assert lines[0] == "level_j\tsample_idx\tsmiles"
    assert lines[1].startswith("-1\t0\t")  # original molecule row


def test_stats_cli(workspace):
    root, data, cfg_path, ckpt = workspace
    out = str(root / "stats.tsv")
    assert run(["stats", "--ckpt", ckpt, "--n", "10", "--k", "2",
                "--seed", "3", "--out", out]) == 0
    lines = open(out).read().strip().split("\n")
    assert lines[0] == "fragment\tcount"


def test_conformance_cli(capsys):
    assert run(["conformance", "--layers", "all"]) == 0
    out = capsys.readouterr().out
    assert "actnorm" in out and "ccglow(full)" in out and "FAIL" not in out


def test_conformance_layer_filter(capsys):
    assert run(["conformance", "--layers", "squeeze"]) == 0
    out = capsys.readouterr().out
    assert "squeeze" in out and "actnorm2D" not in out


def test_gradcheck_cli(capsys):
    assert run(["gradcheck", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert "parameters checked: 548" in out


def test_unknown_flag_exit_code_1(workspace, capsys):
    root, data, cfg_path, ckpt = workspace
    assert run(["sample", "--ckpt", ckpt, "--bogus-flag", "1"]) == 1


def test_unknown_command_exit_code_1(capsys):
    assert run(["frobnicate"]) == 1


def test_missing_file_exit_code_1(tmp_path, capsys):
    assert run(["train", "--data", str(tmp_path / "absent.smi"),
                "--out", str(tmp_path / "x")]) == 1


def test_bad_scorer_exit_code_1(workspace, capsys):
    root, data, cfg_path, ckpt = workspace
    assert run(["optimize", "--ckpt", ckpt, "--data", data,
                "--scorer", "nonesuch"]) == 1


def test_runtime_failure_exit_code_2(workspace, tmp_path, capsys):
    root, data, cfg_path, ckpt = workspace
    # corrupt checkpoint blob -> runtime failure class -> exit 2
    import shutil

    bad = str(tmp_path / "bad")
    shutil.copy(ckpt + ".json", bad + ".json")
    with open(ckpt + ".bin", "rb") as fh:
        blob = fh.read()
    with open(bad + ".bin", "wb") as fh:
        fh.write(blob[:16])
    assert run(["sample", "--ckpt", bad, "--n", "2"]) == 2


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "coarseflow", "conformance",
                           "--layers", "squeeze"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "squeeze" in proc.stdout
