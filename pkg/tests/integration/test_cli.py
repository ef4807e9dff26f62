"""
Command-line workflow on the tiny configuration: gen-data, pretrain, cluster,
finetune and eval, plus exit codes for refusals and bad input.
"""

import json

import pandas as pd
import pytest
import yaml

from app.main import build_parser, main


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def run_dir(workspace):
    return workspace / "run"


def _config_file(workspace, data, name="config.yaml"):
    path = workspace / name
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


@pytest.fixture
def cli(workspace, run_dir, tiny_config_data):
    default_config = _config_file(workspace, tiny_config_data)

    def run(command, *args, config=None):
        return main([command, "--config", config or default_config, "--run-dir", str(run_dir), *args])

    return run


def _metrics(run_dir):
    return [json.loads(line) for line in (run_dir / "metrics.jsonl").read_text().splitlines()]


def test_full_workflow(cli, run_dir, workspace, tiny_config_data, capsys):
    assert cli("gen-data") == 0
    manifests = [run_dir / "corpus" / split / "manifest.tsv" for split in ("train", "test")]
    lines = sum(len(m.read_text().splitlines()) for m in manifests)
    assert lines == tiny_config_data["corpus"]["num_utterances"]

    # refusal, then forced regeneration that removes stale files
    assert cli("gen-data") == 3
    (run_dir / "corpus" / "stale.txt").write_text("old")
    assert cli("gen-data", "--force") == 0
    assert not (run_dir / "corpus" / "stale.txt").exists()

    assert cli("finetune") == 3

    assert cli("pretrain") == 0
    metrics = _metrics(run_dir)
    assert [m["step"] for m in metrics] == [1, 2, 3, 4]
    assert all("loss_reg" in m and "loss_mlm" not in m for m in metrics)
    assert (run_dir / "config.snapshot").is_file()
    assert (run_dir / "checkpoints" / "step_2.ckpt").is_file()
    assert cli("pretrain") == 3

    step_2 = str(run_dir / "checkpoints" / "step_2.ckpt")
    assert cli("pretrain", "--resume", step_2) == 0
    assert [m["step"] for m in _metrics(run_dir)] == [1, 2, 3, 4, 3, 4]

    assert cli("cluster") == 0
    centroids = run_dir / "cluster" / "centroids.av2k"
    first_bytes = centroids.read_bytes()
    train_manifest = (run_dir / "corpus" / "train" / "manifest.tsv").read_text().splitlines()
    assert len(list((run_dir / "corpus" / "train" / "targets").glob("*.npy"))) == len(train_manifest)
    assert cli("cluster") == 0
    assert centroids.read_bytes() == first_bytes
    assert "objective" in capsys.readouterr().out

    too_many = dict(tiny_config_data, model=dict(tiny_config_data["model"], num_clusters=10_000))
    assert cli("cluster", config=_config_file(workspace, too_many, "k.yaml")) == 2

    assert cli("finetune") == 0
    assert (run_dir / "checkpoints" / "probe.ckpt").is_file()

    assert cli("eval") == 0
    report = pd.read_csv(run_dir / "reports" / "accuracy.csv")
    assert len(report) == 18
    assert report[report["condition"] == "video_only"]["frame_accuracy"].nunique() == 1

    mlm = dict(tiny_config_data, mode="av2vec-mlm")
    assert cli("pretrain", "--force", config=_config_file(workspace, mlm, "mlm.yaml")) == 0
    assert all("loss_mlm" in m and "loss_reg" in m for m in _metrics(run_dir))


def test_mlm_without_targets_points_at_cluster(cli, tiny_config_data, workspace, capsys):
    assert cli("gen-data") == 0
    mlm = dict(tiny_config_data, mode="av2vec-mlm")
    assert cli("pretrain", config=_config_file(workspace, mlm, "mlm.yaml")) == 3
    assert "cluster" in capsys.readouterr().err


def test_unknown_key_exits_with_a_configuration_error(cli, tiny_config_data, workspace, capsys):
    tiny_config_data["pretrain"]["totl_updates"] = 5
    assert cli("gen-data", config=_config_file(workspace, tiny_config_data, "bad.yaml")) == 2
    assert "totl_updates" in capsys.readouterr().err


def test_missing_config_file(cli):
    assert cli("gen-data", config="no-such-file.yaml") == 3


def test_missing_checkpoint(cli):
    assert cli("gen-data") == 0
    assert cli("eval", "--checkpoint", "nowhere.ckpt") == 3


def test_seed_flag_overrides_the_file(cli, run_dir):
    assert cli("gen-data") == 0
    assert cli("pretrain", "--seed", "99") == 0
    snapshot = yaml.safe_load((run_dir / "config.snapshot").read_text())
    assert snapshot["seed"] == 99


@pytest.mark.parametrize("command,key", [
    ("gen-data", "corpus.num_utterances"),
    ("pretrain", "distill.ema_lambda_b"),
    ("pretrain", "corruption.p_noise"),
    ("cluster", "cluster.feature_layer"),
    ("finetune", "finetune.freeze_steps"),
])
def test_help_lists_config_keys(capsys, command, key):
    with pytest.raises(SystemExit) as exit_info:
        build_parser().parse_args([command, "--help"])
    assert exit_info.value.code == 0
    assert key in capsys.readouterr().out
