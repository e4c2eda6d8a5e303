"""Command-line surface: exit codes, JSON lines, config files, artifacts."""

import json

import pytest

from iqproto.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_generate_writes_manifest(tmp_path, capsys):
    out = tmp_path / "ds"
    code, stdout, _ = run_cli(
        capsys, "generate", "--out", str(out), "--protocols", "b,g",
        "--bursts-per-protocol", "2", "--seed", "1",
    )
    assert code == 0
    summary = json.loads(stdout)
    assert summary["status"] == "ok" and summary["captures"] == 4
    assert (out / "manifest.json").exists()
    assert len(list(out.glob("*.iq"))) == 4


def test_failure_prints_machine_readable_error(tmp_path, capsys):
    code, stdout, stderr = run_cli(
        capsys, "train", "--data", str(tmp_path / "missing"), "--out",
        str(tmp_path / "tr"),
    )
    assert code == 1
    assert stdout == ""
    err = json.loads(stderr)
    assert err["error"] == "FormatError"
    assert "manifest" in err["message"]


def test_config_file_defaults_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bursts-per-protocol": 1, "protocols": "b"}))
    code, stdout, _ = run_cli(
        capsys, "generate", "--out", str(tmp_path / "a"), "--config", str(cfg),
    )
    assert code == 0 and json.loads(stdout)["captures"] == 1

    # explicit flag beats the config value
    code, stdout, _ = run_cli(
        capsys, "generate", "--out", str(tmp_path / "b"), "--config", str(cfg),
        "--protocols", "b,g",
    )
    assert code == 0 and json.loads(stdout)["captures"] == 2


def test_toml_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('protocols = "g"\nbursts-per-protocol = 1\n')
    code, stdout, _ = run_cli(
        capsys, "generate", "--out", str(tmp_path / "t"), "--config", str(cfg),
    )
    assert code == 0 and json.loads(stdout)["captures"] == 1


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"no-such-flag": 1}))
    code, _, stderr = run_cli(
        capsys, "generate", "--out", str(tmp_path / "x"), "--config", str(cfg),
    )
    assert code == 1
    assert json.loads(stderr)["error"] == "ConfigError"


def test_legacy_table(tmp_path, capsys):
    out = tmp_path / "lg"
    code, stdout, _ = run_cli(
        capsys, "legacy", "--channels", "none", "--snrs", "30", "--trials",
        "4", "--out", str(out), "--seed", "4",
    )
    assert code == 0
    lines = (out / "legacy_accuracy.csv").read_text().splitlines()
    assert lines[0] == "channel,snr_db,accuracy,trials"
    assert len(lines) == 2
    assert lines[1].startswith("none,30,")


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Shared tiny dataset + 1-epoch checkpoints for the slow subcommands."""
    root = tmp_path_factory.mktemp("cli_ws")
    assert main(["generate", "--out", str(root / "ds"), "--protocols", "b,g",
                 "--bursts-per-protocol", "2", "--seed", "1"]) == 0
    assert main(["train", "--data", str(root / "ds"), "--model", "desk",
                 "--epochs", "1", "--batch-size", "32", "--out",
                 str(root / "tr"), "--seed", "1"]) == 0
    assert main(["train", "--data", str(root / "ds"), "--model", "desk",
                 "--multi-label", "--epochs", "1", "--batch-size", "32",
                 "--out", str(root / "trm"), "--seed", "2"]) == 0
    return root


def test_train_artifacts(workspace):
    assert (workspace / "tr" / "desk.ckpt").exists()
    history = (workspace / "tr" / "history.csv").read_text().splitlines()
    assert history[0] == "epoch,train_loss,val_loss,val_acc,learning_rate"
    assert len(history) == 2


def test_sweep_then_report(workspace, tmp_path, capsys):
    code, stdout, _ = run_cli(
        capsys, "sweep", "--model", str(workspace / "tr" / "desk.ckpt"),
        "--data", str(workspace / "ds"), "--channels", "none", "--snrs",
        "0,30", "--trials", "16", "--out", str(tmp_path / "sw"), "--seed", "2",
    )
    assert code == 0
    summary = json.loads(stdout)
    assert "none" in summary["spearman"]
    csv_lines = (tmp_path / "sw" / "sweep_desk.csv").read_text().splitlines()
    assert len(csv_lines) == 1 + 2  # header + one row per grid point

    code, stdout, _ = run_cli(
        capsys, "report", "--inputs", str(tmp_path / "sw" / "sweep_desk.json"),
        "--confusion-at", "none:30", "--out", str(tmp_path / "rp"),
    )
    assert code == 0
    names = {p.split("/")[-1] for p in json.loads(stdout)["files"]}
    assert names == {"sweep_desk.csv", "accuracy_vs_snr.png",
                     "confusion_desk_none_30db.png"}


def test_pipeline_subcommand(workspace, tmp_path, capsys):
    code, stdout, _ = run_cli(
        capsys, "pipeline", "--model", str(workspace / "tr" / "desk.ckpt"),
        "--source", "synthetic:b", "--snr-db", "30", "--max-chunks", "6",
        "--rate", "0.2", "--out", str(tmp_path / "pl"), "--seed", "3",
    )
    assert code == 0
    summary = json.loads(stdout)
    assert summary["conserved"] is True
    assert summary["predictions"] >= 1
    log_lines = (tmp_path / "pl" / "predictions.log").read_text().splitlines()
    assert len(log_lines) == summary["predictions"]
    timing = json.loads((tmp_path / "pl" / "timing.json").read_text())
    assert timing["chunks_in"] == 6
    assert set(timing["drops"]) == {"q1", "q2"}


def test_pipeline_from_capture_directory(workspace, tmp_path, capsys):
    code, stdout, _ = run_cli(
        capsys, "pipeline", "--model", str(workspace / "tr" / "desk.ckpt"),
        "--source", str(workspace / "ds"), "--rate", "0.2", "--out",
        str(tmp_path / "plf"), "--seed", "3",
    )
    assert code == 0
    assert json.loads(stdout)["conserved"] is True


def test_overlap_eval_subcommand(workspace, tmp_path, capsys):
    code, stdout, _ = run_cli(
        capsys, "overlap-eval", "--model", str(workspace / "trm" / "desk.ckpt"),
        "--presets", "narrow-25", "--captures", "2", "--out",
        str(tmp_path / "ov"), "--seed", "5",
    )
    assert code == 0
    summary = json.loads(stdout)
    point = summary["presets"]["narrow-25"]
    assert point["single"] >= point["single_exact"] >= point["exact"]
    saved = json.loads((tmp_path / "ov" / "overlap_metrics.json").read_text())
    assert "narrow-25" in saved


def test_grid_search_subcommand(workspace, tmp_path, capsys):
    code, stdout, _ = run_cli(
        capsys, "grid-search", "--data", str(workspace / "ds"),
        "--slice-lengths", "16", "--batch-sizes", "32", "--learning-rates",
        "1e-3", "--epochs", "1", "--out", str(tmp_path / "gs"), "--seed", "5",
    )
    assert code == 0
    assert json.loads(stdout)["rows"] == 1
    table = (tmp_path / "gs" / "grid.csv").read_text().splitlines()
    assert table[0].startswith("slice_length,batch_size")
    assert (tmp_path / "gs" / "grid_state.json").exists()
