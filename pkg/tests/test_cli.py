import hashlib
import json

import numpy as np
import pytest

from rbfvae import __version__, cli

TINY_TRAIN = ["--epochs", "15", "--d-latent", "2", "--hidden", "8", "--gamma-grid", "1,10",
              "--kl-weight", "0.001"]


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    mp = pytest.MonkeyPatch()
    mp.setenv(cli.OUTPUT_ROOT_ENV, str(root))
    assert cli.main(["synth", "--plants", "3", "--weeks", "20", "--seed", "5"]) == 0
    assert cli.main(["train", *TINY_TRAIN]) == 0
    assert cli.main(["train", "--variant", "pure", "--out", str(root / "train_pure"), *TINY_TRAIN]) == 0
    assert cli.main(["generate", "--scenarios", "4", "--weeks", "3"]) == 0
    assert cli.main(["validate"]) == 0
    yield root, mp
    mp.undo()


def test_pipeline_artifacts(pipeline):
    root, _ = pipeline
    for d, names in {
        "synth": ["data.csv", "capacity.csv"],
        "train": ["model.json", "training_log.csv", "selection.json", "prepared.npz"],
        "generate": ["hourly.csv", "weekly.csv", "metadata.json"],
        "validate": ["report.json", "pvalue_cdf.csv", "corr_error_hist.csv", "densities.csv",
                     "quantiles.csv", "ks_results.csv", "joint_samples.csv"],
    }.items():
        for n in names + [cli.SNAPSHOT, cli.MANIFEST]:
            assert (root / d / n).exists(), (d, n)
        manifest = json.loads((root / d / cli.MANIFEST).read_text())
        assert manifest["package_version"] == __version__ and manifest["config_hash"]
        for n in names:
            assert manifest["artifacts"][n] == digest(root / d / n)


def test_training_log_has_every_epoch(pipeline):
    root, _ = pipeline
    lines = (root / "train" / "training_log.csv").read_text().splitlines()
    assert lines[0].startswith("candidate,gamma,epoch,train_loss")
    assert len(lines) == 1 + 2 * 15     # two gamma candidates


def test_reports_embed_version_and_hash(pipeline):
    root, _ = pipeline
    for path in (root / "validate" / "report.json", root / "generate" / "metadata.json",
                 root / "train" / "selection.json"):
        doc = json.loads(path.read_text())
        assert doc["package_version"] == __version__ and doc["config_hash"]
    model = json.loads((root / "train" / "model.json").read_text())
    assert model["data_ref"]["package_version"] == __version__


@pytest.mark.parametrize("command", ["synth", "train", "generate", "validate"])
def test_rerun_from_snapshot_is_bitwise_identical(pipeline, command):
    root, _ = pipeline
    before = json.loads((root / command / cli.MANIFEST).read_text())
    assert cli.main([command, "--config", str(root / command / cli.SNAPSHOT)]) == 0
    after = json.loads((root / command / cli.MANIFEST).read_text())
    assert before == after


def test_inputs_not_mutated(pipeline):
    root, _ = pipeline
    data = root / "synth" / "data.csv"
    before = digest(data)
    cli.main(["prep", "--out", str(root / "prep")])
    assert digest(data) == before
    assert (root / "prep" / "prepared.npz").exists()


def test_compare(pipeline, capsys):
    root, _ = pipeline
    code = cli.main(["compare", "--model-a", str(root / "train" / "model.json"),
                     "--model-b", str(root / "train_pure" / "model.json"),
                     "--scenarios", "4", "--weeks", "3"])
    assert code == 0
    summary = json.loads((root / "compare" / "compare.json").read_text())
    assert summary["models"]["a"]["variant"] == "rbf_implicit"
    assert summary["models"]["b"]["variant"] == "pure"
    for tag in "ab":
        assert 0 <= summary["models"][tag]["ks_pass_rate"] <= 1
        assert summary["models"][tag]["corr_mae"] >= 0
    rows = (root / "compare" / "xy_corr.csv").read_text().splitlines()
    assert rows[0] == "plant_i,plant_j,hist_r,a_r,b_r" and len(rows) == 1 + 3
    out = capsys.readouterr().out
    assert "ks_pass_rate=" in out and "corr_mae=" in out


def test_flags_override_config_file(pipeline, tmp_path):
    root, _ = pipeline
    cfg = tmp_path / "run.cfg"
    cfg.write_text("plants = 2\nweeks = 9\nseed = 1\n")
    assert cli.main(["synth", "--config", str(cfg), "--weeks", "8", "--out", str(tmp_path / "o")]) == 0
    snap = cli.read_config_file(tmp_path / "o" / cli.SNAPSHOT)
    assert snap["plants"] == "2" and snap["weeks"] == "8" and snap["seed"] == "1"
    assert len((tmp_path / "o" / "data.csv").read_text().splitlines()) == 1 + 8 * 168


def test_usage_error_exit_code(capsys):
    assert cli.main(["train", "--no-such-flag"]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error code=1 kind=UsageError")
    assert cli.main([]) == 1


def test_missing_file_exit_code(tmp_path, capsys):
    assert cli.main(["generate", "--model", str(tmp_path / "none.json"), "--out", str(tmp_path / "g")]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and "ConfigError" in err[0]
    assert not (tmp_path / "g").exists()


def test_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("plants = 3\nwidth = 9\n")
    assert cli.main(["synth", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "width" in capsys.readouterr().err


def test_snapshot_of_other_command_rejected(pipeline, capsys):
    root, _ = pipeline
    assert cli.main(["train", "--config", str(root / "synth" / cli.SNAPSHOT)]) == 2


def test_data_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "d.csv"
    bad.write_text("timestamp,a\n2020-01-01T00:00:00,-1\n")
    assert cli.main(["prep", "--data", str(bad), "--out", str(tmp_path / "p")]) == 2
    assert "DataError" in capsys.readouterr().err


def test_numeric_failure_exit_code(tmp_path, monkeypatch, capsys):
    from rbfvae import vae
    from rbfvae.errors import TrainingError

    def boom(*a, **k):
        raise TrainingError("loss became non-finite at epoch 3", [1.0, 2.0])

    monkeypatch.setattr(vae, "fit", boom)
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path))
    assert cli.main(["synth", "--plants", "2", "--weeks", "8"]) == 0
    assert cli.main(["train"]) == 3
    assert "TrainingError" in capsys.readouterr().err


def test_generate_rejects_foreign_prepared(pipeline, tmp_path):
    root, _ = pipeline
    assert cli.main(["synth", "--plants", "3", "--weeks", "20", "--seed", "6", "--out", str(tmp_path / "s")]) == 0
    assert cli.main(["prep", "--data", str(tmp_path / "s" / "data.csv"), "--out", str(tmp_path / "p")]) == 0
    code = cli.main(["generate", "--model", str(root / "train" / "model.json"),
                     "--prepared", str(tmp_path / "p" / "prepared.npz"), "--out", str(tmp_path / "g")])
    assert code == 2


def test_threads_flag_validated(tmp_path):
    assert cli.main(["synth", "--threads", "0", "--out", str(tmp_path / "o")]) == 1


def test_npz_output(pipeline, tmp_path):
    root, _ = pipeline
    assert cli.main(["generate", "--format", "npz", "--scenarios", "2", "--weeks", "2",
                     "--out", str(tmp_path / "g")]) == 0
    z = np.load(tmp_path / "g" / "scenarios.npz")
    assert z["hourly"].shape == (2, 2, 168, 3)
