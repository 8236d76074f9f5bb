import hashlib
import json
import logging
from pathlib import Path

import pandas as pd
import pytest
import torch
import yaml
from pydantic import ValidationError

from src.config import ExperimentConfig, expand_env_vars, load_config
from src.dataset import load_clip
from src.errors import CheckpointError, LabValidationError, StageError
from src.harness.__main__ import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main
from src.harness.checkpoint import WEIGHTS_NAME, load_checkpoint, read_manifest, save_checkpoint
from src.harness.experiment import FAILED_MARKER, ExperimentRunner, derive_seed, run_experiment
from src.models import BackboneConfig, init_model

REPO_ROOT = Path(__file__).resolve().parent.parent


def _perturb(model, seed=0):
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            p.add_(0.05 * torch.randn(p.shape, generator=generator))
    return model


def tiny_document(output_dir, **sections) -> dict:
    document = {
        "master_seed": 5,
        "dataset": {"count": 8, "train_fraction": 0.5, "frames": 5, "height": 8, "width": 8, "size_range": [2, 3]},
        "backbone": {"N": 2, "D": 16, "heads": 2, "patch_size": 4, "frames": 3, "channels": 6, "height": 8, "width": 8},
        "efnet": {"M": 2},
        "schedule": {"T": 20},
        "train": {
            "ft": {"regime": "FT", "batch_size": 2, "iterations": 0},
            "efvi": {"regime": "EFVI", "batch_size": 2, "iterations": 0},
        },
        "sampler": {"steps": 3},
        "evaluation": {"heldout": 3, "sample_seeds": [0, 1], "scale_sweep": [0.0, 1.0], "ablations": ["EFVI_wo_zt"]},
        "paths": {"output_dir": str(output_dir)},
        "logging": {"level": "INFO", "file": None},
    }
    for key, value in sections.items():
        document[key] = {**document[key], **value} if isinstance(value, dict) else value
    return document


def write_config(path, document) -> Path:
    path.write_text(yaml.safe_dump(document), encoding="utf-8")
    return path


class TestCheckpoint:
    def test_roundtrip_is_bit_exact(self, efvi_model, tmp_path):
        _perturb(efvi_model)
        save_checkpoint(efvi_model, tmp_path / "ckpt")
        loaded = load_checkpoint(tmp_path / "ckpt")
        assert loaded.efnet is not None
        original = efvi_model.state_dict()
        for name, value in loaded.state_dict().items():
            assert torch.equal(value, original[name]), name

    def test_roundtrip_preserves_forward_pass(self, efvi_model, tmp_path):
        from src.models import efnet_forward, inject_boundary

        _perturb(efvi_model, seed=4)
        loaded = load_checkpoint(save_checkpoint(efvi_model, tmp_path / "ckpt"))
        generator = torch.Generator().manual_seed(0)
        z_t = torch.randn(2, 3, 6, 8, 8, generator=generator)
        c_s, c_e = torch.rand(2, 3, 8, 8, generator=generator), torch.rand(2, 3, 8, 8, generator=generator)
        t = torch.tensor([3, 17])
        with torch.no_grad():
            outputs = [
                m(inject_boundary(z_t, c_s, c_e), t, efnet_forward(m, c_e, z_t)) for m in (efvi_model, loaded)
            ]
        assert torch.equal(outputs[0], outputs[1])

    def test_manifest_offsets_are_contiguous(self, ft_model, tmp_path):
        save_checkpoint(ft_model, tmp_path / "ckpt")
        manifest = read_manifest(tmp_path / "ckpt")
        offset = 0
        for entry in manifest["parameters"]:
            assert entry["offset"] == offset
            offset += 4 * int(torch.Size(entry["shape"]).numel())
        assert manifest["total_bytes"] == offset == (tmp_path / "ckpt" / WEIGHTS_NAME).stat().st_size

    def test_truncated_blob(self, ft_model, tmp_path):
        path = save_checkpoint(ft_model, tmp_path / "ckpt")
        blob = (path / WEIGHTS_NAME).read_bytes()
        (path / WEIGHTS_NAME).write_bytes(blob[:-4])
        with pytest.raises(CheckpointError, match="blob length mismatch"):
            load_checkpoint(path)

    def test_ft_checkpoint_into_efvi_model(self, ft_model, efvi_model, tmp_path, caplog):
        _perturb(ft_model, seed=3)
        save_checkpoint(ft_model, tmp_path / "ft")
        with caplog.at_level(logging.WARNING, logger="src.harness.checkpoint"):
            load_checkpoint(tmp_path / "ft", efvi_model)
        assert "EF-Net" in caplog.text

        backbone = ft_model.state_dict()
        for name, value in efvi_model.state_dict().items():
            if name.startswith("efnet."):
                continue
            assert torch.equal(value, backbone[name]), name
        for mlp in efvi_model.efnet.fusion:
            assert mlp[-1].weight.abs().sum() == 0 and mlp[-1].bias.abs().sum() == 0

    def test_unknown_names_rejected(self, ft_model, efvi_model, tmp_path):
        save_checkpoint(efvi_model, tmp_path / "efvi")
        with pytest.raises(CheckpointError, match="desconocidos"):
            load_checkpoint(tmp_path / "efvi", ft_model)

    def test_shape_mismatch(self, ft_model, tmp_path):
        save_checkpoint(ft_model, tmp_path / "ckpt")
        wider = init_model(BackboneConfig(N=2, D=32, heads=2, patch_size=4, frames=3, channels=6, height=8, width=8), 0)
        with pytest.raises(CheckpointError, match="Forma distinta"):
            load_checkpoint(tmp_path / "ckpt", wider)


class TestConfig:
    def test_defaults_are_consistent(self):
        config = ExperimentConfig()
        assert config.backbone.frames == 5 and config.backbone.channels == 6
        assert config.data_dir == Path("runs/default") / "data"

    @pytest.mark.parametrize("name", ["config.yaml", "config.smoke.yaml"])
    def test_shipped_configs_load(self, name, monkeypatch):
        monkeypatch.delenv("LAB_OUTPUT_DIR", raising=False)
        config = load_config(REPO_ROOT / name)
        assert isinstance(config, ExperimentConfig)

    def test_unknown_field_rejected(self, tmp_path):
        path = write_config(tmp_path / "c.yaml", {"sampler": {"steps": 3, "guidance": 2.0}})
        with pytest.raises(ValidationError):
            load_config(path)

    def test_geometry_mismatch_rejected(self, tmp_path):
        document = tiny_document(tmp_path, backbone={"frames": 5})
        with pytest.raises(ValidationError):
            load_config(write_config(tmp_path / "c.yaml", document))

    def test_env_expansion(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LAB_TEST_SEED", "123")
        monkeypatch.delenv("LAB_TEST_MISSING", raising=False)
        path = tmp_path / "c.yaml"
        path.write_text("master_seed: ${LAB_TEST_SEED}\ndevice: ${LAB_TEST_MISSING:-cpu}\n", encoding="utf-8")
        config = load_config(path)
        assert config.master_seed == 123
        assert config.device == "cpu"

    def test_expand_env_vars_keeps_unknown_placeholders(self, monkeypatch):
        monkeypatch.delenv("LAB_TEST_MISSING", raising=False)
        assert expand_env_vars({"a": ["${LAB_TEST_MISSING}", 3]}) == {"a": ["${LAB_TEST_MISSING}", 3]}

    def test_json_document_accepted(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps(tiny_document(tmp_path / "out")), encoding="utf-8")
        assert load_config(path).schedule.T == 20

    def test_missing_file_and_non_mapping(self, tmp_path):
        with pytest.raises(LabValidationError):
            load_config(tmp_path / "missing.yaml")
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n", encoding="utf-8")
        with pytest.raises(LabValidationError):
            load_config(path)


class TestDeriveSeed:
    def test_matches_hash_definition(self):
        digest = hashlib.sha256(b"42:dataset").digest()
        assert derive_seed(42, "dataset") == int.from_bytes(digest[:8], "little") % (2 ** 63)

    def test_named_streams_are_distinct(self):
        seeds = {derive_seed(7, name) for name in ("dataset", "init", "train:0", "sample:0", "sample:1")}
        assert len(seeds) == 5
        assert all(0 <= s < 2 ** 63 for s in seeds)
        assert derive_seed(7, "init") != derive_seed(8, "init")


class TestExperiment:
    @pytest.fixture
    def config(self, tmp_path):
        return ExperimentConfig.model_validate(tiny_document(tmp_path / "run"))

    def test_untrained_efvi_matches_ft(self, config):
        report = run_experiment(config)
        expected = {"I2V", "FT", "BD", "BD_uniform", "EFVI", "EFVI@0", "EFVI@1", "EFVI_wo_zt"}
        assert set(report.regimes) == expected
        assert len(report.rows) == len(expected) * 3

        ft = [r for r in report.rows if r.regime == "FT"]
        efvi = [r for r in report.rows if r.regime == "EFVI"]
        for a, b in zip(ft, efvi):
            assert a.clip == b.clip
            assert a.model_dump(exclude={"regime"}) == b.model_dump(exclude={"regime"})
        assert all(r.seeds == [0, 1] for r in report.rows)

    def test_rerun_is_byte_identical(self, config):
        run_experiment(config)
        first = (config.output_dir / "report.json").read_bytes()
        run_experiment(config)
        assert (config.output_dir / "report.json").read_bytes() == first

    def test_artifacts(self, config):
        report = run_experiment(config)
        out = config.output_dir
        assert (out / "timings.json").exists()
        assert (out / "checkpoints" / "ft" / "final" / "manifest.json").exists()
        assert (out / "checkpoints" / "efvi" / "final" / "manifest.json").exists()

        index = json.loads((out / "plots" / "index.json").read_text())
        assert set(index["regimes"]) == set(report.regimes)
        plot = pd.read_csv(out / "plots" / "FT.csv")
        assert list(plot.columns) == ["frame_index", "d_start", "d_end", "gt_d_start", "gt_d_end"]
        assert len(plot) == config.dataset.frames - 2

        curves = pd.read_csv(out / "curves" / "FT.csv")
        assert len(curves) == 3 * 2 * (config.dataset.frames - 2)
        means = curves.groupby("frame_index")[["d_start", "d_end"]].mean()
        assert means["d_start"].tolist() == pytest.approx(report.regime_curves["FT"].d_start, abs=1e-12)
        assert means["d_end"].tolist() == pytest.approx(report.regime_curves["FT"].d_end, abs=1e-12)

    def test_failed_stage_writes_marker(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("x")
        document = tiny_document(tmp_path / "run", paths={"data_dir": str(blocker / "data")})
        config = ExperimentConfig.model_validate(document)
        with pytest.raises(StageError) as excinfo:
            run_experiment(config)
        assert excinfo.value.stage == "dataset"
        marker = (tmp_path / "run" / FAILED_MARKER).read_text()
        assert marker.startswith("stage: dataset\n")

    def test_regime_plans_without_extras(self, tmp_path):
        document = tiny_document(tmp_path, evaluation={"both_fusions": False, "scale_sweep": [], "ablations": []})
        runner = ExperimentRunner(ExperimentConfig.model_validate(document))
        assert [p.name for p in runner.regime_plans()] == ["I2V", "FT", "BD", "EFVI"]


class TestCli:
    @pytest.fixture
    def config_path(self, tmp_path):
        return write_config(tmp_path / "config.yaml", tiny_document(tmp_path / "run"))

    def test_no_command(self):
        assert main([]) == EXIT_VALIDATION

    def test_invalid_config(self, tmp_path):
        path = write_config(tmp_path / "bad.yaml", {"unknown": 1})
        assert main(["--config", str(path), "gen-data"]) == EXIT_VALIDATION

    def test_clip_commands(self, config_path, tmp_path, capsys):
        data = tmp_path / "data"
        assert main(["--config", str(config_path), "gen-data", "--out", str(data)]) == EXIT_OK
        clip = str(sorted(data.glob("*.clip"))[0])

        assert main(["--config", str(config_path), "probe-flip", "--clip", clip]) == EXIT_OK
        assert main(["--config", str(config_path), "curves", "--video", clip, "--out", str(tmp_path / "c.csv")]) == EXIT_OK
        assert len(pd.read_csv(tmp_path / "c.csv")) == 3

        out = tmp_path / "eval.json"
        assert main(["--config", str(config_path), "eval", "--video", clip, "--reference", clip,
                     "--out", str(out)]) == EXIT_OK
        assert json.loads(out.read_text())["total_deviation"] == 0.0

    def test_train_then_sample(self, config_path, tmp_path):
        data = tmp_path / "data"
        assert main(["--config", str(config_path), "gen-data", "--out", str(data)]) == EXIT_OK
        ckpt = tmp_path / "ft"
        assert main(["--config", str(config_path), "train", "--regime", "ft", "--data", str(data),
                     "--out", str(ckpt), "--iterations", "2"]) == EXIT_OK
        assert (ckpt / "manifest.json").exists()

        clip_path = sorted(data.glob("*.clip"))[-1]
        out = tmp_path / "gen.clip"
        assert main(["--config", str(config_path), "sample", "--regime", "bd", "--checkpoint", str(ckpt),
                     "--clip", str(clip_path), "--out", str(out)]) == EXIT_OK
        generated, source = load_clip(out), load_clip(clip_path)
        assert torch.equal(generated.start_frame, source.start_frame)
        assert torch.equal(generated.end_frame, source.end_frame)

        # un checkpoint FT no tiene EF-Net
        assert main(["--config", str(config_path), "sample", "--regime", "efvi", "--checkpoint", str(ckpt),
                     "--clip", str(clip_path), "--out", str(out)]) == EXIT_VALIDATION

    def test_missing_checkpoint_is_runtime_failure(self, config_path, tmp_path):
        assert main(["--config", str(config_path), "sample", "--regime", "ft", "--checkpoint",
                     str(tmp_path / "nope"), "--clip", str(tmp_path / "x.clip"),
                     "--out", str(tmp_path / "y.clip")]) == EXIT_RUNTIME

    def test_failed_experiment_exit_code(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("x")
        document = tiny_document(tmp_path / "run", paths={"data_dir": str(blocker / "data")})
        path = write_config(tmp_path / "config.yaml", document)
        assert main(["--config", str(path), "run-experiment"]) == EXIT_VALIDATION
        assert (tmp_path / "run" / FAILED_MARKER).exists()

    def test_flip_report_written(self, config_path, tmp_path):
        data = tmp_path / "data"
        assert main(["--config", str(config_path), "gen-data", "--out", str(data)]) == EXIT_OK
        clip = str(sorted(data.glob("*.clip"))[0])

        report = tmp_path / "flip.json"
        assert main(["--config", str(config_path), "probe-flip", "--clip", clip, "--mode", "spatial_only",
                     "--report", str(report)]) == EXIT_OK
        written = json.loads(report.read_text())
        assert set(written) == {"commutator_norm", "roundtrip_mse", "flipdecode_mse", "mode"}
        assert written["mode"] == "spatial_only"
        assert written["commutator_norm"] == pytest.approx(0.0, abs=1e-9)

    def test_common_options_after_subcommand(self, config_path, tmp_path):
        data = tmp_path / "data"
        assert main(["gen-data", "--config", str(config_path), "--out", str(data), "--seed", "3",
                     "--log-level", "WARNING"]) == EXIT_OK
        assert len(list(data.glob("*.clip"))) == 8

    def test_run_experiment_accepts_config_after_subcommand(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("x")
        document = tiny_document(tmp_path / "run", paths={"data_dir": str(blocker / "data")})
        path = write_config(tmp_path / "config.yaml", document)
        # la configuración se leyó: la corrida falla en su propio data_dir, no en el parseo
        assert main(["run-experiment", "--config", str(path)]) == EXIT_VALIDATION
        assert (tmp_path / "run" / FAILED_MARKER).exists()

    @pytest.mark.parametrize("argv", [
        ["gen-data", "--bogus"],
        ["probe-flip"],
        ["sample", "--regime", "xyz", "--checkpoint", "c", "--clip", "c", "--out", "o"],
        ["no-such-command"],
    ], ids=["unknown_option", "missing_required", "bad_choice", "unknown_command"])
    def test_usage_errors_are_validation(self, argv):
        assert main(argv) == EXIT_VALIDATION

    def test_help_exits_ok(self, capsys):
        assert main(["--help"]) == EXIT_OK
        assert "probe-flip" in capsys.readouterr().out
