import math
from pathlib import Path

import pytest

from scn.config import RunConfig
from scn.errors import DataError
from scn.models.checkpoint import load_checkpoint
from scn.services.training_service import (
    AUDIT_FILE,
    BEST_CHECKPOINT,
    CONFIG_FILE,
    FINAL_CHECKPOINT,
    METRICS_FILE,
    METRICS_HEADER,
    TrainingService,
    format_float,
)


def _metrics_without_wall_time(run_dir: Path):
    lines = (run_dir / METRICS_FILE).read_text(encoding="utf-8").splitlines()
    return [line.rsplit(",", 1)[0] for line in lines]


def test_run_writes_the_run_directory(make_config):
    config = make_config()
    seen = []
    result = TrainingService(config).run(on_epoch=seen.append)

    run_dir = config.run_dir
    for name in (CONFIG_FILE, METRICS_FILE, BEST_CHECKPOINT, FINAL_CHECKPOINT, AUDIT_FILE):
        assert (run_dir / name).is_file(), name
    lines = (run_dir / METRICS_FILE).read_text(encoding="utf-8").splitlines()
    assert lines[0] == METRICS_HEADER
    assert [line.split(",")[0] for line in lines[1:]] == ["1", "2"]
    assert [row.epoch for row in seen] == [1, 2]
    assert len(result.history) == 2
    assert math.isfinite(result.final_train_loss) and math.isfinite(result.final_test_loss)
    assert 0.0 <= result.history[-1].test_accuracy <= 1.0

    assert (run_dir / CONFIG_FILE).read_text(encoding="utf-8") == config.echo()
    assert "status = ok" in (run_dir / AUDIT_FILE).read_text(encoding="utf-8")
    assert result.audit.ok and not result.audit.overlap


def test_final_checkpoint_matches_the_trained_encoder(make_config):
    config = make_config(epochs=1)
    service = TrainingService(config)
    service.run()
    ckpt = load_checkpoint(config.run_dir / FINAL_CHECKPOINT)
    for name, p in service.encoder.named_parameters().items():
        assert ckpt.params[name].tobytes() == p.data.tobytes()
    assert ckpt.optim_state.t == 2  # 8 pairs / batch 4


def test_same_seed_same_run(make_config, tmp_path):
    a = make_config(output_dir=str(tmp_path / "a"))
    b = make_config(output_dir=str(tmp_path / "b"))
    TrainingService(a).run()
    TrainingService(b).run()
    assert _metrics_without_wall_time(a.run_dir) == _metrics_without_wall_time(b.run_dir)
    assert (a.run_dir / FINAL_CHECKPOINT).read_bytes() == (b.run_dir / FINAL_CHECKPOINT).read_bytes()
    assert (a.run_dir / AUDIT_FILE).read_text() == (b.run_dir / AUDIT_FILE).read_text()


def test_different_seed_changes_the_run(make_config, tmp_path):
    a = make_config(output_dir=str(tmp_path / "a"), seed=0)
    b = make_config(output_dir=str(tmp_path / "b"), seed=1)
    TrainingService(a).run()
    TrainingService(b).run()
    assert _metrics_without_wall_time(a.run_dir) != _metrics_without_wall_time(b.run_dir)


def test_without_test_subjects_losses_are_nan(make_config):
    config = make_config(holdout=0, epochs=1)
    result = TrainingService(config).run()
    assert math.isnan(result.final_test_loss)
    row = (config.run_dir / METRICS_FILE).read_text(encoding="utf-8").splitlines()[1].split(",")
    assert row[2] == "nan" and row[3] == "nan"
    # best checkpoint falls back to the training loss
    assert (config.run_dir / BEST_CHECKPOINT).is_file()


def test_write_files_false_leaves_no_trace(make_config):
    config = make_config(epochs=1)
    TrainingService(config, write_files=False).run()
    assert not config.run_dir.exists()


def test_missing_dataset_fails_before_training(tmp_path):
    config = RunConfig.build(dataset="att", data_dir=str(tmp_path / "nowhere"), output_dir=str(tmp_path / "run"))
    service = TrainingService(config)
    with pytest.raises(DataError, match="dataset directory not found"):
        service.run()
    assert service.encoder is None


def test_format_float():
    assert format_float(float("nan")) == "nan"
    assert format_float(0.1) == "0.10000000000000001"
    assert float(format_float(1 / 3)) == 1 / 3


@pytest.mark.slow
def test_fixed_pairs_are_memorised(tmp_path):
    config = RunConfig.build(
        dataset="synthetic", synth_subjects=8, synth_per_subject=4, image_size=40,
        conv_channels=32, primary_types=8, pairs_per_epoch=8, batch_size=8, fixed_pairs=True,
        epochs=500, holdout=0, dropout_rate=0.0, flat_lr=True, alpha=0.003, validation_fraction=0.0,
        output_dir=str(tmp_path / "overfit"),
    )
    result = TrainingService(config, write_files=False).run()
    assert result.final_train_loss < 0.01
    assert result.history[0].train_loss > result.final_train_loss


@pytest.mark.slow
def test_att_few_shot_capsules_not_worse_than_standard(tmp_path):
    from scn.config import settings

    if not (settings.data_root / "att").is_dir():
        pytest.skip("AT&T faces not available")
    shared = dict(dataset="att", data_dir=str(settings.data_root), holdout=5, epochs=20, seed=0,
                  conv_channels=32, primary_types=8, pairs_per_epoch=400, test_pairs=200)

    final = {}
    for model in ("scn", "standard"):
        service = TrainingService(RunConfig.build(model=model, output_dir=str(tmp_path / model), **shared))
        service.prepare()
        untrained, _, _ = service.evaluate()
        final[model] = service.run().final_test_loss
        assert final[model] < 0.5 * untrained
    assert final["scn"] <= final["standard"]
