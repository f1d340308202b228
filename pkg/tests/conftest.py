import logging

import pytest

from scn.config import RunConfig
from scn.data.datasets import synth_dataset

logging.basicConfig(level=logging.INFO)

TINY_SIZE = 33

# conv1 9x9/3 -> 9x9, primary 9x9/3 -> 1x1 grid
TINY_MODEL = dict(
    image_size=TINY_SIZE,
    conv_channels=4,
    primary_types=2,
    primary_dim=2,
    face_caps=2,
    face_dim=3,
    embed_dim=4,
)


def tiny_config(output_dir, **overrides) -> RunConfig:
    values = dict(
        model="scn",
        dataset="synthetic",
        synth_subjects=6,
        synth_per_subject=3,
        epochs=2,
        batch_size=4,
        pairs_per_epoch=8,
        test_pairs=6,
        holdout=2,
        kfold_k=2,
        dropout_rate=0.0,
        output_dir=str(output_dir),
        **TINY_MODEL,
    )
    values.update(overrides)
    return RunConfig.build(**values)


@pytest.fixture
def tiny_ds():
    return synth_dataset(6, 3, seed=0, size=TINY_SIZE)


@pytest.fixture
def make_config(tmp_path):
    def factory(**overrides) -> RunConfig:
        output_dir = overrides.pop("output_dir", tmp_path / "run")
        return tiny_config(output_dir, **overrides)
    return factory
