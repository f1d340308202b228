import numpy as np
import pytest
from PIL import Image

from scn.core.random import SplitMix64
from scn.data.datasets import load_att, load_dataset, load_lfw, synth_dataset, synth_template
from scn.data.pgm import write_pgm
from scn.errors import DataError


@pytest.fixture
def att_root(tmp_path):
    root = tmp_path / "att"
    rng = np.random.default_rng(0)
    for subject in (1, 2, 10):
        for index in (1, 2, 3):
            write_pgm(rng.uniform(size=(12, 10)), root / f"s{subject}" / f"{index}.pgm")
    (root / "README").write_text("not a subject directory")
    return root


def test_load_att_layout(att_root):
    ds = load_att(att_root, image_size=33)
    assert len(ds) == 9
    assert ds.subjects == [1, 2, 10]
    assert [(img.subject_id, img.image_index) for img in ds.images[:3]] == [(1, 1), (1, 2), (1, 3)]
    assert ds.image_shape == (1, 33, 33)


def test_load_att_missing_directory(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_att(tmp_path / "nope")


def test_load_dataset_prefers_named_subdirectory(att_root):
    ds = load_dataset("att", att_root.parent, image_size=33)
    assert ds.source == "att" and len(ds) == 9


def test_load_lfw_jpeg_and_pgm(tmp_path):
    root = tmp_path / "lfw"
    (root / "Ada_Lovelace").mkdir(parents=True)
    for i in range(2):
        colour = np.full((20, 20, 3), 40 * (i + 1), dtype=np.uint8)
        Image.fromarray(colour).save(root / "Ada_Lovelace" / f"Ada_Lovelace_{i + 1:04d}.jpg")
    write_pgm(np.full((20, 20), 0.5), root / "Alan_Turing" / "Alan_Turing_0001.pgm")
    write_pgm(np.full((20, 20), 0.25), root / "Alan_Turing" / "Alan_Turing_0002.pgm")
    write_pgm(np.full((20, 20), 0.75), root / "Lonely_Person" / "Lonely_Person_0001.pgm")

    ds = load_lfw(root, min_images=2, image_size=33)
    assert ds.subject_names == {1: "Ada_Lovelace", 2: "Alan_Turing"}
    assert len(ds) == 4
    assert ds.images[0].image.shape == (1, 33, 33)
    assert ds.images[0].image.data.mean() == pytest.approx(40 / 255, abs=0.02)


def test_synth_template_is_reproducible():
    a, b = synth_template(3, seed=1, size=40), synth_template(3, seed=1, size=40)
    assert a.data.tobytes() == b.data.tobytes()
    assert synth_template(4, seed=1, size=40).data.tobytes() != a.data.tobytes()


def test_synth_dataset_values_and_ids():
    ds = synth_dataset(4, 3, seed=2, size=40)
    assert ds.subjects == [1, 2, 3, 4]
    assert len(ds) == 12
    for img in ds.images:
        assert img.image.shape == (1, 40, 40)
        assert img.image.data.min() >= 0.0 and img.image.data.max() <= 1.0


def test_synth_dataset_is_deterministic():
    a, b = synth_dataset(3, 2, seed=5, size=40), synth_dataset(3, 2, seed=5, size=40)
    for x, y in zip(a.images, b.images):
        assert x.image.data.tobytes() == y.image.data.tobytes()


def test_within_subject_images_are_closer():
    ds = synth_dataset(10, 10, seed=0, size=100)
    groups = ds.by_subject()
    rng = SplitMix64(0)
    within, cross = [], []
    for _ in range(100):
        s, t = rng.integers(2, 10) + 1
        i, j = rng.integers(2, 10)
        within.append(np.mean((groups[s][i].image.data - groups[s][(i + 1 + j % 9) % 10].image.data) ** 2))
        if s != t:
            cross.append(np.mean((groups[s][i].image.data - groups[t][j].image.data) ** 2))
    assert np.mean(within) < np.mean(cross)


def test_unknown_dataset():
    with pytest.raises(DataError):
        load_dataset("mnist", ".")
