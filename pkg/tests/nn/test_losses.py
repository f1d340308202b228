import numpy as np
import pytest

from scn.core.tensor import Tensor
from scn.errors import ConfigError, ShapeError
from scn.nn.losses import (
    contrastive_loss,
    distance,
    double_margin_loss,
    margin_loss,
    spread_loss,
    spread_margin,
)


def _unit(i, d=4):
    e = np.zeros((1, d))
    e[0, i] = 1.0
    return Tensor(e)


def test_identical_embeddings():
    e = Tensor(np.array([[0.6, 0.8, 0.0]]))
    assert distance(e, e, "euclidean_sq").item() == 0.0
    assert distance(e, e, "manhattan_exp").item() == 1.0
    assert distance(e, e, "cosine").item() == pytest.approx(0.0, abs=1e-15)


def test_orthogonal_unit_vectors():
    assert distance(_unit(0), _unit(1), "cosine").item() == pytest.approx(1.0, abs=1e-15)
    assert distance(_unit(0), _unit(1), "euclidean_sq").item() == 2.0
    assert distance(_unit(0), _unit(1), "manhattan_exp").item() == pytest.approx(np.exp(-2.0))


@pytest.mark.parametrize("metric", ["euclidean_sq", "manhattan_exp", "cosine"])
def test_distance_is_bitwise_symmetric(metric):
    rng = np.random.default_rng(7)
    a = Tensor(rng.normal(size=(16, 5)))
    b = Tensor(rng.normal(scale=3.0, size=(16, 5)))
    assert distance(a, b, metric).data.tobytes() == distance(b, a, metric).data.tobytes()


def test_distance_rejects_unknown_metric():
    with pytest.raises(ConfigError):
        distance(_unit(0), _unit(1), "chebyshev")


def test_distance_shape_mismatch():
    with pytest.raises(ShapeError):
        distance(_unit(0, 3), _unit(0, 4))


@pytest.mark.parametrize("y, d, expected", [(0, 0.0, 0.0), (1, 0.0, 1.0), (1, 3.0, 0.0), (0, 1.5, 0.75)])
def test_contrastive_loss_points(y, d, expected):
    assert contrastive_loss(Tensor([d]), [y], m=2.0).item() == pytest.approx(expected)


def test_contrastive_loss_is_batch_mean():
    loss = contrastive_loss(Tensor([0.0, 0.0]), [0, 1], m=2.0)
    assert loss.item() == pytest.approx(0.5)


def test_manhattan_exp_swaps_branches():
    # 相似度为 1 的同人对没有损失，异人对损失 ½·m
    assert contrastive_loss(Tensor([1.0]), [0], m=0.5, metric="manhattan_exp").item() == 0.0
    assert contrastive_loss(Tensor([1.0]), [1], m=0.5, metric="manhattan_exp").item() == pytest.approx(0.25)


def test_manhattan_exp_margin_cap():
    with pytest.raises(ConfigError):
        contrastive_loss(Tensor([0.5]), [0], m=2.0, metric="manhattan_exp")


@pytest.mark.parametrize("y, d, expected", [(0, 0.1, 0.0), (1, 0.6, 0.0), (1, 0.0, 0.25), (0, 0.5, 0.09)])
def test_double_margin_loss_points(y, d, expected):
    assert double_margin_loss(Tensor([d]), [y], 0.2, 0.5).item() == pytest.approx(expected)


def test_double_margin_needs_ordered_margins():
    with pytest.raises(ConfigError):
        double_margin_loss(Tensor([0.1]), [0], 0.5, 0.2)


def test_labels_must_be_binary():
    with pytest.raises(ShapeError):
        contrastive_loss(Tensor([0.1]), [2], m=1.0)


def _capsules(*lengths):
    v = np.zeros((1, len(lengths), 2))
    v[0, :, 0] = lengths
    return Tensor(v)


def test_margin_loss_satisfied():
    assert margin_loss(_capsules(0.9, 0.1), [0]).item() == pytest.approx(0.0, abs=1e-12)


def test_margin_loss_absent_target():
    assert margin_loss(_capsules(0.0, 0.0), [0]).item() == pytest.approx(0.81, abs=1e-8)


def test_margin_loss_present_non_target():
    assert margin_loss(_capsules(0.9, 1.0), [0], lam=0.5).item() == pytest.approx(0.405, abs=1e-12)


def test_spread_loss_satisfied():
    assert spread_loss(Tensor([[0.9, 0.1, 0.2]]), [0], m=0.5).item() == 0.0


def test_spread_loss_tied_classes():
    assert spread_loss(Tensor([[0.4, 0.4]]), [1], m=1.0).item() == pytest.approx(1.0)


def test_spread_margin_schedule():
    assert spread_margin(0, 10) == pytest.approx(0.2)
    assert spread_margin(9, 10) == pytest.approx(0.9)
    values = [spread_margin(e, 10) for e in range(10)]
    assert np.allclose(np.diff(values), 0.7 / 9)
