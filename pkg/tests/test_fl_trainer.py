import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tpddpg.fl_trainer import (HflTrainer, LocalDataset, accuracy, cloud_aggregate,
                               edge_aggregate, global_loss, importance_weight, local_sgd,
                               loss_grad, make_synthetic, sample_losses)


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        LocalDataset(np.zeros((0, 2)), np.zeros(0), 0)


def test_zero_step_size_keeps_model():
    rng = np.random.default_rng(0)
    data = make_synthetic(1, 50, rng)[0]
    w = np.array([0.3, -0.2, 0.1])
    assert np.array_equal(local_sgd(w, data, 0.0, 8, 10, rng), w)


def test_one_sample_gradient():
    x, y = np.array([[1.0, 2.0]]), np.array([1.0])
    w = np.array([0.5, -0.25, 0.1])
    m = 0.5 - 0.5 + 0.1
    s = 1 / (1 + math.exp(m))                      # sigmoid(-m)
    expected = -s * np.array([1.0, 2.0, 1.0])
    assert loss_grad(w, x, y) == pytest.approx(expected, rel=1e-12)
    step = local_sgd(w, LocalDataset(x, y, 0), 0.1, 1, 1, np.random.default_rng(0))
    assert step == pytest.approx(w - 0.1 * expected, rel=1e-12)


def test_sgd_steps_compose():
    data = make_synthetic(1, 40, np.random.default_rng(1))[0]
    w0 = np.zeros(3)
    r1, r2 = np.random.default_rng(5), np.random.default_rng(5)
    w_many = local_sgd(w0, data, 0.1, 8, 4, r1)
    w_step = w0
    for _ in range(4):
        w_step = local_sgd(w_step, data, 0.1, 8, 1, r2)
    assert np.array_equal(w_many, w_step)


def test_importance_weight_example():
    # bias chosen so every sample's loss is 0.5
    b = -math.log(math.exp(0.5) - 1)
    data = LocalDataset(np.zeros((4, 2)), np.ones(4), 0)
    w = np.array([0.0, 0.0, b])
    assert sample_losses(w, data.x, data.y) == pytest.approx([0.5] * 4)
    assert importance_weight(w, data) == pytest.approx(2.0)
    # doubling the uniform loss doubles the weight
    b2 = -math.log(math.exp(1.0) - 1)
    assert importance_weight(np.array([0.0, 0.0, b2]), data) == pytest.approx(4.0)


def test_edge_aggregate_examples(caplog):
    assert edge_aggregate([[0.0], [4.0]], [1, 3]) == pytest.approx([3.0])
    assert edge_aggregate([[1.0, 2.0]], [0.7]) == pytest.approx([1.0, 2.0])
    assert edge_aggregate([[0.0], [2.0]], [5, 5]) == pytest.approx([1.0])
    with caplog.at_level("WARNING"):
        assert edge_aggregate([[0.0], [2.0]], [0, 0]) == pytest.approx([1.0])
    assert "zero" in caplog.text
    with pytest.raises(ValueError):
        edge_aggregate([[0.0], [2.0]], [-1, 2])


def test_cloud_aggregate_examples():
    assert cloud_aggregate([[0.0], [4.0]], [1000, 3000]) == pytest.approx([3.0])
    assert cloud_aggregate([[0.0], [4.0], [99.0]], [1000, 3000, 0]) == pytest.approx([3.0])
    with pytest.raises(ValueError):
        cloud_aggregate([[0.0]], [0])


def test_global_loss_example():
    # |D| = (1, 3): client 0 at loss log 2 (w = 0); compare to the weighted mean
    d0 = LocalDataset(np.zeros((1, 2)), np.ones(1), 0)
    d1 = LocalDataset(np.ones((3, 2)), np.zeros(3), 1)
    w = np.array([1.0, 1.0, 0.0])
    f0 = sample_losses(w, d0.x, d0.y).mean()
    f1 = sample_losses(w, d1.x, d1.y).mean()
    assert global_loss(w, [d0, d1]) == pytest.approx((f0 + 3 * f1) / 4)
    assert global_loss(np.zeros(3), [d0, d1]) == pytest.approx(math.log(2))


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5).filter(lambda a: abs(a) > 1e-3), st.floats(-5, 5),
       st.lists(st.floats(0.01, 10), min_size=3, max_size=3))
def test_aggregation_affine_equivariance(a, b, weights):
    models = np.random.default_rng(0).normal(size=(3, 4))
    lhs = edge_aggregate(a * models + b, weights)
    assert lhs == pytest.approx(a * edge_aggregate(models, weights) + b, rel=1e-9, abs=1e-9)
    lhs = cloud_aggregate(a * models + b, weights)
    assert lhs == pytest.approx(a * cloud_aggregate(models, weights) + b, rel=1e-9, abs=1e-9)


def test_hierarchy_collapse():
    data = make_synthetic(4, 30, np.random.default_rng(2))
    data[3] = LocalDataset(data[3].x[:10], data[3].y[:10], 3)        # unequal sizes
    tr = HflTrainer(data, K=2, R1=1, R2=5, M=8, eta=0.1, rng=np.random.default_rng(7),
                    weighting="equal")
    tr.edge_round({0: [0, 1], 1: [2, 3]})
    # replay the same local updates and aggregate flatly by sample count
    rng = np.random.default_rng(7)
    w0 = np.zeros(3)
    local = [local_sgd(w0, d, 0.1, 8, 5, rng) for d in data]
    sizes = np.array([len(d) for d in data], dtype=float)
    edge = [np.mean(local[:2], axis=0), np.mean(local[2:], axis=0)]
    flat_edge = cloud_aggregate(edge, [sizes[:2].sum(), sizes[2:].sum()])
    assert np.allclose(tr.global_model, flat_edge, rtol=1e-12, atol=0)
    # with equal client sizes the two-level average is the flat sample-weighted mean
    data = make_synthetic(4, 30, np.random.default_rng(2))
    tr = HflTrainer(data, K=2, R1=1, R2=5, M=8, eta=0.1, rng=np.random.default_rng(7),
                    weighting="equal")
    tr.edge_round({0: [0, 1, 2], 1: [3]})
    rng = np.random.default_rng(7)
    local = np.array([local_sgd(w0, d, 0.1, 8, 5, rng) for d in data])
    flat = np.full(4, 30.0) @ local / 120.0
    assert np.max(np.abs(tr.global_model - flat)) <= 1e-12 * np.max(np.abs(flat))


def test_reaches_high_accuracy():
    data = make_synthetic(4, 200, np.random.default_rng(0))
    tr = HflTrainer(data, K=2, R1=5, R2=20, M=32, eta=0.05, rng=np.random.default_rng(1))
    for _ in range(20 * 5):
        tr.edge_round({0: [0, 1], 1: [2, 3]})
    assert len(tr.history) == 20
    assert max(acc for _, acc, _ in tr.history) >= 0.95
    assert accuracy(tr.global_model, data) >= 0.95


def test_unknown_weighting():
    with pytest.raises(ValueError):
        HflTrainer(make_synthetic(2, 5, np.random.default_rng(0)), 1, 1, 1, 1, 0.1,
                   np.random.default_rng(0), weighting="x")
