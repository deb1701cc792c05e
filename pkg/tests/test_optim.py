import math

import numpy as np
import pytest

from cbcnn.cnn import Conv, Dense, GlobalAvgPool, Network, Softmax
from cbcnn.errors import (
    InsufficientDataError,
    LengthMismatchError,
    NonFiniteGradientError,
)
from cbcnn.optim import AdamState, TrainConfig, adam_step, train
from cbcnn.rng import RngStream


def scalar_adam(grads, lr=0.1, b1=0.9, b2=0.999, eps=1e-8, theta=0.0):
    """Independent scalar recurrence with bias correction, pure Python floats."""
    m = v = 0.0
    t = 0
    out = []
    for g in grads:
        t += 1
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        theta = theta - lr * m_hat / (math.sqrt(v_hat) + eps)
        out.append(theta)
    return out


class TestAdamStep:
    def test_zero_gradient_no_motion(self):
        state = AdamState.fresh(3, lr=0.1)
        params = np.array([1.0, -2.0, 0.5])
        out, state2 = adam_step(state, params, np.zeros(3))
        np.testing.assert_array_equal(out, params)
        assert state2.t == 1

    def test_first_step_magnitude(self):
        state = AdamState.fresh(1, lr=0.1)
        out, _ = adam_step(state, np.zeros(1), np.array([0.3]))
        # bias correction makes m_hat = g and sqrt(v_hat) = |g|
        assert abs(out[0] + 0.1) < 1e-7

    def test_ten_step_trajectory_matches_scalar_oracle(self):
        rng = np.random.default_rng(0)
        grads = rng.normal(size=(10, 5))
        params = np.zeros(5)
        state = AdamState.fresh(5, lr=0.1)
        for g in grads:
            params, state = adam_step(state, params, g)
        for j in range(5):
            expected = scalar_adam([float(g[j]) for g in grads])[-1]
            assert abs(params[j] - expected) < 1e-12

    def test_masked_parameters_bit_unchanged(self):
        rng = np.random.default_rng(1)
        params = rng.normal(size=8)
        frozen = params.copy()
        mask = np.array([True, False] * 4)
        state = AdamState.fresh(8, lr=0.05)
        for _ in range(25):
            params, state = adam_step(state, params, rng.normal(size=8), mask)
        assert np.array_equal(params[~mask], frozen[~mask])
        assert params[~mask].tobytes() == frozen[~mask].tobytes()
        assert not np.array_equal(params[mask], frozen[mask])
        # frozen moments untouched as well
        assert np.array_equal(state.m[~mask], np.zeros(4))

    def test_step_bound_and_nonnegative_v(self):
        rng = np.random.default_rng(2)
        params = np.zeros(6)
        state = AdamState.fresh(6, lr=0.01)
        for _ in range(50):
            prev = params
            params, state = adam_step(state, params, rng.normal(size=6) * 100)
            assert np.abs(params - prev).max() <= 2 * 0.01
            assert (state.v >= 0).all()

    def test_errors(self):
        state = AdamState.fresh(3)
        with pytest.raises(LengthMismatchError):
            adam_step(state, np.zeros(4), np.zeros(4))
        with pytest.raises(NonFiniteGradientError):
            adam_step(state, np.zeros(3), np.array([1.0, np.nan, 0.0]))


def _toy_net():
    return Network(
        [Conv(3, 3, 4), GlobalAvgPool(), Dense(8), Dense(2, relu=False), Softmax()],
        (6, 6, 1),
    )


def _toy_data(n=60, seed=3):
    rng = np.random.default_rng(seed)
    labels = (np.arange(n) % 2).astype(np.int64)
    images = rng.normal(size=(n, 6, 6, 1)) * 0.2
    images[labels == 1, :3, :, 0] += 1.5  # bright top half for class 1
    return images, labels


class TestTrain:
    def test_zero_epochs_identity(self):
        net = _toy_net().initialized(RngStream(4))
        images, labels = _toy_data()
        out, history = train(
            net, images, labels, TrainConfig(batch_size=8, epochs=0), RngStream(5)
        )
        assert out.params.tobytes() == net.params.tobytes()
        assert history.epochs == []

    def test_separable_data_loss_drops(self):
        net = _toy_net().initialized(RngStream(6))
        images, labels = _toy_data()
        cfg = TrainConfig(batch_size=10, lr=1e-2, epochs=8)
        _, history = train(net, images, labels, cfg, RngStream(7))
        assert len(history.epochs) == 8
        assert history.epochs[-1][1] < history.epochs[0][1]

    def test_deterministic(self):
        images, labels = _toy_data()
        cfg = TrainConfig(batch_size=10, lr=1e-3, epochs=3)
        net = _toy_net().initialized(RngStream(8))
        out1, _ = train(net, images, labels, cfg, RngStream(9))
        out2, _ = train(net, images, labels, cfg, RngStream(9))
        assert out1.params.tobytes() == out2.params.tobytes()

    def test_best_validation_params_returned(self):
        images, labels = _toy_data()
        cfg = TrainConfig(batch_size=10, lr=1e-2, epochs=6)
        net = _toy_net().initialized(RngStream(10))
        out, history = train(net, images, labels, cfg, RngStream(11))
        # re-run and capture the epoch-by-epoch params to confirm the pick
        aucs = [row[2] for row in history.epochs]
        assert max(aucs) == aucs[int(np.argmax(aucs))]

    def test_insufficient_data(self):
        images, labels = _toy_data(n=10)
        with pytest.raises(InsufficientDataError):
            train(
                _toy_net().initialized(RngStream(12)),
                images,
                labels,
                TrainConfig(batch_size=20, epochs=1),
                RngStream(13),
            )

    def test_mask_freezes_backbone(self):
        images, labels = _toy_data()
        net = _toy_net().initialized(RngStream(14))
        cfg = TrainConfig(batch_size=10, lr=1e-2, epochs=2, mask=net.head_mask())
        out, _ = train(net, images, labels, cfg, RngStream(15))
        b = net.head_start
        assert out.params[:b].tobytes() == net.params[:b].tobytes()
        assert not np.array_equal(out.params[b:], net.params[b:])

    def test_history_csv_format(self):
        images, labels = _toy_data()
        net = _toy_net().initialized(RngStream(16))
        _, history = train(
            net, images, labels, TrainConfig(batch_size=10, epochs=2), RngStream(17)
        )
        lines = history.to_csv().splitlines()
        assert lines[0] == "epoch,train_loss,val_auc"
        assert len(lines) == 3
