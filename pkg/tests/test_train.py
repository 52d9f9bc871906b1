import math

import numpy as np
import pytest

from foaa.data import gen_interaction_dataset, monte_carlo_splits
from foaa.errors import ConfigurationError, ContractError, NumericError
from foaa.gradcheck import finite_diff_check
from foaa.models import ArchConfig
from foaa.tensor import Parameter, Tensor
from foaa.train import (
    AdamState,
    TrainConfig,
    adam_step,
    cross_entropy,
    evaluate,
    train_model,
)


class TestCrossEntropy:
    def test_uniform_logits_ln3(self):
        loss = cross_entropy(Tensor([0.0, 0.0, 0.0]), 1)
        assert float(loss.data) == pytest.approx(math.log(3.0), abs=1e-12)

    def test_saturated_logits_near_zero(self):
        loss = cross_entropy(Tensor([500.0, -10.0, -10.0]), 0)
        assert float(loss.data) == pytest.approx(0.0, abs=1e-12)

    def test_gradient_is_softmax_minus_onehot(self, rng):
        w = Parameter(Tensor(rng.standard_normal(4)), name="logits")

        def f():
            return cross_entropy(w.value, 2)

        assert finite_diff_check(f, [w], h=1e-5) <= 1e-6
        from foaa.tensor import Tape, backward

        w.value.grad = None
        with Tape() as tape:
            loss = cross_entropy(w.value, 2)
        backward(loss, tape)
        z = w.value.data - w.value.data.max()
        softmax = np.exp(z) / np.exp(z).sum()
        onehot = np.eye(4)[2]
        np.testing.assert_allclose(w.value.grad, softmax - onehot, atol=1e-12)

    def test_batch_mean(self, rng):
        logits = rng.standard_normal((3, 5))
        labels = [0, 2, 4]
        batch = float(cross_entropy(Tensor(logits), labels).data)
        singles = [float(cross_entropy(Tensor(logits[i]), labels[i]).data) for i in range(3)]
        assert batch == pytest.approx(np.mean(singles), abs=1e-12)

    def test_label_out_of_range(self):
        with pytest.raises(ContractError):
            cross_entropy(Tensor([0.0, 0.0]), 2)


class TestAdam:
    def test_zero_gradients_leave_params_unchanged(self):
        p = Parameter(Tensor([1.0, -2.0]), name="p")
        p.value.grad = np.zeros(2)
        before = p.value.data.copy()
        adam_step([p], TrainConfig(lr=0.1, weight_decay=0.0), AdamState())
        np.testing.assert_array_equal(p.value.data, before)

    def test_first_step_is_minus_lr(self):
        p = Parameter(Tensor([5.0]), name="p")
        p.value.grad = np.array([1.0])
        adam_step([p], TrainConfig(lr=0.01, weight_decay=0.0), AdamState())
        # bias-corrected moments cancel at t=1, update = -lr * g/|g|
        assert float(p.value.data[0]) == pytest.approx(5.0 - 0.01, rel=1e-6)

    def test_quadratic_converges(self):
        # oracle run (cross-checked against torch.optim.Adam to 1e-14):
        # from w=3 at lr 0.01, |w| is 0.1929811... after 500 steps and
        # drops below 1e-3 by step 2000
        cfg = TrainConfig(lr=0.01, weight_decay=0.0)
        p = Parameter(Tensor([3.0]), name="w")
        state = AdamState()
        for _ in range(500):
            p.value.grad = 2.0 * p.value.data  # d(w^2)/dw
            adam_step([p], cfg, state)
        assert float(p.value.data[0]) == pytest.approx(0.1929811258843654, abs=1e-9)
        for _ in range(1500):
            p.value.grad = 2.0 * p.value.data
            adam_step([p], cfg, state)
        assert abs(float(p.value.data[0])) < 1e-3

    def test_weight_decay_shrinks_monotonically(self):
        cfg = TrainConfig(lr=0.01, weight_decay=0.1)
        p = Parameter(Tensor([2.0]), name="w")
        state = AdamState()
        prev = abs(float(p.value.data[0]))
        for _ in range(50):
            p.value.grad = np.zeros(1)  # zero data gradient; decay still acts
            adam_step([p], cfg, state)
            cur = abs(float(p.value.data[0]))
            assert cur < prev
            prev = cur

    def test_frozen_parameter_untouched(self):
        p = Parameter(Tensor([1.0]), name="w", frozen=True)
        p.value.grad = np.array([10.0])
        adam_step([p], TrainConfig(lr=0.1, weight_decay=0.0), AdamState())
        assert float(p.value.data[0]) == 1.0

    def test_shape_mismatch_rejected(self):
        p = Parameter(Tensor([1.0, 2.0]), name="w")
        p.value.grad = np.zeros(3)
        with pytest.raises(ContractError):
            adam_step([p], TrainConfig(), AdamState())


@pytest.fixture(scope="module")
def tiny_data():
    return gen_interaction_dataset(120, seed=0, noise=0.1)


@pytest.fixture(scope="module")
def tiny_split(tiny_data):
    return monte_carlo_splits(len(tiny_data), folds=1, test_frac=0.2, seed=0)[0]


class TestTrainModel:
    def test_zero_lr_constant_loss(self, tiny_data, tiny_split):
        # dropout off so the forward pass is a pure function of the params
        cfg = TrainConfig(lr=0.0, weight_decay=0.0, batch_size=16, epochs=3, seed=0, use_sampler=False)
        res = train_model(ArchConfig("mlp", m=8, dropout_p=0.0), tiny_data, tiny_split, cfg)
        assert len(res.loss_trace) == 3
        assert res.loss_trace[0] == pytest.approx(res.loss_trace[1], abs=1e-12)
        assert res.loss_trace[1] == pytest.approx(res.loss_trace[2], abs=1e-12)

    def test_deterministic_given_seed(self, tiny_data, tiny_split):
        cfg = TrainConfig(lr=0.01, batch_size=16, epochs=2, seed=7)
        r1 = train_model(ArchConfig("cross_oa", m=8), tiny_data, tiny_split, cfg)
        r2 = train_model(ArchConfig("cross_oa", m=8), tiny_data, tiny_split, cfg)
        assert r1.loss_trace == r2.loss_trace
        m1 = evaluate(r1.model, tiny_data, tiny_split.test)
        m2 = evaluate(r2.model, tiny_data, tiny_split.test)
        assert m1.scalars() == m2.scalars()

    def test_nan_loss_aborts_naming_op(self, tiny_data, tiny_split):
        # an absurd learning rate overflows the product attention after one
        # step (Adam's first update has magnitude lr per coordinate)
        cfg = TrainConfig(lr=1e150, weight_decay=0.0, batch_size=16, epochs=2, seed=0)
        with pytest.raises(NumericError, match="first offending op"):
            train_model(ArchConfig("cross_op", m=8), tiny_data, tiny_split, cfg)

    def test_invalid_config_rejected(self):
        with pytest.raises(ConfigurationError):
            TrainConfig(lr=-1.0)
        with pytest.raises(ConfigurationError):
            TrainConfig(batch_size=0)

    def test_loss_decreases_on_learnable_signal(self, tiny_data, tiny_split):
        cfg = TrainConfig(lr=0.005, weight_decay=0.0, batch_size=8, epochs=6, seed=1)
        res = train_model(ArchConfig("foaa", m=16), tiny_data, tiny_split, cfg)
        assert res.loss_trace[-1] < res.loss_trace[0]
