import numpy as np
import pytest

from foaa.encoders import (
    ImageEncoderParams,
    TabularEncoderParams,
    avg_pool2,
    conv2d,
    encode_image,
    encode_tabular,
)
from foaa.errors import ContractError, DimensionError
from foaa.gradcheck import finite_diff_check
from foaa.tensor import Tensor, mul, sum_all
from foaa.train import AdamState, TrainConfig, adam_step


class TestConvPoolPrimitives:
    def test_conv_identity_kernel(self):
        # single 3x3 kernel with a 1 in the center reproduces the input
        x = np.arange(16.0).reshape(1, 1, 4, 4)
        w = np.zeros((1, 1, 3, 3))
        w[0, 0, 1, 1] = 1.0
        out = conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(1)))
        np.testing.assert_array_equal(out.data, x)

    def test_conv_matches_direct_sum(self, rng):
        x = rng.standard_normal((2, 2, 5, 5))
        w = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        out = conv2d(Tensor(x), Tensor(w), Tensor(b)).data
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        for n in (0, 1):
            for o in (0, 2):
                for i in (0, 2, 4):
                    for j in (1, 3):
                        want = (xp[n, :, i : i + 3, j : j + 3] * w[o]).sum() + b[o]
                        assert abs(out[n, o, i, j] - want) < 1e-12

    def test_avg_pool_means(self):
        x = np.arange(16.0).reshape(1, 1, 4, 4)
        out = avg_pool2(Tensor(x)).data
        np.testing.assert_array_equal(out, [[[[2.5, 4.5], [10.5, 12.5]]]])

    def test_avg_pool_drops_odd_edges(self):
        x = np.ones((1, 1, 5, 5))
        assert avg_pool2(Tensor(x)).shape == (1, 1, 2, 2)


class TestImageEncoder:
    def test_zero_image_zero_biases_zero_embedding(self, rng):
        enc = ImageEncoderParams.init((1, 8, 8), m=6, rng=rng)
        out = encode_image(enc, Tensor(np.zeros((1, 8, 8))))
        np.testing.assert_array_equal(out.data, np.zeros(6))

    def test_output_length_m_for_different_input_sizes(self, rng):
        for shape in [(1, 8, 8), (3, 28, 28)]:
            enc = ImageEncoderParams.init(shape, m=10, rng=rng)
            out = encode_image(enc, Tensor(rng.standard_normal(shape)))
            assert out.shape == (10,)

    def test_batch_matches_per_sample(self, rng):
        enc = ImageEncoderParams.init((1, 8, 8), m=5, rng=rng)
        imgs = rng.standard_normal((3, 1, 8, 8))
        batched = encode_image(enc, Tensor(imgs)).data
        for i in range(3):
            single = encode_image(enc, Tensor(imgs[i])).data
            np.testing.assert_allclose(batched[i], single, atol=1e-12)

    def test_too_small_spatial_input(self, rng):
        with pytest.raises(DimensionError):
            ImageEncoderParams.init((1, 3, 3), m=4, rng=rng)

    def test_wrong_shape_at_encode(self, rng):
        enc = ImageEncoderParams.init((1, 8, 8), m=4, rng=rng)
        with pytest.raises(DimensionError):
            encode_image(enc, Tensor(np.zeros((1, 6, 6))))

    def test_gradcheck_unfrozen_stages(self, rng):
        enc = ImageEncoderParams.init((1, 6, 6), m=4, rng=rng, widths=(2, 3), freeze=(True, False))
        img = Tensor(rng.standard_normal((1, 6, 6)))

        def f():
            out = encode_image(enc, img)
            return sum_all(mul(out, out))

        unfrozen = [p for p in enc.params() if not p.frozen]
        assert finite_diff_check(f, unfrozen) <= 1e-4

    def test_frozen_stage_untouched_by_optimizer(self, rng):
        enc = ImageEncoderParams.init((1, 8, 8), m=4, rng=rng, freeze=(True, False))
        img = Tensor(rng.standard_normal((2, 1, 8, 8)))
        from foaa.tensor import Tape, backward, zero_grads

        params = enc.params()
        zero_grads(params)
        with Tape() as tape:
            loss = sum_all(mul(encode_image(enc, img), encode_image(enc, img)))
        backward(loss, tape)
        frozen_before = [p.value.data.copy() for p in params if p.frozen]
        live_before = [p.value.data.copy() for p in params if not p.frozen]
        assert all(p.value.grad is not None for p in params)  # gradients exist everywhere
        adam_step(params, TrainConfig(lr=0.1, weight_decay=0.0), AdamState())
        frozen_after = [p.value.data for p in params if p.frozen]
        live_after = [p.value.data for p in params if not p.frozen]
        for before, after in zip(frozen_before, frozen_after):
            assert np.array_equal(before, after)
        assert any(not np.array_equal(b, a) for b, a in zip(live_before, live_after))


class TestTabularEncoder:
    def test_zero_row_zero_biases_zero_embedding(self, rng):
        enc = TabularEncoderParams.init(5, 6, rng)
        out = encode_tabular(enc, Tensor(np.zeros(5)))
        np.testing.assert_array_equal(out.data, np.zeros(6))

    def test_eval_mode_deterministic(self, rng):
        enc = TabularEncoderParams.init(4, 6, rng)
        row = Tensor(rng.standard_normal(4))
        a = encode_tabular(enc, row).data
        b = encode_tabular(enc, row).data
        assert np.array_equal(a, b)

    def test_training_dropout_differs_and_needs_rng(self, rng):
        enc = TabularEncoderParams.init(4, 6, rng, dropout_p=0.5)
        row = Tensor(rng.standard_normal(4))
        with pytest.raises(ContractError):
            encode_tabular(enc, row, training=True)
        d1 = encode_tabular(enc, row, training=True, rng=np.random.default_rng(0)).data
        d2 = encode_tabular(enc, row, training=True, rng=np.random.default_rng(1)).data
        assert not np.array_equal(d1, d2)

    def test_width_mismatch(self, rng):
        enc = TabularEncoderParams.init(4, 6, rng)
        with pytest.raises(DimensionError):
            encode_tabular(enc, Tensor(np.zeros(5)))

    def test_gradcheck(self, rng):
        enc = TabularEncoderParams.init(4, 3, rng, hidden=5)
        row = Tensor(rng.standard_normal(4))

        def f():
            out = encode_tabular(enc, row)
            return sum_all(mul(out, out))

        assert finite_diff_check(f, enc.params()) <= 1e-4
