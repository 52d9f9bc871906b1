import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foaa.errors import ContractError, DimensionError
from foaa.tensor import (
    Tape,
    Tensor,
    add,
    add_bias,
    backward,
    elementwise,
    matmul,
    mul,
    relu,
    reshape,
    softmax_rows,
    sub,
    sum_all,
    transpose,
)


def matmul_oracle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Triple-loop reference, independent of the library path."""
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


class TestMatmul:
    def test_identity(self):
        out = matmul(Tensor(np.eye(2)), Tensor([[1.0, 2.0], [3.0, 4.0]]))
        np.testing.assert_array_equal(out.data, [[1.0, 2.0], [3.0, 4.0]])

    def test_projector(self):
        out = matmul(Tensor([[1.0, 0.0], [0.0, 0.0]]), Tensor([[5.0], [7.0]]))
        np.testing.assert_array_equal(out.data, [[5.0], [0.0]])

    def test_against_triple_loop(self, rng):
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal((4, 2))
        out = matmul(Tensor(a), Tensor(b))
        assert np.abs(out.data - matmul_oracle(a, b)).max() <= 1e-12

    def test_shape_mismatch_names_both(self):
        with pytest.raises(DimensionError, match=r"\(3, 4\).*\(3, 2\)"):
            matmul(Tensor(np.zeros((3, 4))), Tensor(np.zeros((3, 2))))


class TestSoftmaxRows:
    def test_uniform(self):
        out = softmax_rows(Tensor(np.zeros((2, 2))))
        np.testing.assert_allclose(out.data, 0.25 * np.full((2, 2), 2.0))

    def test_closed_form(self):
        out = softmax_rows(Tensor([[math.log(2.0), 0.0]]))
        np.testing.assert_allclose(out.data, [[2.0 / 3.0, 1.0 / 3.0]], atol=1e-12)

    def test_shift_invariance(self, rng):
        x = rng.standard_normal((4, 6))
        for c in (-3.0, 0.7, 25.0):
            base = softmax_rows(Tensor(x)).data
            shifted = softmax_rows(Tensor(x + c)).data
            assert np.abs(base - shifted).max() <= 1e-9

    def test_rows_sum_to_one(self, rng):
        x = rng.standard_normal((5, 7)) * 10
        out = softmax_rows(Tensor(x)).data
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-9)
        assert ((out > 0) & (out < 1)).all()


class TestElementwise:
    def test_add_identity(self):
        out = elementwise("add", Tensor([1.0, 2.0]), Tensor([0.0, 0.0]))
        np.testing.assert_array_equal(out.data, [1.0, 2.0])

    def test_sub_self_is_zero(self, rng):
        v = Tensor(rng.standard_normal(5))
        np.testing.assert_array_equal(elementwise("sub", v, v).data, np.zeros(5))

    def test_mul(self):
        out = elementwise("mul", Tensor([2.0, 3.0]), Tensor([4.0, 5.0]))
        np.testing.assert_array_equal(out.data, [8.0, 15.0])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))

    def test_unknown_op(self):
        with pytest.raises(ContractError):
            elementwise("pow", Tensor([1.0]), Tensor([2.0]))


class TestBackward:
    def test_grad_of_sum(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        with Tape() as tape:
            loss = sum_all(x)
        backward(loss, tape)
        np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])

    def test_grad_of_quadratic(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            loss = sum_all(mul(x, x))
        backward(loss, tape)
        np.testing.assert_array_equal(x.grad, [2.0, 4.0])

    def test_repeated_use_accumulates(self):
        x = Tensor([3.0], requires_grad=True)
        with Tape() as tape:
            loss = sum_all(add(x, x))
        backward(loss, tape)
        np.testing.assert_array_equal(x.grad, [2.0])

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = add(x, x)
        with pytest.raises(ContractError):
            backward(y, tape)

    def test_no_tape_means_no_recording(self):
        x = Tensor([1.0], requires_grad=True)
        tape = Tape()
        _ = add(x, x)  # outside any tape context
        assert tape.nodes == []


class TestMiscOps:
    def test_relu_and_grad(self):
        x = Tensor([-1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            loss = sum_all(relu(x))
        backward(loss, tape)
        np.testing.assert_array_equal(x.grad, [0.0, 1.0])

    def test_add_bias_batch_grad(self):
        x = Tensor(np.ones((3, 2)), requires_grad=True)
        b = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            loss = sum_all(add_bias(x, b))
        backward(loss, tape)
        np.testing.assert_array_equal(b.grad, [3.0, 3.0])
        np.testing.assert_array_equal(x.grad, np.ones((3, 2)))

    def test_transpose_roundtrip(self, rng):
        a = rng.standard_normal((3, 5))
        np.testing.assert_array_equal(transpose(transpose(Tensor(a))).data, a)

    def test_reshape_grad(self):
        x = Tensor(np.arange(6.0), requires_grad=True)
        with Tape() as tape:
            loss = sum_all(mul(reshape(x, (2, 3)), reshape(x, (2, 3))))
        backward(loss, tape)
        np.testing.assert_array_equal(x.grad, 2 * np.arange(6.0))


@settings(max_examples=40, deadline=None)
@given(
    m=st.integers(1, 6),
    k=st.integers(1, 6),
    n=st.integers(1, 6),
    seed=st.integers(0, 2**20),
)
def test_shape_algebra_closed(m, k, n, seed):
    """Output shapes are a pure function of input shapes."""
    rng = np.random.default_rng(seed)
    a = Tensor(rng.standard_normal((m, k)))
    b = Tensor(rng.standard_normal((k, n)))
    assert matmul(a, b).shape == (m, n)
    assert softmax_rows(a).shape == (m, k)
    assert add(a, a).shape == (m, k)
    assert sub(a, a).shape == (m, k)
    assert mul(a, a).shape == (m, k)
    assert sum_all(a).shape == ()


def test_determinism_same_inputs_bitwise(rng):
    x = rng.standard_normal((4, 4))
    first = softmax_rows(Tensor(x)).data
    second = softmax_rows(Tensor(x.copy())).data
    assert np.array_equal(first, second)
