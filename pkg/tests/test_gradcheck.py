import numpy as np
import pytest

from foaa.attention import FoaaHeadParams, OuterOpKind, attention_score, outer_op
from foaa.errors import EvaluationError
from foaa.gradcheck import finite_diff_check
from foaa.tensor import Parameter, Tensor, matmul, mul, reshape, sum_all
from foaa.train import cross_entropy


def test_scalar_square():
    w = Parameter(Tensor([3.0]), name="w")

    def f():
        return sum_all(mul(w.value, w.value))

    # analytic gradient 6 must match the central difference within 1e-7
    assert finite_diff_check(f, [w], h=1e-5) <= 1e-7


def test_linear_layer_cross_entropy(rng):
    w = Parameter(Tensor(rng.standard_normal((5, 3))), name="w")
    x = Tensor(rng.standard_normal((1, 5)))

    def f():
        return cross_entropy(reshape(matmul(x, w.value), (3,)), 2)

    assert finite_diff_check(f, [w], h=1e-5) <= 1e-6


def test_outer_division_with_guard(rng):
    head = FoaaHeadParams.init(4, rng)
    x = Tensor(rng.standard_normal(4))

    def f():
        out = attention_score(OuterOpKind.DIV, head, x, x, x)
        return sum_all(mul(out, out))

    assert finite_diff_check(f, head.params(), h=1e-5) <= 1e-4


def test_guard_keeps_gradients_finite_at_zero_keys():
    q = Parameter(Tensor([1.0, -2.0]), name="q")
    k = Parameter(Tensor([0.0, 0.0]), name="k")

    def f():
        return sum_all(outer_op(OuterOpKind.DIV, q.value, k.value, eps=1e-6))

    err = finite_diff_check(f, [q], h=1e-8)
    assert np.isfinite(err)
    assert err <= 1e-4


def test_nonfinite_function_rejected():
    w = Parameter(Tensor([0.0]), name="w")

    def f():
        bad = Tensor(np.array([np.inf]))
        return sum_all(mul(w.value, bad))

    with pytest.raises(EvaluationError):
        finite_diff_check(f, [w])
