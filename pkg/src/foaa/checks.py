"""Gradient-check suite covering every differentiable operation class.

Each entry builds small random instances, wires up a scalar objective, and
compares reverse-mode gradients against central finite differences. The
CLI's gradcheck subcommand prints one line per class; the test suite runs
the same entries with more instances.

Op functions are resolved through their modules at call time so a test can
inject a corrupted adjoint and watch the suite fail.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import attention, encoders, tensor, train
from .attention import ALL_OPS, FoaaBlockParams, FoaaHeadParams, FusionHeadParams, OuterOpKind
from .encoders import ImageEncoderParams, TabularEncoderParams
from .gradcheck import finite_diff_check
from .tensor import Parameter, Tensor

TOLERANCE = 1e-4
STEP = 1e-5


@dataclass
class CheckResult:
    name: str
    max_error: float
    passed: bool


def _param(rng, shape, name):
    return Parameter(Tensor(rng.standard_normal(shape)), name=name)


def _sq(x: Tensor) -> Tensor:
    return tensor.sum_all(tensor.mul(x, x))


def _check_matmul(rng) -> tuple[Callable, list[Parameter]]:
    a = _param(rng, (3, 4), "a")
    b = _param(rng, (4, 2), "b")
    return lambda: _sq(tensor.matmul(a.value, b.value)), [a, b]


def _check_elementwise(rng):
    a = _param(rng, (3, 3), "a")
    b = _param(rng, (3, 3), "b")

    def f():
        s = tensor.elementwise("add", a.value, b.value)
        s = tensor.elementwise("mul", s, tensor.elementwise("sub", a.value, b.value))
        return _sq(s)

    return f, [a, b]


def _check_softmax(rng):
    x = _param(rng, (3, 5), "x")
    return lambda: _sq(tensor.softmax_rows(x.value)), [x]


def _make_outer_check(kind: OuterOpKind):
    def build(rng):
        q = _param(rng, (5,), "q")
        k = _param(rng, (5,), "k")
        return lambda: _sq(attention.outer_op(kind, q.value, k.value)), [q, k]

    return build


def _make_attention_check(kind: OuterOpKind):
    def build(rng):
        head = FoaaHeadParams.init(4, rng)
        x = Tensor(rng.standard_normal(4))
        return lambda: _sq(attention.attention_score(kind, head, x, x, x)), head.params()

    return build


def _check_sdp(rng):
    head = FoaaHeadParams.init(4, rng)
    xq = Tensor(rng.standard_normal(4))
    xk = Tensor(rng.standard_normal(4))
    xv = Tensor(rng.standard_normal(4))
    return lambda: _sq(attention.sdp_attention(head, xq, xk, xv)), head.params()


def _check_self_block(rng):
    block = FoaaBlockParams.init(4, rng, ops=ALL_OPS)
    x = Tensor(rng.standard_normal(4))
    return lambda: _sq(attention.foaa_self_attention(block, x)), block.params()


def _check_cross_block(rng):
    ab = FoaaBlockParams.init(3, rng, ops=ALL_OPS, prefix="ab")
    ba = FoaaBlockParams.init(3, rng, ops=ALL_OPS, prefix="ba")
    xa = Tensor(rng.standard_normal(3))
    xb = Tensor(rng.standard_normal(3))
    return (
        lambda: _sq(attention.foaa_cross_attention(ab, ba, xa, xb)),
        ab.params() + ba.params(),
    )


def _check_image_encoder(rng):
    enc = ImageEncoderParams.init((1, 6, 6), m=4, rng=rng, widths=(2, 3))
    img = Tensor(rng.standard_normal((1, 6, 6)))
    return lambda: _sq(encoders.encode_image(enc, img)), enc.params()


def _check_tabular_encoder(rng):
    enc = TabularEncoderParams.init(5, 4, rng, hidden=6)
    row = Tensor(rng.standard_normal(5))
    return lambda: _sq(encoders.encode_tabular(enc, row)), enc.params()


def _check_fusion_head(rng):
    head = FusionHeadParams.init(4, 3, rng)
    fused = Tensor(rng.standard_normal(4))
    return lambda: _sq(attention.fusion_head(head, fused)), head.params()


def _check_direct_outer(rng):
    xa = _param(rng, (5,), "xa")
    xb = _param(rng, (5,), "xb")
    return lambda: _sq(attention.direct_outer_fusion(xa.value, xb.value)), [xa, xb]


def _check_cross_entropy(rng):
    w = _param(rng, (4, 3), "w")
    x = Tensor(rng.standard_normal(4))
    label = int(rng.integers(0, 3))

    def f():
        logits = tensor.matmul(tensor.reshape(x, (1, 4)), w.value)
        return train.cross_entropy(tensor.reshape(logits, (3,)), label)

    return f, [w]


CHECKS: list[tuple[str, Callable]] = [
    ("matmul", _check_matmul),
    ("elementwise", _check_elementwise),
    ("softmax_rows", _check_softmax),
    ("outer_add", _make_outer_check(OuterOpKind.ADD)),
    ("outer_sub", _make_outer_check(OuterOpKind.SUB)),
    ("outer_mul", _make_outer_check(OuterOpKind.MUL)),
    ("outer_div", _make_outer_check(OuterOpKind.DIV)),
    ("attention_add", _make_attention_check(OuterOpKind.ADD)),
    ("attention_sub", _make_attention_check(OuterOpKind.SUB)),
    ("attention_mul", _make_attention_check(OuterOpKind.MUL)),
    ("attention_div", _make_attention_check(OuterOpKind.DIV)),
    ("sdp_attention", _check_sdp),
    ("self_block", _check_self_block),
    ("cross_block", _check_cross_block),
    ("image_encoder", _check_image_encoder),
    ("tabular_encoder", _check_tabular_encoder),
    ("fusion_head", _check_fusion_head),
    ("direct_outer_fusion", _check_direct_outer),
    ("cross_entropy", _check_cross_entropy),
]


def gradient_check_suite(instances: int = 3, seed: int = 0) -> list[CheckResult]:
    """Run every check class on fresh random instances; collect worst errors."""
    results = []
    for check_id, (name, build) in enumerate(CHECKS):
        worst = 0.0
        for i in range(instances):
            rng = np.random.default_rng([seed, check_id, i])
            f, params = build(rng)
            err = finite_diff_check(f, params, h=STEP)
            worst = max(worst, err)
        results.append(CheckResult(name=name, max_error=worst, passed=worst <= TOLERANCE))
    return results
