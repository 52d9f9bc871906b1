"""Toy per-modality input heads emitting length-m flattened embeddings.

The image head is a two-stage CNN (3x3 conv, ReLU, 2x2 average pool) with a
final dense projection; the tabular head is a small MLP with dropout. Both
end in a linear layer so embeddings keep their sign structure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, DimensionError
from .tensor import (
    Parameter,
    Tensor,
    add_bias,
    matmul,
    record,
    relu,
    reshape,
    uniform_init,
)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """3x3-style convolution, stride 1, zero 'same' padding, via im2col.

    x: (n, ic, h, w); weight: (oc, ic, kh, kw) with odd kh, kw; bias: (oc,).
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim != 4 or weight.ndim != 4 or bias.ndim != 1:
        raise DimensionError(
            f"conv2d needs x(n,ic,h,w), weight(oc,ic,kh,kw), bias(oc,), got "
            f"{x.shape}, {weight.shape}, {bias.shape}"
        )
    n, ic, h, w = x.shape
    oc, ic2, kh, kw = weight.shape
    if ic != ic2 or bias.shape[0] != oc:
        raise DimensionError(f"conv2d channel mismatch: x {x.shape} vs weight {weight.shape}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError(f"conv2d needs odd kernels for same padding, got {kh}x{kw}")
    ph, pw = (kh - 1) // 2, (kw - 1) // 2

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # (n, ic, h, w, kh, kw)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n, h * w, ic * kh * kw)
    wmat = weight.data.reshape(oc, ic * kh * kw)
    out = (cols @ wmat.T + bias.data).transpose(0, 2, 1).reshape(n, oc, h, w)

    def grad_x(g):
        gm = g.transpose(0, 2, 3, 1).reshape(n, h * w, oc)
        dcols = (gm @ wmat).reshape(n, h, w, ic, kh, kw)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + h, j : j + w] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, ph : ph + h, pw : pw + w]

    def grad_w(g):
        gm = g.transpose(0, 2, 3, 1).reshape(n * h * w, oc)
        return (gm.T @ cols.reshape(n * h * w, ic * kh * kw)).reshape(weight.shape)

    def grad_b(g):
        return g.sum(axis=(0, 2, 3))

    return record("conv2d", (x, weight, bias), out, (grad_x, grad_w, grad_b))


def avg_pool2(x: Tensor) -> Tensor:
    """2x2 average pooling with stride 2; odd trailing rows/cols are dropped."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"avg_pool2 needs (n,c,h,w), got {x.shape}")
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    if h2 < 1 or w2 < 1:
        raise DimensionError(f"avg_pool2 needs spatial dims >= 2, got {h}x{w}")
    out = x.data[:, :, : 2 * h2, : 2 * w2].reshape(n, c, h2, 2, w2, 2).mean(axis=(3, 5))

    def grad_x(g):
        dx = np.zeros(x.shape)
        dx[:, :, : 2 * h2, : 2 * w2] = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) / 4.0
        return dx

    return record("avg_pool2", (x,), out, (grad_x,))


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; callers apply it only in training mode."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout probability must be in [0, 1), got {p}")
    if p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return record("dropout", (x,), x.data * mask, (lambda g: g * mask,))


@dataclass
class ConvStage:
    weight: Parameter  # (oc, ic, 3, 3)
    bias: Parameter  # (oc,)

    @classmethod
    def init(cls, ic: int, oc: int, rng: np.random.Generator, prefix: str) -> "ConvStage":
        fan_in = ic * 9
        return cls(
            weight=Parameter(Tensor(uniform_init(rng, (oc, ic, 3, 3), fan_in)), name=f"{prefix}.weight"),
            bias=Parameter(Tensor(np.zeros(oc)), name=f"{prefix}.bias"),
        )

    def set_frozen(self, flag: bool) -> None:
        self.weight.frozen = flag
        self.bias.frozen = flag

    def params(self) -> list[Parameter]:
        return [self.weight, self.bias]


@dataclass
class ImageEncoderParams:
    """Two conv/ReLU/pool stages plus a dense projection to m.

    Built for a fixed input shape; the dense layer is sized from the
    flattened map after the second pool, so any configured spatial size maps
    to exactly m outputs. Freeze flags per stage exclude that stage from
    optimizer updates.
    """

    stage1: ConvStage
    stage2: ConvStage
    proj: Parameter  # (flat_dim, m)
    proj_bias: Parameter  # (m,)
    input_shape: tuple[int, int, int]
    m: int

    @staticmethod
    def _pooled_shape(input_shape: tuple[int, int, int], widths: tuple[int, int]) -> tuple[int, int, int]:
        c, h, w = input_shape
        if h < 4 or w < 4:
            raise DimensionError(f"image encoder needs spatial dims >= 4, got {h}x{w}")
        h1, w1 = h // 2, w // 2
        h2, w2 = h1 // 2, w1 // 2
        return widths[1], h2, w2

    @classmethod
    def init(
        cls,
        input_shape: tuple[int, int, int],
        m: int,
        rng: np.random.Generator,
        widths: tuple[int, int] = (4, 8),
        freeze: tuple[bool, bool] = (False, False),
        prefix: str = "image_encoder",
    ) -> "ImageEncoderParams":
        c, _, _ = input_shape
        oc2, h2, w2 = cls._pooled_shape(input_shape, widths)
        flat = oc2 * h2 * w2
        stage1 = ConvStage.init(c, widths[0], rng, f"{prefix}.stage1")
        stage2 = ConvStage.init(widths[0], widths[1], rng, f"{prefix}.stage2")
        stage1.set_frozen(freeze[0])
        stage2.set_frozen(freeze[1])
        return cls(
            stage1=stage1,
            stage2=stage2,
            proj=Parameter(Tensor(uniform_init(rng, (flat, m), flat)), name=f"{prefix}.proj"),
            proj_bias=Parameter(Tensor(np.zeros(m)), name=f"{prefix}.proj_bias"),
            input_shape=tuple(input_shape),
            m=m,
        )

    def params(self) -> list[Parameter]:
        return self.stage1.params() + self.stage2.params() + [self.proj, self.proj_bias]


def encode_image(params: ImageEncoderParams, img: Tensor) -> Tensor:
    """Deterministic m-vector embedding of an image (or (b,c,h,w) batch)."""
    img = img if isinstance(img, Tensor) else Tensor(img)
    single = img.ndim == 3
    if single:
        img = reshape(img, (1,) + img.shape)
    if img.ndim != 4:
        raise DimensionError(f"encode_image needs (c,h,w) or (b,c,h,w), got {img.shape}")
    if tuple(img.shape[1:]) != params.input_shape:
        raise DimensionError(
            f"image shape {tuple(img.shape[1:])} does not match encoder input {params.input_shape}"
        )
    b = img.shape[0]
    h = avg_pool2(relu(conv2d(img, params.stage1.weight.value, params.stage1.bias.value)))
    h = avg_pool2(relu(conv2d(h, params.stage2.weight.value, params.stage2.bias.value)))
    flat = reshape(h, (b, h.size // b))
    out = add_bias(matmul(flat, params.proj.value), params.proj_bias.value)
    return reshape(out, (params.m,)) if single else out


@dataclass
class TabularEncoderParams:
    """Dense d_in -> hidden -> m head with ReLU and dropout."""

    w1: Parameter  # (d_in, hidden)
    b1: Parameter  # (hidden,)
    w2: Parameter  # (hidden, m)
    b2: Parameter  # (m,)
    dropout_p: float = 0.25

    @property
    def d_in(self) -> int:
        return self.w1.value.shape[0]

    @property
    def m(self) -> int:
        return self.w2.value.shape[1]

    @classmethod
    def init(
        cls,
        d_in: int,
        m: int,
        rng: np.random.Generator,
        hidden: int = 128,
        dropout_p: float = 0.25,
        prefix: str = "tabular_encoder",
    ) -> "TabularEncoderParams":
        return cls(
            w1=Parameter(Tensor(uniform_init(rng, (d_in, hidden), d_in)), name=f"{prefix}.w1"),
            b1=Parameter(Tensor(np.zeros(hidden)), name=f"{prefix}.b1"),
            w2=Parameter(Tensor(uniform_init(rng, (hidden, m), hidden)), name=f"{prefix}.w2"),
            b2=Parameter(Tensor(np.zeros(m)), name=f"{prefix}.b2"),
            dropout_p=dropout_p,
        )

    def params(self) -> list[Parameter]:
        return [self.w1, self.b1, self.w2, self.b2]


def encode_tabular(
    params: TabularEncoderParams,
    row: Tensor,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """m-vector embedding of a feature row (or (b, d_in) batch).

    Dropout fires only in training mode, which then requires an rng;
    evaluation is deterministic.
    """
    row = row if isinstance(row, Tensor) else Tensor(row)
    single = row.ndim == 1
    if single:
        row = reshape(row, (1, row.shape[0]))
    if row.ndim != 2 or row.shape[1] != params.d_in:
        raise DimensionError(f"tabular input width {row.shape[-1]} != encoder d_in {params.d_in}")
    h = relu(add_bias(matmul(row, params.w1.value), params.b1.value))
    if training and params.dropout_p > 0.0:
        if rng is None:
            raise ContractError("training-mode dropout needs an rng")
        h = dropout(h, params.dropout_p, rng)
    out = add_bias(matmul(h, params.w2.value), params.b2.value)
    return reshape(out, (params.m,)) if single else out
