"""Outer-arithmetic attention over flattened embeddings.

The score matrix of standard attention is replaced by an outer arithmetic
combination of the projected query and key vectors: entry (i, j) of the
score is ``q_i op k_j`` for op in {add, sub, mul, div}. Each operator keeps
its own projection triplet. Inputs are single flattened vectors of length
m (or batches of them), never token sequences, so scores are always m x m.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigurationError, DimensionError
from .tensor import (
    Parameter,
    Tensor,
    add,
    add_bias,
    matmul,
    mean_last,
    record,
    relu,
    reshape,
    scale,
    softmax_rows,
    transpose,
    uniform_init,
)


class OuterOpKind(Enum):
    """The four score operators."""

    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    DIV = "div"


ALL_OPS: tuple[OuterOpKind, ...] = (
    OuterOpKind.ADD,
    OuterOpKind.SUB,
    OuterOpKind.MUL,
    OuterOpKind.DIV,
)

DEFAULT_DIV_EPSILON = 1e-6


def _guard_denominator(k: np.ndarray, eps: float) -> np.ndarray:
    # entries inside (-eps, eps) are clamped to +-eps; sign(0) counts as +1
    sign = np.where(k >= 0.0, 1.0, -1.0)
    return np.where(np.abs(k) >= eps, k, eps * sign)


def outer_op(kind: OuterOpKind, q: Tensor, k: Tensor, eps: float = DEFAULT_DIV_EPSILON) -> Tensor:
    """Outer add/sub/mul/div of two same-length vectors (or batches of them).

    For inputs of shape (..., m) the result has shape (..., m, m) with entry
    (..., i, j) = q_i op k_j. Division guards the denominator at +-eps so
    outputs and gradients stay finite for keys containing exact zeros; the
    clamped region contributes zero gradient to the key.
    """
    q = q if isinstance(q, Tensor) else Tensor(q)
    k = k if isinstance(k, Tensor) else Tensor(k)
    if q.shape != k.shape or q.ndim < 1:
        raise DimensionError(f"outer_op needs same-shape vectors, got {q.shape} vs {k.shape}")
    qe = q.data[..., :, None]
    ke = k.data[..., None, :]
    if kind is OuterOpKind.ADD:
        return record(
            "outer_add",
            (q, k),
            qe + ke,
            (lambda g: g.sum(axis=-1), lambda g: g.sum(axis=-2)),
        )
    if kind is OuterOpKind.SUB:
        return record(
            "outer_sub",
            (q, k),
            qe - ke,
            (lambda g: g.sum(axis=-1), lambda g: -g.sum(axis=-2)),
        )
    if kind is OuterOpKind.MUL:
        return record(
            "outer_mul",
            (q, k),
            qe * ke,
            (lambda g: (g * ke).sum(axis=-1), lambda g: (g * qe).sum(axis=-2)),
        )
    if kind is OuterOpKind.DIV:
        if eps <= 0.0:
            raise ConfigurationError(f"div guard epsilon must be positive, got {eps}")
        kg = _guard_denominator(ke, eps)
        unclamped = np.abs(ke) >= eps
        return record(
            "outer_div",
            (q, k),
            qe / kg,
            (
                lambda g: (g / kg).sum(axis=-1),
                lambda g: -(g * qe / (kg * kg) * unclamped).sum(axis=-2),
            ),
        )
    raise ConfigurationError(f"unknown outer op kind {kind!r}")


def attend(a: Tensor, v: Tensor) -> Tensor:
    """Apply attention weights (..., m, m) to a value vector (..., m)."""
    a = a if isinstance(a, Tensor) else Tensor(a)
    v = v if isinstance(v, Tensor) else Tensor(v)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2] or a.shape[:-1] != v.shape:
        raise DimensionError(f"attend needs (..., m, m) and (..., m), got {a.shape} and {v.shape}")
    ad, vd = a.data, v.data
    out = np.matmul(ad, vd[..., None])[..., 0]
    return record(
        "attend",
        (a, v),
        out,
        (
            lambda g: g[..., :, None] * vd[..., None, :],
            lambda g: np.matmul(np.swapaxes(ad, -1, -2), g[..., None])[..., 0],
        ),
    )


@dataclass
class FoaaHeadParams:
    """Q/K/V projection triplet for one score operator in one direction.

    All three matrices are square m x m; a vector x projects as ``W @ x``.
    """

    w_q: Parameter
    w_k: Parameter
    w_v: Parameter

    def __post_init__(self):
        shapes = {p.value.shape for p in (self.w_q, self.w_k, self.w_v)}
        if len(shapes) != 1:
            raise ConfigurationError(f"projection shapes differ: {sorted(shapes)}")
        (shape,) = shapes
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ConfigurationError(f"projections must be square, got {shape}")

    @property
    def dim(self) -> int:
        return self.w_q.value.shape[0]

    @classmethod
    def init(cls, m: int, rng: np.random.Generator, prefix: str = "head") -> "FoaaHeadParams":
        return cls(
            w_q=Parameter(Tensor(uniform_init(rng, (m, m), m)), name=f"{prefix}.w_q"),
            w_k=Parameter(Tensor(uniform_init(rng, (m, m), m)), name=f"{prefix}.w_k"),
            w_v=Parameter(Tensor(uniform_init(rng, (m, m), m)), name=f"{prefix}.w_v"),
        )

    def params(self) -> list[Parameter]:
        return [self.w_q, self.w_k, self.w_v]


@dataclass
class FoaaBlockParams:
    """One projection triplet per enabled operator, plus the division guard."""

    heads: dict[OuterOpKind, FoaaHeadParams]
    dim: int
    div_epsilon: float = DEFAULT_DIV_EPSILON
    enabled_ops: tuple[OuterOpKind, ...] = ALL_OPS

    def __post_init__(self):
        if self.div_epsilon <= 0.0:
            raise ConfigurationError(f"div_epsilon must be positive, got {self.div_epsilon}")
        for kind in self.enabled_ops:
            if kind not in self.heads:
                raise ConfigurationError(f"enabled op {kind} has no projection head")
            if self.heads[kind].dim != self.dim:
                raise ConfigurationError(
                    f"head for {kind} has dim {self.heads[kind].dim}, block dim is {self.dim}"
                )

    @classmethod
    def init(
        cls,
        m: int,
        rng: np.random.Generator,
        ops: tuple[OuterOpKind, ...] = ALL_OPS,
        div_epsilon: float = DEFAULT_DIV_EPSILON,
        prefix: str = "block",
    ) -> "FoaaBlockParams":
        heads = {kind: FoaaHeadParams.init(m, rng, f"{prefix}.{kind.value}") for kind in ops}
        return cls(heads=heads, dim=m, div_epsilon=div_epsilon, enabled_ops=tuple(ops))

    def params(self) -> list[Parameter]:
        out: list[Parameter] = []
        for kind in self.enabled_ops:
            out.extend(self.heads[kind].params())
        return out


def _as_rows(x: Tensor) -> tuple[Tensor, bool]:
    """Lift an m-vector to a 1 x m row batch; report whether it was single."""
    if x.ndim == 1:
        return reshape(x, (1, x.shape[0])), True
    if x.ndim == 2:
        return x, False
    raise DimensionError(f"expected an m-vector or a batch of them, got shape {x.shape}")


def _project(x: Tensor, w: Parameter) -> Tensor:
    # rows of the result are W @ x per sample
    return matmul(x, transpose(w.value))


def attention_weights(
    kind: OuterOpKind,
    params: FoaaHeadParams,
    x_q: Tensor,
    x_k: Tensor,
    eps: float = DEFAULT_DIV_EPSILON,
) -> Tensor:
    """The softmaxed m x m attention matrix, exposed for inspection and tests."""
    xq, single = _as_rows(x_q if isinstance(x_q, Tensor) else Tensor(x_q))
    xk, _ = _as_rows(x_k if isinstance(x_k, Tensor) else Tensor(x_k))
    m = params.dim
    q = _project(xq, params.w_q)
    k = _project(xk, params.w_k)
    s = scale(outer_op(kind, q, k, eps), 1.0 / math.sqrt(m))
    a = softmax_rows(s)
    return reshape(a, (m, m)) if single else a


def attention_score(
    kind: OuterOpKind,
    params: FoaaHeadParams,
    x_q: Tensor,
    x_k: Tensor,
    x_v: Tensor,
    eps: float = DEFAULT_DIV_EPSILON,
) -> Tensor:
    """One outer-arithmetic attention pass over flattened embeddings.

    Projects q = W_q x_q, k = W_k x_k, v = W_v x_v, builds the m x m outer
    score, divides by sqrt(m), row-softmaxes over the key index, and applies
    the weights to v. Accepts (m,) vectors or (b, m) batches.
    """
    x_q = x_q if isinstance(x_q, Tensor) else Tensor(x_q)
    x_k = x_k if isinstance(x_k, Tensor) else Tensor(x_k)
    x_v = x_v if isinstance(x_v, Tensor) else Tensor(x_v)
    m = params.dim
    for name, x in (("query", x_q), ("key", x_k), ("value", x_v)):
        if x.shape[-1] != m:
            raise DimensionError(f"{name} input has dim {x.shape[-1]}, projections are {m} x {m}")
    xq, single = _as_rows(x_q)
    xk, _ = _as_rows(x_k)
    xv, _ = _as_rows(x_v)
    q = _project(xq, params.w_q)
    k = _project(xk, params.w_k)
    v = _project(xv, params.w_v)
    s = scale(outer_op(kind, q, k, eps), 1.0 / math.sqrt(m))
    a = softmax_rows(s)
    out = attend(a, v)
    return reshape(out, (m,)) if single else out


def sdp_attention(
    params: FoaaHeadParams,
    x_q: Tensor,
    x_k: Tensor,
    x_v: Tensor,
) -> Tensor:
    """Scaled dot-product baseline: softmax(q k^T / sqrt(m)) v.

    NOTE: for single flattened vectors the score matrix q k^T is exactly the
    outer product of the projected vectors, so this baseline coincides with
    ``attention_score(OuterOpKind.MUL, ...)`` by definition. It exists as its
    own entry point (and ablation row) to make the baseline explicit.
    """
    return attention_score(OuterOpKind.MUL, params, x_q, x_k, x_v)


def _sum_tensors(parts: list[Tensor]) -> Tensor:
    total = parts[0]
    for p in parts[1:]:
        total = add(total, p)
    return total


def foaa_self_attention(block: FoaaBlockParams, x: Tensor) -> Tensor:
    """Self-attention: q, k, v all come from one modality's embedding.

    The per-operator attended vectors and the input itself (skip connection)
    are combined by element-wise sum.
    """
    if not block.enabled_ops:
        raise ConfigurationError("self-attention block has no enabled operators")
    x = x if isinstance(x, Tensor) else Tensor(x)
    parts = [
        attention_score(kind, block.heads[kind], x, x, x, eps=block.div_epsilon)
        for kind in block.enabled_ops
    ]
    parts.append(x)
    return _sum_tensors(parts)


DIRECTION_AB = "ab"
DIRECTION_BA = "ba"
BOTH_DIRECTIONS: tuple[str, ...] = (DIRECTION_AB, DIRECTION_BA)


def foaa_cross_attention(
    block_ab: FoaaBlockParams,
    block_ba: FoaaBlockParams,
    x_a: Tensor,
    x_b: Tensor,
    directions: tuple[str, ...] = BOTH_DIRECTIONS,
) -> Tensor:
    """Bidirectional cross-attention between two modality embeddings.

    Direction "ab" queries with x_a over keys/values from x_b; "ba" swaps the
    roles. Values come from the branch being attended over. All attended
    vectors plus the two skip connections are element-wise summed into one
    m-vector. Restrict ``directions`` for the unidirectional variant.
    """
    x_a = x_a if isinstance(x_a, Tensor) else Tensor(x_a)
    x_b = x_b if isinstance(x_b, Tensor) else Tensor(x_b)
    if x_a.shape != x_b.shape:
        raise DimensionError(f"branch embeddings differ in shape: {x_a.shape} vs {x_b.shape}")
    for d in directions:
        if d not in BOTH_DIRECTIONS:
            raise ConfigurationError(f"unknown direction {d!r}, expected subset of {BOTH_DIRECTIONS}")
    if not directions:
        raise ConfigurationError("cross-attention needs at least one direction")
    parts: list[Tensor] = []
    if DIRECTION_AB in directions:
        if not block_ab.enabled_ops:
            raise ConfigurationError("direction ab has no enabled operators")
        for kind in block_ab.enabled_ops:
            parts.append(
                attention_score(kind, block_ab.heads[kind], x_a, x_b, x_b, eps=block_ab.div_epsilon)
            )
    if DIRECTION_BA in directions:
        if not block_ba.enabled_ops:
            raise ConfigurationError("direction ba has no enabled operators")
        for kind in block_ba.enabled_ops:
            parts.append(
                attention_score(kind, block_ba.heads[kind], x_b, x_a, x_a, eps=block_ba.div_epsilon)
            )
    parts.append(x_a)
    parts.append(x_b)
    return _sum_tensors(parts)


@dataclass
class FusionHeadParams:
    """Dense integration layer plus the final classifier.

    ``fc`` is m x m and applies as fc @ x; ``classifier`` is m x num_classes
    applied as h @ classifier + bias, so classifier rows index features and
    columns index classes.
    """

    fc: Parameter
    classifier: Parameter
    bias: Parameter

    def __post_init__(self):
        m_fc = self.fc.value.shape
        m_cls = self.classifier.value.shape
        if len(m_fc) != 2 or m_fc[0] != m_fc[1]:
            raise ConfigurationError(f"fc must be square, got {m_fc}")
        if len(m_cls) != 2 or m_cls[0] != m_fc[1]:
            raise ConfigurationError(
                f"classifier input dim {m_cls[0] if len(m_cls) == 2 else m_cls} != fused dim {m_fc[1]}"
            )
        if self.bias.value.shape != (m_cls[1],):
            raise ConfigurationError(f"bias shape {self.bias.value.shape} != ({m_cls[1]},)")

    @property
    def num_classes(self) -> int:
        return self.classifier.value.shape[1]

    @classmethod
    def init(
        cls, m: int, num_classes: int, rng: np.random.Generator, prefix: str = "head"
    ) -> "FusionHeadParams":
        return cls(
            fc=Parameter(Tensor(uniform_init(rng, (m, m), m)), name=f"{prefix}.fc"),
            classifier=Parameter(Tensor(uniform_init(rng, (m, num_classes), m)), name=f"{prefix}.classifier"),
            bias=Parameter(Tensor(np.zeros(num_classes)), name=f"{prefix}.bias"),
        )

    def params(self) -> list[Parameter]:
        return [self.fc, self.classifier, self.bias]


def fusion_hidden(params: FusionHeadParams, fused: Tensor) -> Tensor:
    """ReLU(fc @ fused): the integrated representation fed to the classifier."""
    fused = fused if isinstance(fused, Tensor) else Tensor(fused)
    m = params.fc.value.shape[0]
    if fused.shape[-1] != m:
        raise DimensionError(f"fused vector has dim {fused.shape[-1]}, fc expects {m}")
    rows, single = _as_rows(fused)
    h = relu(matmul(rows, transpose(params.fc.value)))
    return reshape(h, (m,)) if single else h


def fusion_head(params: FusionHeadParams, fused: Tensor) -> Tensor:
    """Logits = classifier(ReLU(fc @ fused)) + bias."""
    h = fusion_hidden(params, fused)
    rows, single = _as_rows(h)
    logits = add_bias(matmul(rows, params.classifier.value), params.bias.value)
    return reshape(logits, (params.num_classes,)) if single else logits


def direct_outer_fusion(
    x_a: Tensor,
    x_b: Tensor,
    ops: tuple[OuterOpKind, ...] = ALL_OPS,
    eps: float = DEFAULT_DIV_EPSILON,
) -> Tensor:
    """Outer operators applied straight to the embeddings, no attention.

    Each operator's m x m matrix is reduced to its vector of row means and
    the per-operator vectors are element-wise summed. This is a simplified
    direct-outer-fusion baseline, not a faithful replication of any larger
    outer-fusion architecture.
    """
    x_a = x_a if isinstance(x_a, Tensor) else Tensor(x_a)
    x_b = x_b if isinstance(x_b, Tensor) else Tensor(x_b)
    if x_a.shape != x_b.shape:
        raise DimensionError(f"direct fusion needs equal shapes, got {x_a.shape} vs {x_b.shape}")
    if not ops:
        raise ConfigurationError("direct fusion needs at least one operator")
    parts = [mean_last(outer_op(kind, x_a, x_b, eps)) for kind in ops]
    return _sum_tensors(parts)
