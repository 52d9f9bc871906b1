"""The ablation-matrix architectures, one per results-table row.

Every model shares the same input heads and fusion head; rows differ only
in how the two embeddings are (or are not) combined:

  mlp / cnn             single modality straight into the head
  cnn_standard_sa       image + scaled dot-product self-attention + skip
  cnn_foaa_sa           image + all-operator outer self-attention + skip
  cross_<ops>           bidirectional outer cross-attention, chosen operators
  direct_outer          outer operators applied directly, no attention
  foaa                  all four operators, bidirectional cross-attention
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attention import (
    ALL_OPS,
    BOTH_DIRECTIONS,
    FoaaBlockParams,
    FoaaHeadParams,
    FusionHeadParams,
    OuterOpKind,
    direct_outer_fusion,
    foaa_cross_attention,
    foaa_self_attention,
    fusion_head,
    fusion_hidden,
    sdp_attention,
)
from .encoders import ImageEncoderParams, TabularEncoderParams, encode_image, encode_tabular
from .errors import ConfigurationError, ContractError, FormatError
from .io import assign_params, load_params, save_params
from .tensor import Parameter, Tensor, add

ARCH_ORDER: tuple[str, ...] = (
    "mlp",
    "cnn",
    "cnn_standard_sa",
    "cnn_foaa_sa",
    "cross_oa",
    "cross_op",
    "cross_os",
    "cross_od",
    "cross_oa_op",
    "cross_oa_op_os",
    "direct_outer",
    "foaa",
)

_CROSS_OPS: dict[str, tuple[OuterOpKind, ...]] = {
    "cross_oa": (OuterOpKind.ADD,),
    "cross_op": (OuterOpKind.MUL,),
    "cross_os": (OuterOpKind.SUB,),
    "cross_od": (OuterOpKind.DIV,),
    "cross_oa_op": (OuterOpKind.ADD, OuterOpKind.MUL),
    "cross_oa_op_os": (OuterOpKind.ADD, OuterOpKind.MUL, OuterOpKind.SUB),
    "foaa": ALL_OPS,
}


@dataclass
class ArchConfig:
    """Names one ablation row plus the shared dimensioning knobs."""

    arch: str
    m: int = 64
    num_classes: int = 2
    directions: tuple[str, ...] = BOTH_DIRECTIONS
    conv_widths: tuple[int, int] = (4, 8)
    tabular_hidden: int = 128
    dropout_p: float = 0.25
    div_epsilon: float = 1e-6
    freeze_image_stages: tuple[bool, bool] = (False, False)

    def __post_init__(self):
        if self.arch not in ARCH_ORDER:
            raise ConfigurationError(
                f"unknown arch {self.arch!r}; valid rows: {', '.join(ARCH_ORDER)}"
            )
        self.directions = tuple(self.directions)


@dataclass
class Model:
    """Parameter container plus the forward pass for one architecture."""

    config: ArchConfig
    image_encoder: ImageEncoderParams | None
    tabular_encoder: TabularEncoderParams | None
    sdp_head: FoaaHeadParams | None
    self_block: FoaaBlockParams | None
    cross_ab: FoaaBlockParams | None
    cross_ba: FoaaBlockParams | None
    head: FusionHeadParams

    @property
    def arch(self) -> str:
        return self.config.arch

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    def parameters(self) -> list[Parameter]:
        out: list[Parameter] = []
        if self.image_encoder is not None:
            out.extend(self.image_encoder.params())
        if self.tabular_encoder is not None:
            out.extend(self.tabular_encoder.params())
        if self.sdp_head is not None:
            out.extend(self.sdp_head.params())
        if self.self_block is not None:
            out.extend(self.self_block.params())
        if self.cross_ab is not None:
            out.extend(self.cross_ab.params())
        if self.cross_ba is not None:
            out.extend(self.cross_ba.params())
        out.extend(self.head.params())
        return out

    def fused(self, images: Tensor, tabular: Tensor, training: bool = False, rng=None) -> Tensor:
        """The aggregated m-vector (or batch) entering the fusion head."""
        arch = self.arch
        if arch == "mlp":
            return encode_tabular(self.tabular_encoder, tabular, training=training, rng=rng)
        if arch == "cnn":
            return encode_image(self.image_encoder, images)
        if arch == "cnn_standard_sa":
            x = encode_image(self.image_encoder, images)
            return add(x, sdp_attention(self.sdp_head, x, x, x))
        if arch == "cnn_foaa_sa":
            x = encode_image(self.image_encoder, images)
            return foaa_self_attention(self.self_block, x)
        x_a = encode_image(self.image_encoder, images)
        x_b = encode_tabular(self.tabular_encoder, tabular, training=training, rng=rng)
        if arch == "direct_outer":
            return direct_outer_fusion(x_a, x_b, eps=self.config.div_epsilon)
        return foaa_cross_attention(
            self.cross_ab, self.cross_ba, x_a, x_b, directions=self.config.directions
        )

    def forward(self, images: Tensor, tabular: Tensor, training: bool = False, rng=None) -> Tensor:
        return fusion_head(self.head, self.fused(images, tabular, training=training, rng=rng))

    def embed(self, images: Tensor, tabular: Tensor) -> Tensor:
        """Integrated representation after the fusion FC layer (eval mode)."""
        return fusion_hidden(self.head, self.fused(images, tabular, training=False))


def _probe_shapes(samples) -> tuple[tuple[int, int, int], int]:
    first = samples[0]
    return tuple(first.image.shape), int(first.tabular.size)


def build_model(config: ArchConfig, samples, rng: np.random.Generator) -> Model:
    """Instantiate an architecture sized from the dataset's first sample."""
    samples = list(samples)
    if not samples:
        raise ConfigurationError("cannot size a model from an empty dataset")
    image_shape, tabular_dim = _probe_shapes(samples)
    m = config.m
    arch = config.arch

    needs_image = arch != "mlp"
    needs_tabular = arch == "mlp" or arch in _CROSS_OPS or arch == "direct_outer"

    image_encoder = (
        ImageEncoderParams.init(
            image_shape,
            m,
            rng,
            widths=config.conv_widths,
            freeze=config.freeze_image_stages,
        )
        if needs_image
        else None
    )
    tabular_encoder = (
        TabularEncoderParams.init(
            tabular_dim, m, rng, hidden=config.tabular_hidden, dropout_p=config.dropout_p
        )
        if needs_tabular
        else None
    )

    sdp_head = FoaaHeadParams.init(m, rng, prefix="sdp") if arch == "cnn_standard_sa" else None
    self_block = (
        FoaaBlockParams.init(m, rng, ops=ALL_OPS, div_epsilon=config.div_epsilon, prefix="self")
        if arch == "cnn_foaa_sa"
        else None
    )
    cross_ab = cross_ba = None
    if arch in _CROSS_OPS:
        ops = _CROSS_OPS[arch]
        cross_ab = FoaaBlockParams.init(
            m, rng, ops=ops, div_epsilon=config.div_epsilon, prefix="cross_ab"
        )
        cross_ba = FoaaBlockParams.init(
            m, rng, ops=ops, div_epsilon=config.div_epsilon, prefix="cross_ba"
        )

    head = FusionHeadParams.init(m, config.num_classes, rng, prefix="head")
    return Model(
        config=config,
        image_encoder=image_encoder,
        tabular_encoder=tabular_encoder,
        sdp_head=sdp_head,
        self_block=self_block,
        cross_ab=cross_ab,
        cross_ba=cross_ba,
        head=head,
    )


MODEL_MANIFEST = "model_manifest.json"


def save_model(model: Model, directory: str | Path) -> None:
    """Parameters as FOAT files plus a JSON description for rebuilding."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    desc = {
        "arch": model.config.arch,
        "m": model.config.m,
        "num_classes": model.config.num_classes,
        "directions": list(model.config.directions),
        "conv_widths": list(model.config.conv_widths),
        "tabular_hidden": model.config.tabular_hidden,
        "dropout_p": model.config.dropout_p,
        "div_epsilon": model.config.div_epsilon,
        "image_shape": list(model.image_encoder.input_shape) if model.image_encoder else None,
        "tabular_dim": model.tabular_encoder.d_in if model.tabular_encoder else None,
    }
    (directory / MODEL_MANIFEST).write_text(json.dumps(desc, indent=2) + "\n", encoding="utf-8")
    save_params(directory, model.parameters())


def load_model(directory: str | Path) -> Model:
    directory = Path(directory)
    manifest = directory / MODEL_MANIFEST
    if not manifest.exists():
        raise FormatError(f"no {MODEL_MANIFEST} in {directory}")
    desc = json.loads(manifest.read_text(encoding="utf-8"))
    config = ArchConfig(
        arch=desc["arch"],
        m=desc["m"],
        num_classes=desc["num_classes"],
        directions=tuple(desc["directions"]),
        conv_widths=tuple(desc["conv_widths"]),
        tabular_hidden=desc["tabular_hidden"],
        dropout_p=desc["dropout_p"],
        div_epsilon=desc["div_epsilon"],
    )
    image_shape = desc["image_shape"]
    tabular_dim = desc["tabular_dim"]
    # placeholder dims are only read for encoders the arch actually builds
    probe = _ShapeProbe(
        image=np.zeros(image_shape or (1, 4, 4)),
        tabular=np.zeros(tabular_dim or 1),
    )
    model = build_model(config, [probe], np.random.default_rng(0))
    assign_params(model.parameters(), load_params(directory))
    return model


@dataclass
class _ShapeProbe:
    image: np.ndarray
    tabular: np.ndarray
    label: int = 0
