"""Flattened outer-arithmetic attention for multimodal fusion.

A small numpy library: a tape-based reverse-mode gradient engine, attention
blocks whose scores come from outer add/sub/mul/div of flattened
embeddings, toy modality encoders, synthetic paired-modality tasks, and the
training/metric machinery to run the ablation matrix.
"""

from .attention import (
    ALL_OPS,
    FoaaBlockParams,
    FoaaHeadParams,
    FusionHeadParams,
    OuterOpKind,
    attention_score,
    attention_weights,
    direct_outer_fusion,
    foaa_cross_attention,
    foaa_self_attention,
    fusion_head,
    outer_op,
    sdp_attention,
)
from .data import (
    DataDims,
    DatasetSplit,
    MultimodalSample,
    SamplerWeights,
    augment,
    gen_imbalanced_dataset,
    gen_interaction_dataset,
    load_dataset,
    monte_carlo_splits,
    save_dataset,
    weighted_draws,
)
from .encoders import (
    ImageEncoderParams,
    TabularEncoderParams,
    encode_image,
    encode_tabular,
)
from .errors import (
    ConfigurationError,
    ContractError,
    DimensionError,
    EvaluationError,
    FoaaError,
    FormatError,
    NumericError,
)
from .gradcheck import finite_diff_check
from .io import load_params, read_foat, save_params, write_foat
from .metrics import MetricsReport, auc_binary, auc_pair_count, compute_report, confusion_matrix
from .models import ARCH_ORDER, ArchConfig, Model, build_model, load_model, save_model
from .tensor import (
    Parameter,
    Tape,
    Tensor,
    add,
    backward,
    elementwise,
    matmul,
    mul,
    relu,
    softmax_rows,
    sub,
    sum_all,
)
from .train import AdamState, TrainConfig, TrainResult, adam_step, cross_entropy, evaluate, train_model

__version__ = "0.1.0"
