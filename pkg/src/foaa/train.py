"""Optimization loop: cross-entropy loss, Adam with L2 weight decay, metrics.

One training run is a single-threaded unit of work seeded entirely from the
config, so (seed, config, dataset) reproduces bit-identical results on a
platform. Independent folds can run concurrently with their own streams.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import DatasetSplit, MultimodalSample, SamplerWeights, augment, weighted_draws
from .errors import ConfigurationError, ContractError, NumericError
from .metrics import MetricsReport, compute_report
from .tensor import Parameter, Tape, Tensor, backward, first_nonfinite_op, record, zero_grads


@dataclass
class TrainConfig:
    lr: float = 0.00016
    weight_decay: float = 0.005
    batch_size: int = 8
    epochs: int = 30
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    use_sampler: bool = True
    # augmentation is off by default: the synthetic image code is not
    # flip-invariant, so mirroring would scramble the label signal
    flip_p: float = 0.0
    erase_p: float = 0.0

    def __post_init__(self):
        if self.lr < 0.0:
            raise ConfigurationError(f"lr must be >= 0, got {self.lr}")
        if self.weight_decay < 0.0:
            raise ConfigurationError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")


def cross_entropy(logits: Tensor, label) -> Tensor:
    """Negative log-softmax of the true class, stabilized by max subtraction.

    Accepts a single logits vector with an integer label, or a (b, C) batch
    with b labels (the batch loss is the mean). The recorded adjoint is
    softmax(logits) - onehot(label), divided by the batch size.
    """
    logits = logits if isinstance(logits, Tensor) else Tensor(logits)
    single = logits.ndim == 1
    z = logits.data if not single else logits.data[None, :]
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    if z.ndim != 2 or labels.ndim != 1 or labels.size != z.shape[0]:
        raise ContractError(f"cross_entropy got logits {logits.shape} with {labels.size} labels")
    if labels.size and (labels.min() < 0 or labels.max() >= z.shape[1]):
        raise ContractError(
            f"label out of range: got {labels.min()}..{labels.max()} for {z.shape[1]} classes"
        )
    b = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsum
    loss = -logp[np.arange(b), labels].mean()
    probs = np.exp(logp)

    def grad_logits(g):
        d = probs.copy()
        d[np.arange(b), labels] -= 1.0
        d *= float(g) / b
        return d[0] if single else d

    return record("cross_entropy", (logits,), np.asarray(loss), (grad_logits,))


@dataclass
class AdamState:
    """First/second moment slots per parameter, plus the step counter."""

    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: list[Parameter], config: TrainConfig, state: AdamState) -> AdamState:
    """One Adam update with bias correction and coupled L2 weight decay.

    Weight decay enters the gradient as lambda * w. Frozen parameters are
    skipped entirely; parameters without gradients are left untouched.
    """
    state.t += 1
    t = state.t
    bc1 = 1.0 - config.beta1**t
    bc2 = 1.0 - config.beta2**t
    for i, p in enumerate(params):
        if p.frozen:
            continue
        g = p.value.grad
        if g is None:
            continue
        if g.shape != p.value.data.shape:
            raise ContractError(
                f"gradient shape {g.shape} != parameter shape {p.value.data.shape} for {p.name!r}"
            )
        if config.weight_decay:
            g = g + config.weight_decay * p.value.data
        m = state.m.get(i)
        v = state.v.get(i)
        if m is None:
            m = np.zeros_like(p.value.data)
            v = np.zeros_like(p.value.data)
        m = config.beta1 * m + (1.0 - config.beta1) * g
        v = config.beta2 * v + (1.0 - config.beta2) * (g * g)
        state.m[i] = m
        state.v[i] = v
        m_hat = m / bc1
        v_hat = v / bc2
        p.value.data = p.value.data - config.lr * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return state


@dataclass
class TrainResult:
    model: object
    loss_trace: list[float]


def _stack_batches(samples: list[MultimodalSample], indices: np.ndarray):
    images = np.stack([samples[i].image for i in indices])
    tabular = np.stack([samples[i].tabular for i in indices])
    labels = np.asarray([samples[i].label for i in indices], dtype=np.int64)
    return images, tabular, labels


def train_model(arch_config, dataset, split: DatasetSplit, config: TrainConfig) -> TrainResult:
    """Train one architecture on one fold; deterministic given the seed.

    Returns the trained model and the per-epoch mean loss trace. A
    non-finite loss aborts with a diagnostic naming the first offending op
    on the tape.
    """
    from .models import build_model  # local import to avoid a cycle

    samples = list(dataset)
    ss = np.random.SeedSequence(config.seed)
    init_rng, order_rng, dropout_rng, augment_rng = (
        np.random.default_rng(child) for child in ss.spawn(4)
    )
    model = build_model(arch_config, samples, init_rng)

    train_idx = split.train
    n_train = train_idx.size
    labels_train = np.asarray([samples[i].label for i in train_idx], dtype=np.int64)
    weights = SamplerWeights.from_labels(labels_train, model.num_classes)

    state = AdamState()
    trace: list[float] = []
    params = model.parameters()
    augmenting = config.flip_p > 0.0 or config.erase_p > 0.0
    for epoch in range(config.epochs):
        if config.use_sampler:
            order = train_idx[weighted_draws(weights, n_train, rng=order_rng)]
        else:
            order = train_idx[order_rng.permutation(n_train)]
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n_train, config.batch_size):
            batch = order[start : start + config.batch_size]
            images, tabular, labels = _stack_batches(samples, batch)
            if augmenting:
                images = np.stack(
                    [
                        augment(im, flip_p=config.flip_p, erase_p=config.erase_p, rng=augment_rng)
                        for im in images
                    ]
                )
            zero_grads(params)
            with Tape() as tape:
                logits = model.forward(
                    Tensor(images), Tensor(tabular), training=True, rng=dropout_rng
                )
                loss = cross_entropy(logits, labels)
            if not np.isfinite(loss.data).all():
                bad = first_nonfinite_op(tape) or "cross_entropy"
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, step {n_batches}; first offending op: {bad}"
                )
            backward(loss, tape)
            adam_step(params, config, state)
            epoch_loss += float(loss.data)
            n_batches += 1
        trace.append(epoch_loss / max(1, n_batches))
    return TrainResult(model=model, loss_trace=trace)


def predict_probs(model, samples, indices=None, batch_size: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Class probabilities and labels for a sample subset, eval mode."""
    samples = list(samples)
    if indices is None:
        indices = np.arange(len(samples))
    indices = np.asarray(indices, dtype=np.int64)
    chunks = []
    labels = []
    for start in range(0, indices.size, batch_size):
        batch = indices[start : start + batch_size]
        images, tabular, batch_labels = _stack_batches(samples, batch)
        logits = model.forward(Tensor(images), Tensor(tabular), training=False).data
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        chunks.append(e / e.sum(axis=1, keepdims=True))
        labels.append(batch_labels)
    return np.concatenate(chunks), np.concatenate(labels)


def evaluate(model, samples, indices=None) -> MetricsReport:
    """Metric suite over a test subset (class-1 probability scores the AUC)."""
    probs, labels = predict_probs(model, samples, indices)
    return compute_report(labels, probs)
