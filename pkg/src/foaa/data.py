"""Synthetic paired-modality datasets, sampling, augmentation, and splits.

The interaction task is an XOR of latent signs: each sample draws two
independent latent vectors, one rendered as a small image and one as a
tabular row, and the label says whether the two hidden sign projections
agree. Either modality alone carries zero label information, so only a
model that combines both can beat chance.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ContractError, FormatError
from .io import read_foat, write_foat


@dataclass
class MultimodalSample:
    image: np.ndarray  # (c, h, w)
    tabular: np.ndarray  # (d_in,)
    label: int


@dataclass
class DataDims:
    image_shape: tuple[int, int, int] = (1, 16, 16)
    tabular_dim: int = 8
    latent_dim: int = 2


@dataclass
class InteractionData:
    """Generated samples plus the hidden quantities that defined them.

    Iterates like a plain list of samples; the latent block exists so tests
    can recompute labels from first principles.
    """

    samples: list[MultimodalSample]
    dims: DataDims
    seed: int
    noise: float
    hidden_a: np.ndarray  # (latent_dim,) unit vector
    hidden_b: np.ndarray
    latents_a: np.ndarray  # (n, latent_dim)
    latents_b: np.ndarray
    basis_a: np.ndarray  # (latent_dim, c*h*w), orthonormal rows
    basis_b: np.ndarray  # (latent_dim, tabular_dim), orthonormal rows

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    def __iter__(self):
        return iter(self.samples)


def _sign(x: np.ndarray) -> np.ndarray:
    # sign with sign(0) := +1, so labels are always defined
    return np.where(x >= 0.0, 1.0, -1.0)


def _unit_vector(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _orthonormal_rows(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    if rows > cols:
        raise ConfigurationError(f"latent dim {rows} exceeds rendered dim {cols}")
    g = rng.standard_normal((cols, rows))
    q, _ = np.linalg.qr(g)
    return q.T.copy()


def _draw_hidden_structure(rng: np.random.Generator, dims: DataDims) -> dict:
    """Hidden sign directions and rendering bases, fixed once per dataset."""
    c, h, w = dims.image_shape
    pixels = c * h * w
    lat = dims.latent_dim
    return {
        "hidden_a": _unit_vector(rng, lat),
        "hidden_b": _unit_vector(rng, lat),
        "basis_a": _orthonormal_rows(rng, lat, pixels),
        "basis_b": _orthonormal_rows(rng, lat, dims.tabular_dim),
    }


def _render_batch(
    rng: np.random.Generator,
    n: int,
    dims: DataDims,
    noise: float,
    meta: dict,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Draw n latent pairs and render both modalities under a fixed structure."""
    c, h, w = dims.image_shape
    pixels = c * h * w
    lat = dims.latent_dim
    z_a = rng.standard_normal((n, lat))
    z_b = rng.standard_normal((n, lat))
    # scale so rendered features have roughly unit variance per component
    images = z_a @ meta["basis_a"] * math.sqrt(pixels / lat)
    tabular = z_b @ meta["basis_b"] * math.sqrt(dims.tabular_dim / lat)
    if noise > 0.0:
        images = images + noise * rng.standard_normal(images.shape)
        tabular = tabular + noise * rng.standard_normal(tabular.shape)
    return z_a, z_b, images.reshape(n, c, h, w), tabular


def interaction_labels(z_a: np.ndarray, z_b: np.ndarray, hidden_a: np.ndarray, hidden_b: np.ndarray) -> np.ndarray:
    """Label = 1 where the two latent sign projections agree."""
    s_a = _sign(z_a @ hidden_a)
    s_b = _sign(z_b @ hidden_b)
    return (s_a == s_b).astype(np.int64)


def gen_interaction_dataset(
    n: int,
    seed: int,
    dims: DataDims | None = None,
    noise: float = 0.1,
) -> InteractionData:
    """Balanced XOR-of-signs dataset; unimodal Bayes accuracy is 1/2."""
    if n < 100:
        raise ConfigurationError(f"interaction dataset needs n >= 100, got {n}")
    dims = dims or DataDims()
    rng = np.random.default_rng(seed)
    meta = _draw_hidden_structure(rng, dims)
    z_a, z_b, images, tabular = _render_batch(rng, n, dims, noise, meta)
    labels = interaction_labels(z_a, z_b, meta["hidden_a"], meta["hidden_b"])
    samples = [
        MultimodalSample(image=images[i], tabular=tabular[i], label=int(labels[i]))
        for i in range(n)
    ]
    return InteractionData(
        samples=samples,
        dims=dims,
        seed=seed,
        noise=noise,
        hidden_a=meta["hidden_a"],
        hidden_b=meta["hidden_b"],
        latents_a=z_a,
        latents_b=z_b,
        basis_a=meta["basis_a"],
        basis_b=meta["basis_b"],
    )


def gen_imbalanced_dataset(
    n: int,
    ratio: float,
    seed: int,
    dims: DataDims | None = None,
    noise: float = 0.1,
    minority_class: int = 1,
) -> InteractionData:
    """Same generative family, rejection-sampled to an exact class imbalance.

    The minority class (default class 1, so the sensitivity metric reads the
    minority recall directly) gets round(n * ratio) samples.
    """
    if not 0.0 < ratio < 1.0:
        raise ConfigurationError(f"imbalance ratio must be in (0, 1), got {ratio}")
    if n < 100:
        raise ConfigurationError(f"imbalanced dataset needs n >= 100, got {n}")
    if minority_class not in (0, 1):
        raise ConfigurationError(f"minority class must be 0 or 1, got {minority_class}")
    dims = dims or DataDims()
    rng = np.random.default_rng(seed)
    quota = {minority_class: int(round(n * ratio))}
    quota[1 - minority_class] = n - quota[minority_class]
    if min(quota.values()) < 1:
        raise ConfigurationError(f"degenerate imbalance: class quotas {quota}")

    meta = _draw_hidden_structure(rng, dims)
    kept: dict[str, list] = {"img": [], "tab": [], "za": [], "zb": [], "lab": []}
    counts = {0: 0, 1: 0}
    while counts[0] < quota[0] or counts[1] < quota[1]:
        z_a, z_b, images, tabular = _render_batch(rng, n, dims, noise, meta)
        labels = interaction_labels(z_a, z_b, meta["hidden_a"], meta["hidden_b"])
        for i in range(n):
            lab = int(labels[i])
            if counts[lab] < quota[lab]:
                counts[lab] += 1
                kept["img"].append(images[i])
                kept["tab"].append(tabular[i])
                kept["za"].append(z_a[i])
                kept["zb"].append(z_b[i])
                kept["lab"].append(lab)

    order = rng.permutation(n)
    samples = [
        MultimodalSample(
            image=np.asarray(kept["img"][i]),
            tabular=np.asarray(kept["tab"][i]),
            label=kept["lab"][i],
        )
        for i in order
    ]
    return InteractionData(
        samples=samples,
        dims=dims,
        seed=seed,
        noise=noise,
        hidden_a=meta["hidden_a"],
        hidden_b=meta["hidden_b"],
        latents_a=np.asarray(kept["za"])[order],
        latents_b=np.asarray(kept["zb"])[order],
        basis_a=meta["basis_a"],
        basis_b=meta["basis_b"],
    )


@dataclass
class SamplerWeights:
    """Per-sample draw probabilities balancing classes.

    Before normalization each sample weighs (1/num_classes) / count(class),
    which already sums to one when every class is present.
    """

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ConfigurationError("sampler weights must be a non-empty vector")
        if (p <= 0).any():
            raise ConfigurationError("sampler weights must be positive")
        self.probabilities = p / p.sum()

    @classmethod
    def from_labels(cls, labels, num_classes: int | None = None) -> "SamplerWeights":
        labels = np.asarray(labels, dtype=np.int64)
        if num_classes is None:
            num_classes = int(labels.max()) + 1
        counts = np.bincount(labels, minlength=num_classes)
        raw = (1.0 / num_classes) / counts[labels]
        return cls(probabilities=raw)


def weighted_draws(
    weights: SamplerWeights,
    k: int,
    seed: int | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """k i.i.d. index draws with replacement following the weights."""
    if rng is None:
        rng = np.random.default_rng(seed)
    return rng.choice(weights.probabilities.size, size=k, replace=True, p=weights.probabilities)


def augment(
    img: np.ndarray,
    flip_p: float = 0.5,
    erase_p: float = 0.1,
    seed: int | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Random horizontal flip and random rectangle erasing.

    With probability flip_p the width axis is mirrored; with probability
    erase_p a rectangle covering 2-20% of the area is zeroed across all
    channels. Images too small to fit any such rectangle skip erasing.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3:
        raise ContractError(f"augment needs a (c, h, w) image, got shape {img.shape}")
    out = img.copy()
    _, h, w = out.shape
    if rng.random() < flip_p:
        out = out[:, :, ::-1].copy()
    if rng.random() < erase_p:
        area = h * w
        if 0.2 * area >= 1.0:
            for _ in range(100):
                eh = int(rng.integers(1, h + 1))
                lo = max(1, math.ceil(0.02 * area / eh))
                hi = min(w, math.floor(0.2 * area / eh))
                if lo > hi:
                    continue
                ew = int(rng.integers(lo, hi + 1))
                y0 = int(rng.integers(0, h - eh + 1))
                x0 = int(rng.integers(0, w - ew + 1))
                out[:, y0 : y0 + eh, x0 : x0 + ew] = 0.0
                break
    return out


@dataclass
class DatasetSplit:
    train: np.ndarray
    test: np.ndarray
    fold_id: int
    seed: int

    def __post_init__(self):
        self.train = np.asarray(self.train, dtype=np.int64)
        self.test = np.asarray(self.test, dtype=np.int64)
        if np.intersect1d(self.train, self.test).size:
            raise ConfigurationError("train and test indices overlap")


def monte_carlo_splits(
    n: int,
    folds: int = 15,
    test_frac: float = 0.2,
    seed: int = 0,
) -> list[DatasetSplit]:
    """Independent random train/test partitions, one per fold.

    Folds resample independently (they are not disjoint k-fold blocks);
    within each fold, train and test are disjoint and cover the dataset.
    """
    if folds < 1:
        raise ConfigurationError(f"folds must be >= 1, got {folds}")
    if not 0.0 < test_frac < 1.0:
        raise ConfigurationError(f"test_frac must be in (0, 1), got {test_frac}")
    t = int(round(n * test_frac))
    if t < 1 or t >= n:
        raise ConfigurationError(f"degenerate split: {t} test samples of {n}")
    rng = np.random.default_rng(seed)
    out = []
    for fold in range(folds):
        perm = rng.permutation(n)
        out.append(DatasetSplit(train=perm[t:], test=perm[:t], fold_id=fold, seed=seed))
    return out


# ---------------------------------------------------------------------------
# on-disk formats
# ---------------------------------------------------------------------------

IMAGES_FILE = "images.foat"
IMAGE_LABELS_FILE = "image_labels.csv"
TABULAR_FILE = "tabular.csv"


def save_dataset(samples, directory: str | Path) -> None:
    """Write the canonical dataset files.

    images.foat holds the batched (n, c, h, w) stack, image_labels.csv the
    sidecar labels, and tabular.csv the feature columns plus a ``label``
    column.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    samples = list(samples)
    if not samples:
        raise ConfigurationError("cannot save an empty dataset")
    images = np.stack([s.image for s in samples])
    write_foat(directory / IMAGES_FILE, images)
    with open(directory / IMAGE_LABELS_FILE, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "label"])
        for i, s in enumerate(samples):
            writer.writerow([i, s.label])
    d = samples[0].tabular.size
    with open(directory / TABULAR_FILE, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{j}" for j in range(d)] + ["label"])
        for s in samples:
            writer.writerow([repr(float(v)) for v in s.tabular] + [s.label])


def load_tabular_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """CSV with a header; the ``label`` column is the class, the rest features."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or "label" not in header:
            raise FormatError(f"{path}: tabular CSV needs a header with a 'label' column")
        label_col = header.index("label")
        feats, labels = [], []
        for row in reader:
            if not row:
                continue
            labels.append(int(row[label_col]))
            feats.append([float(v) for j, v in enumerate(row) if j != label_col])
    return np.asarray(feats, dtype=np.float64), np.asarray(labels, dtype=np.int64)


def _load_images(directory: Path) -> tuple[np.ndarray, np.ndarray]:
    batched = directory / IMAGES_FILE
    sidecar = directory / IMAGE_LABELS_FILE
    if batched.exists():
        images = read_foat(batched)
        if images.ndim != 4:
            raise FormatError(f"{batched}: batched images must be (n, c, h, w), got {images.shape}")
    else:
        per_sample = sorted((directory / "images").glob("*.foat"))
        if not per_sample:
            raise FormatError(f"no {IMAGES_FILE} or images/*.foat under {directory}")
        images = np.stack([read_foat(p) for p in per_sample])
    if not sidecar.exists():
        raise FormatError(f"missing sidecar {sidecar}")
    with open(sidecar, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["index", "label"]:
            raise FormatError(f"{sidecar}: expected header index,label")
        labels = [int(row[1]) for row in reader if row]
    return images, np.asarray(labels, dtype=np.int64)


def load_dataset(directory: str | Path) -> list[MultimodalSample]:
    """Read a dataset directory back into paired samples."""
    directory = Path(directory)
    images, image_labels = _load_images(directory)
    feats, labels = load_tabular_csv(directory / TABULAR_FILE)
    if images.shape[0] != feats.shape[0]:
        raise FormatError(
            f"modality counts differ: {images.shape[0]} images vs {feats.shape[0]} tabular rows"
        )
    if not np.array_equal(image_labels, labels):
        raise FormatError("image sidecar labels disagree with tabular labels")
    return [
        MultimodalSample(image=images[i], tabular=feats[i], label=int(labels[i]))
        for i in range(images.shape[0])
    ]
