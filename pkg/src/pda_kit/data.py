"""Datasets: synthetic partial-DA tasks, IDX digit loading, seeded batching.

A PDA task pairs a labeled source domain with an unlabeled target domain
whose label space is a strict subset of the source's. Target labels exist
only for evaluation and are not reachable through the dataset the trainer
sees.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, IdxFormatError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class DomainDataset:
    """Sample matrix with an explicit label space; labels are optional."""

    samples: np.ndarray
    labels: np.ndarray | None
    label_space: tuple[int, ...]
    domain_tag: str

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", x)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ContractViolation(f"samples must be a non-empty (n, d) matrix: {x.shape}")
        if self.domain_tag not in ("source", "target"):
            raise ContractViolation(f"domain_tag must be source|target: {self.domain_tag}")
        object.__setattr__(self, "label_space", tuple(sorted(self.label_space)))
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=np.int64)
            object.__setattr__(self, "labels", y)
            if y.shape != (x.shape[0],):
                raise ContractViolation(f"labels shape {y.shape} != ({x.shape[0]},)")
            if not set(np.unique(y)) <= set(self.label_space):
                raise ContractViolation("labels outside the declared label space")

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class PdaTask:
    """Labeled source, unlabeled target, and evaluation-only target labels.

    The trainer works with ``source`` and ``target`` (whose ``labels`` is
    None); accuracy computations go through ``target_labels_for_eval``.
    """

    source: DomainDataset
    target: DomainDataset
    shared_classes: tuple[int, ...]
    eval_target_labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        src_space = set(self.source.label_space)
        tgt_space = set(self.target.label_space)
        if not tgt_space < src_space:
            raise ContractViolation(
                f"target label space {sorted(tgt_space)} must be a strict subset "
                f"of source label space {sorted(src_space)}"
            )
        if self.target.labels is not None:
            raise ContractViolation("target dataset must not carry labels")
        if self.source.labels is None:
            raise ContractViolation("source dataset must carry labels")
        y = np.asarray(self.eval_target_labels, dtype=np.int64)
        object.__setattr__(self, "eval_target_labels", y)
        if y.shape != (self.target.n,):
            raise ContractViolation("eval labels must align with target samples")
        object.__setattr__(self, "shared_classes", tuple(sorted(self.shared_classes)))

    @property
    def num_source_classes(self) -> int:
        return len(self.source.label_space)

    @property
    def outlier_classes(self) -> tuple[int, ...]:
        return tuple(c for c in self.source.label_space if c not in self.shared_classes)

    def target_labels_for_eval(self) -> np.ndarray:
        """Held-out target labels; for evaluation code only."""
        return self.eval_target_labels


def class_centers(
    num_classes: int,
    dim: int,
    separation: float,
    num_near: int,
    outlier_gap: float = 2.2,
) -> np.ndarray:
    """Deterministic blob centers: well-separated near classes, each outlier
    flanking one of them.

    The first ``num_near`` classes (the ones the ascending-order protocol
    keeps in the target) sit on distinct axes at mutual distance
    ``separation``. Every remaining class sits ``outlier_gap`` away from one
    near class, along its own spare axis. Mirrors the benchmark situation
    where source outliers resemble some target class closely enough that a
    classifier trained on all classes splits the shared region with them.
    """
    if num_near < 1 or num_near > num_classes:
        raise ContractViolation(f"num_near must be in [1, {num_classes}]: {num_near}")
    radius = separation / np.sqrt(2.0)
    centers = np.zeros((num_classes, dim))
    for c in range(num_near):
        centers[c, c % dim] = radius * (1 + c // dim)
    spare_axes = max(dim - num_near, 1)
    for k in range(num_classes - num_near):
        partner = k % num_near
        axis = num_near + (k % spare_axes) if num_near < dim else k % dim
        centers[num_near + k] = centers[partner]
        centers[num_near + k, axis % dim] += outlier_gap * (1 + k // spare_axes)
    return centers


def make_gaussian_pda(
    num_source_classes: int,
    num_target_classes: int,
    dim: int,
    shift: float,
    n_per_class: int,
    seed,
    cluster_std: float = 1.0,
    separation: float = 6.0,
    outlier_gap: float = 2.2,
    standardize: bool = True,
) -> PdaTask:
    """Synthetic PDA task from Gaussian blobs.

    Source classes sit at distinct centers. The target holds the first
    ``num_target_classes`` classes in ascending order, with all centers
    translated by ``shift`` along one seed-drawn direction and per-class
    spread inflated proportionally to ``shift`` (so shift=0 means the
    shared-class distributions coincide exactly; growing ``shift`` both
    displaces and widens the target clusters).

    When ``standardize`` is set, both domains are shifted and scaled by the
    source's per-dimension mean and standard deviation.
    """
    if not 1 <= num_target_classes < num_source_classes:
        raise ContractViolation(
            f"need 1 <= target classes ({num_target_classes}) < source classes "
            f"({num_source_classes})"
        )
    if dim < 2:
        raise ContractViolation(f"dim must be >= 2, got {dim}")
    if n_per_class < 1:
        raise ContractViolation(f"n_per_class must be >= 1, got {n_per_class}")

    rng = np.random.default_rng(seed)
    centers = class_centers(
        num_source_classes, dim, separation,
        num_near=num_target_classes, outlier_gap=outlier_gap,
    )

    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)
    std_perturb = 1.0 + 0.35 * shift * rng.uniform(0.6, 1.0, size=num_target_classes)

    xs, ys = [], []
    for c in range(num_source_classes):
        xs.append(rng.normal(centers[c], cluster_std, size=(n_per_class, dim)))
        ys.append(np.full(n_per_class, c, dtype=np.int64))
    x_src = np.concatenate(xs)
    y_src = np.concatenate(ys)

    xt, yt = [], []
    for c in range(num_target_classes):
        center = centers[c] + shift * direction
        xt.append(rng.normal(center, cluster_std * std_perturb[c], size=(n_per_class, dim)))
        yt.append(np.full(n_per_class, c, dtype=np.int64))
    x_tgt = np.concatenate(xt)
    y_tgt = np.concatenate(yt)

    if standardize:
        mu = x_src.mean(axis=0)
        sd = x_src.std(axis=0)
        sd[sd < 1e-12] = 1.0
        x_src = (x_src - mu) / sd
        x_tgt = (x_tgt - mu) / sd

    source = DomainDataset(
        samples=x_src,
        labels=y_src,
        label_space=tuple(range(num_source_classes)),
        domain_tag="source",
    )
    target = DomainDataset(
        samples=x_tgt,
        labels=None,
        label_space=tuple(range(num_target_classes)),
        domain_tag="target",
    )
    return PdaTask(
        source=source,
        target=target,
        shared_classes=tuple(range(num_target_classes)),
        eval_target_labels=y_tgt,
    )


def batches(ds: DomainDataset, batch_size: int, seed, epoch: int) -> list[np.ndarray]:
    """Index slices of a fresh seeded permutation; the short tail is kept."""
    if batch_size < 1:
        raise ContractViolation(f"batch_size must be >= 1, got {batch_size}")
    rng = np.random.default_rng([int(seed), int(epoch)])
    order = rng.permutation(ds.n)
    return [order[i : i + batch_size] for i in range(0, ds.n, batch_size)]


def _read_exact(fh, count: int, path) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise IOError(f"truncated IDX file: {path}")
    return buf


def _read_idx(path, expected_magic: int) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, = struct.unpack(">I", _read_exact(fh, 4, path))
        if magic != expected_magic:
            raise IdxFormatError(
                f"bad IDX magic 0x{magic:08x} in {path}, expected 0x{expected_magic:08x}"
            )
        ndim = magic & 0xFF
        dims = struct.unpack(f">{ndim}I", _read_exact(fh, 4 * ndim, path))
        raw = _read_exact(fh, int(np.prod(dims)), path)
    return np.frombuffer(raw, dtype=np.uint8).reshape(dims)


def load_idx_digits(
    images_path, labels_path, class_filter=None, domain_tag: str = "source"
) -> DomainDataset:
    """Load an IDX image/label pair as flat rows with pixels scaled to [0, 1].

    ``class_filter``, when given, keeps only rows whose label is in the set
    and declares exactly that set as the label space.
    """
    images = _read_idx(images_path, IDX_IMAGE_MAGIC)
    labels = _read_idx(labels_path, IDX_LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"image/label counts differ: {images.shape[0]} vs {labels.shape[0]}"
        )
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    if class_filter is not None:
        keep = np.isin(y, sorted(class_filter))
        x, y = x[keep], y[keep]
        space = tuple(sorted(class_filter))
    else:
        space = tuple(sorted(np.unique(y)))
    return DomainDataset(samples=x, labels=y, label_space=space, domain_tag=domain_tag)
