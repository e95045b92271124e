"""Confidence-thresholded pseudo-labeling of target samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DimensionError
from .tensor import Tensor


@dataclass(frozen=True)
class PseudoLabelSplit:
    """Partition of a target batch into pseudo-labeled and unlabeled parts."""

    labeled_indices: np.ndarray
    pseudo_labels: np.ndarray
    unlabeled_indices: np.ndarray

    @property
    def n_labeled(self) -> int:
        return self.labeled_indices.size


def assign(probs1, nu: float) -> PseudoLabelSplit:
    """Label sample i with its argmax class iff max prob >= nu (inclusive).

    Ties at the argmax go to the lowest class index. An empty labeled set is
    a valid outcome.
    """
    if not 0.0 <= nu <= 1.0:
        raise ContractViolation(f"nu must be in [0, 1], got {nu}")
    p = probs1.data if isinstance(probs1, Tensor) else np.asarray(probs1, dtype=np.float64)
    if p.ndim != 2:
        raise DimensionError(f"need an (n, C) probability matrix, got {p.shape}")
    confident = p.max(axis=1) >= nu
    labeled = np.flatnonzero(confident)
    unlabeled = np.flatnonzero(~confident)
    return PseudoLabelSplit(
        labeled_indices=labeled,
        pseudo_labels=np.argmax(p[labeled], axis=1),
        unlabeled_indices=unlabeled,
    )


def label_distribution(split: PseudoLabelSplit, num_classes: int) -> np.ndarray:
    """Per-class counts of the assigned pseudo-labels."""
    return np.bincount(split.pseudo_labels, minlength=num_classes)
