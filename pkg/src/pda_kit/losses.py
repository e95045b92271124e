"""Differentiable training losses.

Cross-entropy terms are computed from probability matrices (softmax outputs),
with probabilities clamped at 1e-12 before the log so a confidently wrong
prediction cannot produce an infinite loss. Class weights enter the source
term as constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discrepancy import SoftWeightVector
from .errors import ContractViolation, DimensionError
from .tensor import Tensor

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar values of the loss components and their weighted sum."""

    l_wce_s: float
    l_ce_t: float
    l_con: float
    l_swd: float
    beta: float
    gamma: float
    total: float


def _check_prob_matrix(probs: Tensor, name: str):
    if probs.data.ndim != 2:
        raise DimensionError(f"{name} must be an (n, C) matrix, got {probs.shape}")


def weighted_source_ce(probs1: Tensor, labels, w) -> Tensor:
    """Mean cross-entropy over source samples, scaled per class by w.

    Normalization is by batch size, not by the weight mass, so the loss is
    linear in w. ``w`` is a SoftWeightVector or a raw non-negative per-class
    array.
    """
    _check_prob_matrix(probs1, "probs1")
    n, c = probs1.shape
    idx = np.asarray(labels, dtype=np.intp)
    if idx.shape != (n,):
        raise DimensionError(f"labels shape {idx.shape} does not match {n} rows")
    if idx.size and (idx.min() < 0 or idx.max() >= c):
        raise IndexError(f"label out of range [0, {c})")
    values = w.values if isinstance(w, SoftWeightVector) else np.asarray(w, dtype=np.float64)
    pick = np.zeros((n, c))
    pick[np.arange(n), idx] = values[idx]
    log_p = probs1.clamp_min(PROB_FLOOR).log()
    return (log_p * pick).sum() * (-1.0 / n)


def target_ce(probs2: Tensor, pseudo_labels) -> Tensor:
    """Mean cross-entropy of the target classifier against pseudo-labels.

    An empty batch (no confident pseudo-labels this round) contributes an
    exact zero with no gradient, so training proceeds on the other terms.
    """
    _check_prob_matrix(probs2, "probs2")
    n, c = probs2.shape
    idx = np.asarray(pseudo_labels, dtype=np.intp)
    if idx.shape != (n,):
        raise ContractViolation(
            f"pseudo-labels shape {idx.shape} does not match {n} rows"
        )
    if n == 0:
        return Tensor(0.0)
    if idx.min() < 0 or idx.max() >= c:
        raise IndexError(f"pseudo-label out of range [0, {c})")
    pick = np.zeros((n, c))
    pick[np.arange(n), idx] = 1.0
    log_p = probs2.clamp_min(PROB_FLOOR).log()
    return (log_p * pick).sum() * (-1.0 / n)


def consistency(probs_a: Tensor, probs_b: Tensor) -> Tensor:
    """Mean squared Euclidean distance between two predicted distributions.

    Gradients flow into both operands.
    """
    _check_prob_matrix(probs_a, "probs_a")
    if probs_a.shape != probs_b.shape:
        raise DimensionError(f"shape mismatch: {probs_a.shape} vs {probs_b.shape}")
    n = probs_a.shape[0]
    return (probs_a - probs_b).sumsq() * (1.0 / n)


def multi_consistency(probs: list[Tensor]) -> Tensor:
    """Pairwise inconsistency summed over ordered pairs of classifiers.

    Each unordered pair is counted twice, matching the double sum it
    implements; with exactly two classifiers this is 2x `consistency`.
    """
    if len(probs) < 2:
        raise ContractViolation(f"need at least 2 classifiers, got {len(probs)}")
    shape = probs[0].shape
    for p in probs[1:]:
        if p.shape != shape:
            raise DimensionError(f"shape mismatch: {shape} vs {p.shape}")
    total = None
    for i, p_i in enumerate(probs):
        for j, p_j in enumerate(probs):
            if i == j:
                continue
            term = consistency(p_i, p_j)
            total = term if total is None else total + term
    return total


def total_loss(
    l_wce_s: Tensor,
    l_ce_t: Tensor,
    l_con: Tensor,
    l_swd: Tensor,
    beta: float,
    gamma: float,
) -> tuple[Tensor, LossBreakdown]:
    """Compose the full objective: L = L_wce_s + L_ce_t + beta*L_con + gamma*L_swd."""
    if beta < 0 or gamma < 0:
        raise ContractViolation(f"beta and gamma must be >= 0: {beta}, {gamma}")
    total = l_wce_s + l_ce_t + l_con * beta + l_swd * gamma
    breakdown = LossBreakdown(
        l_wce_s=l_wce_s.item(),
        l_ce_t=l_ce_t.item(),
        l_con=l_con.item(),
        l_swd=l_swd.item(),
        beta=beta,
        gamma=gamma,
        total=total.item(),
    )
    return total, breakdown
