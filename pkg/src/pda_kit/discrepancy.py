"""Kernel two-sample estimators used for partial feature alignment.

The core quantity is a soft-weighted squared MMD between source and target
feature batches: source samples are reweighted per class by a probability
vector estimated from the source classifier's outputs on the target domain,
so classes absent from the target contribute little to the alignment term.

Kernel convention, used consistently here and by the test oracles:
k(x, x') = exp(-||x - x'||^2 / (2 * sigma^2)).

All estimators are biased V-statistics (self-pairs included) and are
differentiable with respect to both feature sets. The class weights are
treated as constants: no gradient flows into them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, DegenerateWeightsError, DimensionError
from .tensor import Tensor

Z_W_FLOOR = 1e-12


@dataclass(frozen=True)
class KernelParams:
    """Gaussian kernel scale sigma."""

    bandwidth: float = 1.0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ContractViolation(f"bandwidth must be positive: {self.bandwidth}")


@dataclass(frozen=True)
class SoftWeightVector:
    """Per-source-class weights on the probability simplex."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or v.size == 0:
            raise ContractViolation(f"weight vector must be 1-D and non-empty: {v.shape}")
        if (v < 0).any():
            raise ContractViolation("weight vector has negative entries")
        if abs(v.sum() - 1.0) > 1e-9:
            raise ContractViolation(f"weight vector sums to {v.sum()!r}, not 1")

    @classmethod
    def uniform(cls, num_classes: int) -> "SoftWeightVector":
        return cls(np.full(num_classes, 1.0 / num_classes))

    def __len__(self) -> int:
        return self.values.size


def update_soft_weights(probs_t) -> SoftWeightVector:
    """Column mean of the source classifier's probabilities on target data."""
    p = probs_t.data if isinstance(probs_t, Tensor) else np.asarray(probs_t, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] == 0:
        raise ContractViolation(f"need a non-empty (n, C) probability matrix, got {p.shape}")
    return SoftWeightVector(p.mean(axis=0))


def gaussian_gram(a: Tensor, b: Tensor, params: KernelParams) -> Tensor:
    """Gram matrix K[i, j] = exp(-||a_i - b_j||^2 / (2 sigma^2)).

    Implemented as a single differentiable primitive; the backward rule
    propagates through the pairwise squared distances into both inputs.
    """
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(f"feature widths differ: {a.shape} vs {b.shape}")
    inv2sq = 1.0 / (2.0 * params.bandwidth**2)
    sq_a = (a.data * a.data).sum(axis=1)
    sq_b = (b.data * b.data).sum(axis=1)
    d2 = sq_a[:, None] + sq_b[None, :] - 2.0 * (a.data @ b.data.T)
    np.maximum(d2, 0.0, out=d2)
    if a is b:
        np.fill_diagonal(d2, 0.0)
    k = np.exp(-d2 * inv2sq)
    out = Tensor(k, (a, b))

    def _back():
        gk = out.grad * k * (2.0 * inv2sq)
        row = gk.sum(axis=1)
        col = gk.sum(axis=0)
        a.grad += gk @ b.data - row[:, None] * a.data
        b.grad += gk.T @ a.data - col[:, None] * b.data

    out._backward = _back
    return out


def _weighted_vstat(
    feat_s: Tensor,
    sample_weights: np.ndarray,
    feat_t: Tensor,
    params: KernelParams,
) -> Tensor:
    """Three-term biased estimator with arbitrary per-source-sample weights.

    (1/n_t^2) sum k(t, t') - (2 / (n_t z)) sum w_i k(t, s_i)
    + (1/z^2) sum w_i w_i' k(s_i, s_i'),  z = sum w_i.
    """
    n_s, n_t = feat_s.shape[0], feat_t.shape[0]
    if n_s < 1 or n_t < 1:
        raise ContractViolation("both sample sets must be non-empty")
    z = float(sample_weights.sum())
    if z <= Z_W_FLOOR:
        raise DegenerateWeightsError(f"weight mass {z!r} is numerically zero")
    k_tt = gaussian_gram(feat_t, feat_t, params)
    k_ts = gaussian_gram(feat_t, feat_s, params)
    k_ss = gaussian_gram(feat_s, feat_s, params)
    w_row = sample_weights.reshape(1, n_s)
    w_outer = sample_weights[:, None] * sample_weights[None, :]
    term_tt = k_tt.sum() * (1.0 / n_t**2)
    term_ts = (k_ts * w_row).sum() * (2.0 / (n_t * z))
    term_ss = (k_ss * w_outer).sum() * (1.0 / z**2)
    return term_tt - term_ts + term_ss


def swmmd(
    feat_s: Tensor,
    labels_s,
    feat_t: Tensor,
    w,
    params: KernelParams,
) -> Tensor:
    """Soft-weighted squared MMD between source and target feature batches.

    Source sample i carries weight w[labels_s[i]]; the weight mass is summed
    over the batch at hand, so the estimator is invariant to positive
    rescaling of w. ``w`` is a SoftWeightVector or a raw non-negative
    per-class array.
    """
    labels = np.asarray(labels_s, dtype=np.intp)
    if labels.shape != (feat_s.shape[0],):
        raise DimensionError(
            f"labels shape {labels.shape} does not match {feat_s.shape[0]} source rows"
        )
    values = w.values if isinstance(w, SoftWeightVector) else np.asarray(w, dtype=np.float64)
    return _weighted_vstat(feat_s, values[labels], feat_t, params)


def mmd(feat_s: Tensor, feat_t: Tensor, params: KernelParams) -> Tensor:
    """Plain biased squared MMD: every source sample weighted equally."""
    return _weighted_vstat(feat_s, np.ones(feat_s.shape[0]), feat_t, params)


def wmmd(
    feat_s: Tensor,
    labels_s,
    feat_t: Tensor,
    hard_pseudo_labels_t,
    params: KernelParams,
) -> Tensor:
    """Class-weighted MMD with weights from the ratio of label priors.

    alpha_c = (target hard-pseudo-label frequency of c) / (source prior of c),
    zero for classes absent from the target pseudo-labels. The estimator
    normalizes by the resulting weight mass, so only ratios matter.
    """
    labels = np.asarray(labels_s, dtype=np.intp)
    pseudo = np.asarray(hard_pseudo_labels_t, dtype=np.intp)
    if labels.shape != (feat_s.shape[0],):
        raise DimensionError(
            f"labels shape {labels.shape} does not match {feat_s.shape[0]} source rows"
        )
    if pseudo.ndim != 1 or pseudo.size == 0:
        raise ContractViolation("need at least one target pseudo-label")
    num_classes = int(max(labels.max(), pseudo.max())) + 1
    src_prior = np.bincount(labels, minlength=num_classes) / labels.size
    tgt_freq = np.bincount(pseudo, minlength=num_classes) / pseudo.size
    alpha = np.zeros(num_classes)
    present = src_prior > 0
    alpha[present] = tgt_freq[present] / src_prior[present]
    return _weighted_vstat(feat_s, alpha[labels], feat_t, params)
