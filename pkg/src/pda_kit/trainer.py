"""Training orchestration: pretraining, the per-batch schedule, evaluation.

One main-phase epoch runs, per batch:

  1. minimize the weighted source cross-entropy w.r.t. F and C1;
  2. minimize the alignment term w.r.t. F only;
  3. pseudo-label the target batch with C1 at threshold nu;
  4. minimize target cross-entropy plus the consistency term w.r.t. F, C2
     and the auxiliary heads.

Each numbered step is its own optimizer step. The class-weight vector is
held fixed within an epoch and recomputed over the full target set at the
epoch boundary, so a batch always sees the previous epoch's weights.

Ablation variants mask parts of the schedule: v1 drops steps 3-4, v2 drops
the consistency term, v3 drops step 2. The ``alignment`` switch selects the
step-2 estimator (soft-weighted, prior-ratio weighted, plain, or none).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from . import losses
from .data import DomainDataset, PdaTask, batches, load_idx_digits, make_gaussian_pda
from .discrepancy import (
    KernelParams,
    SoftWeightVector,
    mmd,
    swmmd,
    update_soft_weights,
    wmmd,
)
from .errors import ContractViolation, DegenerateWeightsError
from .nets import ClassifierBank, forward_head
from .optim import Adam
from .pseudo_label import assign, label_distribution
from .tensor import Tensor, gather_rows, no_grad, softmax

logger = logging.getLogger(__name__)

VARIANTS = ("full", "v1", "v2", "v3")
ALIGNMENTS = ("swmmd", "wmmd", "mmd", "none")


@dataclass(frozen=True)
class TrainConfig:
    """Complete experiment configuration. Defaults follow the method's
    stated hyper-parameters (beta=0.1, gamma=0.4, nu=0.9, Adam at 2e-4)."""

    # synthetic task
    num_source_classes: int = 5
    num_target_classes: int = 2
    dim: int = 8
    shift: float = 2.5
    n_per_class: int = 200
    cluster_std: float = 1.0
    separation: float = 6.0
    outlier_gap: float = 2.2
    # optional IDX raster task; when set, overrides the synthetic task
    source_images: str = ""
    source_labels: str = ""
    target_images: str = ""
    target_labels: str = ""
    # schedule switches
    variant: str = "full"
    alignment: str = "swmmd"
    # hyper-parameters
    beta: float = 0.1
    gamma: float = 0.4
    nu: float = 0.9
    lr: float = 2e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    kernel_bandwidth: float = 1.0
    # sizes and budget
    batch_size: int = 16
    pretrain_epochs: int = 10
    main_epochs: int = 40
    num_auxiliary_heads: int = 1
    feature_widths: tuple[int, ...] = (64, 32)
    head_hidden: tuple[int, ...] = (16,)
    activation_slope: float = 0.2
    # stopping rule: fixed budget plus optional tolerance-based early stop
    early_stop: bool = False
    w_tol: float = 1e-4
    loss_tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ContractViolation(f"variant must be one of {VARIANTS}: {self.variant}")
        if self.alignment not in ALIGNMENTS:
            raise ContractViolation(
                f"alignment must be one of {ALIGNMENTS}: {self.alignment}"
            )
        if self.beta < 0 or self.gamma < 0:
            raise ContractViolation("beta and gamma must be >= 0")
        if not 0.0 <= self.nu <= 1.0:
            raise ContractViolation(f"nu must be in [0, 1]: {self.nu}")
        if self.batch_size < 1 or self.pretrain_epochs < 0 or self.main_epochs < 0:
            raise ContractViolation("batch_size >= 1 and epoch counts >= 0 required")
        if self.num_auxiliary_heads < 1:
            raise ContractViolation("need at least one auxiliary head")

    @property
    def effective_alignment(self) -> str:
        return "none" if self.variant == "v3" else self.alignment

    @property
    def is_source_only(self) -> bool:
        """v1 with no alignment is the source-only baseline: nothing in the
        schedule consumes the class weights, so they stay uniform and the run
        reduces to plain supervised training of F and C1."""
        return self.variant == "v1" and self.effective_alignment == "none"

    @property
    def num_heads(self) -> int:
        return 2 + self.num_auxiliary_heads

    @property
    def uses_idx_task(self) -> bool:
        return bool(self.source_images)


@dataclass(frozen=True)
class MetricsRecord:
    """Per-epoch snapshot: accuracy of every head on the target set, batch
    averages of the loss components, the current class weights, and the
    full-set pseudo-label tally."""

    epoch: int
    phase: str  # "pretrain" | "main"
    accuracies: tuple[float, ...]
    l_wce_s: float
    l_ce_t: float
    l_con: float
    l_swd: float
    total: float
    w: tuple[float, ...]
    n_tl: int
    pseudo_histogram: tuple[int, ...]
    degenerate_batches: int
    wall_time_s: float


@dataclass
class ExperimentResult:
    records: list[MetricsRecord]
    summary: dict
    bank: ClassifierBank
    task: PdaTask
    w: SoftWeightVector


# ----------------------------------------------------------------------
# construction


def build_task(config: TrainConfig) -> PdaTask:
    if config.uses_idx_task:
        return _build_idx_task(config)
    return make_gaussian_pda(
        num_source_classes=config.num_source_classes,
        num_target_classes=config.num_target_classes,
        dim=config.dim,
        shift=config.shift,
        n_per_class=config.n_per_class,
        seed=[config.seed, 1],
        cluster_std=config.cluster_std,
        separation=config.separation,
        outlier_gap=config.outlier_gap,
    )


def _build_idx_task(config: TrainConfig) -> PdaTask:
    source = load_idx_digits(config.source_images, config.source_labels)
    shared = tuple(sorted(source.label_space)[: config.num_target_classes])
    target_full = load_idx_digits(
        config.target_images, config.target_labels, class_filter=shared
    )
    mu = source.samples.mean(axis=0)
    sd = source.samples.std(axis=0)
    sd[sd < 1e-12] = 1.0
    source = DomainDataset(
        samples=(source.samples - mu) / sd,
        labels=source.labels,
        label_space=source.label_space,
        domain_tag="source",
    )
    target = DomainDataset(
        samples=(target_full.samples - mu) / sd,
        labels=None,
        label_space=shared,
        domain_tag="target",
    )
    return PdaTask(
        source=source,
        target=target,
        shared_classes=shared,
        eval_target_labels=target_full.labels,
    )


def build_bank(config: TrainConfig, task: PdaTask) -> ClassifierBank:
    return ClassifierBank(
        input_dim=task.source.dim,
        num_classes=task.num_source_classes,
        feature_widths=tuple(config.feature_widths),
        head_hidden=tuple(config.head_hidden),
        num_heads=config.num_heads,
        activation_slope=config.activation_slope,
        seed=[config.seed, 2],
    )


def make_optimizers(bank: ClassifierBank, config: TrainConfig) -> dict[str, Adam]:
    def adam(named):
        return Adam(
            named, lr=config.lr, beta1=config.adam_beta1, beta2=config.adam_beta2
        )

    opts = {"F": adam(bank.extractor.named_params("F."))}
    for i, head in enumerate(bank.heads):
        opts[f"C{i + 1}"] = adam(head.named_params(f"C{i + 1}."))
    return opts


def _kernel(config: TrainConfig) -> KernelParams:
    return KernelParams(bandwidth=config.kernel_bandwidth)


# ----------------------------------------------------------------------
# evaluation (the only code that touches held-out target labels)


def evaluate(bank: ClassifierBank, task: PdaTask) -> list[float]:
    """Target accuracy of every head's argmax prediction."""
    y = task.target_labels_for_eval()
    with no_grad():
        feats = bank.features(Tensor(task.target.samples))
        accs = []
        for head in bank.heads:
            _, probs = forward_head(head, feats)
            pred = np.argmax(probs.data, axis=1)
            accs.append(float((pred == y).mean()))
    return accs


def pseudo_label_report(bank: ClassifierBank, task: PdaTask, nu: float):
    """Full-set pseudo-label tally plus evaluator-side precision.

    Returns (n_tl, histogram, precision); precision is NaN when nothing was
    labeled.
    """
    with no_grad():
        feats = bank.features(Tensor(task.target.samples))
        probs1 = forward_head(bank.heads[0], feats)[1]
    split = assign(probs1, nu)
    hist = label_distribution(split, task.num_source_classes)
    if split.n_labeled == 0:
        return 0, hist, float("nan")
    truth = task.target_labels_for_eval()[split.labeled_indices]
    precision = float((split.pseudo_labels == truth).mean())
    return split.n_labeled, hist, precision


# ----------------------------------------------------------------------
# training


def _source_probs(bank: ClassifierBank, x: Tensor) -> Tensor:
    return forward_head(bank.heads[0], bank.features(x))[1]


def pretrain(
    bank: ClassifierBank,
    task: PdaTask,
    config: TrainConfig,
    optimizers: dict[str, Adam],
) -> list[MetricsRecord]:
    """Optimize F and C1 on the weighted source loss with uniform weights."""
    w0 = SoftWeightVector.uniform(task.num_source_classes)
    records = []
    for epoch in range(config.pretrain_epochs):
        start = time.perf_counter()
        total_wce = 0.0
        src_batches = batches(task.source, config.batch_size, 2 * config.seed, epoch)
        for idx in src_batches:
            optimizers["F"].zero_grad()
            optimizers["C1"].zero_grad()
            xb = Tensor(task.source.samples[idx])
            probs1 = _source_probs(bank, xb)
            loss = losses.weighted_source_ce(probs1, task.source.labels[idx], w0)
            loss.backward()
            optimizers["F"].step()
            optimizers["C1"].step()
            total_wce += loss.item()
        n_tl, hist, _ = pseudo_label_report(bank, task, config.nu)
        avg = total_wce / max(len(src_batches), 1)
        records.append(
            MetricsRecord(
                epoch=epoch,
                phase="pretrain",
                accuracies=tuple(evaluate(bank, task)),
                l_wce_s=avg,
                l_ce_t=0.0,
                l_con=0.0,
                l_swd=0.0,
                total=avg,
                w=tuple(w0.values),
                n_tl=n_tl,
                pseudo_histogram=tuple(int(v) for v in hist),
                degenerate_batches=0,
                wall_time_s=time.perf_counter() - start,
            )
        )
    return records


def _alignment_loss(bank, config, w, x_src, y_src, x_tgt):
    """Step-2 estimator on freshly extracted features, or None when off."""
    align = config.effective_alignment
    if align == "none":
        return None
    f_s = bank.features(x_src)
    f_t = bank.features(x_tgt)
    params = _kernel(config)
    if align == "swmmd":
        return swmmd(f_s, y_src, f_t, w, params)
    if align == "mmd":
        return mmd(f_s, f_t, params)
    with no_grad():
        probs1_t = _source_probs(bank, x_tgt)
    hard = np.argmax(probs1_t.data, axis=1)
    return wmmd(f_s, y_src, f_t, hard, params)


def train_epoch(
    bank: ClassifierBank,
    task: PdaTask,
    w: SoftWeightVector,
    config: TrainConfig,
    epoch: int,
    optimizers: dict[str, Adam],
) -> MetricsRecord:
    """One pass over both domains; returns the epoch record whose ``w`` field
    is the freshly updated weight vector for the next epoch."""
    start = time.perf_counter()
    if config.is_source_only:
        w = SoftWeightVector.uniform(task.num_source_classes)
    src_batches = batches(task.source, config.batch_size, 2 * config.seed, epoch)
    tgt_batches = batches(task.target, config.batch_size, 2 * config.seed + 1, epoch)
    steps = max(len(src_batches), len(tgt_batches))
    aux_keys = [f"C{i + 1}" for i in range(2, config.num_heads)]

    sums = {"l_wce_s": 0.0, "l_ce_t": 0.0, "l_con": 0.0, "l_swd": 0.0}
    degenerate = 0

    for step in range(steps):
        sidx = src_batches[step % len(src_batches)]
        tidx = tgt_batches[step % len(tgt_batches)]
        x_src = Tensor(task.source.samples[sidx])
        y_src = task.source.labels[sidx]
        x_tgt = Tensor(task.target.samples[tidx])

        # step 1: weighted source CE w.r.t. F, C1
        optimizers["F"].zero_grad()
        optimizers["C1"].zero_grad()
        probs1 = _source_probs(bank, x_src)
        l_wce = losses.weighted_source_ce(probs1, y_src, w)
        l_wce.backward()
        optimizers["F"].step()
        optimizers["C1"].step()
        sums["l_wce_s"] += l_wce.item()

        # step 2: alignment w.r.t. F only
        l_swd_val = 0.0
        if config.effective_alignment != "none":
            optimizers["F"].zero_grad()
            try:
                l_swd = _alignment_loss(bank, config, w, x_src, y_src, x_tgt)
                (l_swd * config.gamma).backward()
                optimizers["F"].step()
                l_swd_val = l_swd.item()
            except DegenerateWeightsError as err:
                degenerate += 1
                logger.warning(
                    "epoch %d step %d: skipping alignment step (%s)", epoch, step, err
                )
        sums["l_swd"] += l_swd_val

        # steps 3-4: pseudo-label, then target CE + consistency w.r.t. F, C2, aux
        if config.variant != "v1":
            with no_grad():
                probs1_t = _source_probs(bank, x_tgt)
            split = assign(probs1_t, config.nu)

            optimizers["F"].zero_grad()
            optimizers["C2"].zero_grad()
            for key in aux_keys:
                optimizers[key].zero_grad()
            f_t = bank.features(x_tgt)
            probs2 = forward_head(bank.heads[1], f_t)[1]
            l_ce_t = losses.target_ce(
                gather_rows(probs2, split.labeled_indices), split.pseudo_labels
            )
            use_consistency = config.variant not in ("v1", "v2")
            if use_consistency:
                aux_probs = [
                    forward_head(bank.heads[i], f_t)[1]
                    for i in range(2, config.num_heads)
                ]
                if len(aux_probs) == 1:
                    l_con = losses.consistency(probs2, aux_probs[0])
                else:
                    l_con = losses.multi_consistency([probs2] + aux_probs)
            else:
                l_con = Tensor(0.0)
            (l_ce_t + l_con * config.beta).backward()
            optimizers["F"].step()
            optimizers["C2"].step()
            if use_consistency:
                for key in aux_keys:
                    optimizers[key].step()
            sums["l_ce_t"] += l_ce_t.item()
            sums["l_con"] += l_con.item()

    # epoch boundary: refresh class weights over the full target set
    with no_grad():
        probs1_full = _source_probs(bank, Tensor(task.target.samples))
    new_w = update_soft_weights(probs1_full)
    n_tl, hist, _ = pseudo_label_report(bank, task, config.nu)

    avg = {k: v / steps for k, v in sums.items()}
    total = (
        avg["l_wce_s"]
        + avg["l_ce_t"]
        + config.beta * avg["l_con"]
        + config.gamma * avg["l_swd"]
    )
    return MetricsRecord(
        epoch=epoch,
        phase="main",
        accuracies=tuple(evaluate(bank, task)),
        l_wce_s=avg["l_wce_s"],
        l_ce_t=avg["l_ce_t"],
        l_con=avg["l_con"],
        l_swd=avg["l_swd"],
        total=total,
        w=tuple(new_w.values),
        n_tl=n_tl,
        pseudo_histogram=tuple(int(v) for v in hist),
        degenerate_batches=degenerate,
        wall_time_s=time.perf_counter() - start,
    )


def run_experiment(config: TrainConfig) -> ExperimentResult:
    """Pretrain, run the main epochs, and collect the metric stream."""
    task = build_task(config)
    bank = build_bank(config, task)
    optimizers = make_optimizers(bank, config)

    records = pretrain(bank, task, config, optimizers)
    w = SoftWeightVector.uniform(task.num_source_classes)
    early_stopped = False
    prev_w = w.values.copy()
    prev_total = None
    for epoch in range(config.pretrain_epochs, config.pretrain_epochs + config.main_epochs):
        record = train_epoch(bank, task, w, config, epoch, optimizers)
        records.append(record)
        w = SoftWeightVector(np.array(record.w))
        if config.early_stop and prev_total is not None:
            w_delta = np.abs(np.array(record.w) - prev_w).sum()
            if w_delta < config.w_tol and abs(record.total - prev_total) < config.loss_tol:
                early_stopped = True
                break
        prev_w = np.array(record.w)
        prev_total = record.total

    final_accs = evaluate(bank, task)
    n_tl, hist, precision = pseudo_label_report(bank, task, config.nu)
    summary = {
        "final_accuracies": final_accs,
        "final_w": [float(v) for v in w.values],
        "final_n_tl": n_tl,
        "final_pseudo_histogram": [int(v) for v in hist],
        "final_pseudo_precision": precision,
        "epochs_run": len(records),
        "early_stopped": early_stopped,
        "degenerate_batches_total": sum(r.degenerate_batches for r in records),
    }
    return ExperimentResult(records=records, summary=summary, bank=bank, task=task, w=w)
