"""Partial domain adaptation toolkit.

Soft-weighted MMD feature alignment, pseudo-label-driven target-specific
classifier learning, and peer-consistency regularization, built on a small
numpy autodiff core and verifiable at desk scale.
"""

from .data import DomainDataset, PdaTask, batches, load_idx_digits, make_gaussian_pda
from .discrepancy import (
    KernelParams,
    SoftWeightVector,
    gaussian_gram,
    mmd,
    swmmd,
    update_soft_weights,
    wmmd,
)
from .errors import (
    ContractViolation,
    DegenerateWeightsError,
    DimensionError,
    IdxFormatError,
    NumericError,
)
from .losses import (
    LossBreakdown,
    consistency,
    multi_consistency,
    target_ce,
    total_loss,
    weighted_source_ce,
)
from .nets import (
    ClassifierBank,
    Mlp,
    MlpSpec,
    forward_features,
    forward_head,
    load_checkpoint,
    predict,
    predict_batch,
    save_checkpoint,
)
from .optim import Adam
from .pseudo_label import PseudoLabelSplit, assign, label_distribution
from .tensor import Tensor, concat, gather_rows, leaky_relu, matmul, no_grad, softmax
from .trainer import (
    ExperimentResult,
    MetricsRecord,
    TrainConfig,
    build_bank,
    build_task,
    evaluate,
    make_optimizers,
    pretrain,
    pseudo_label_report,
    run_experiment,
    train_epoch,
)

__version__ = "0.1.0"
