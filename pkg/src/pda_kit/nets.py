"""Feature extractor and classifier heads.

The backbone is a small MLP; classifier heads share one architecture and are
initialized independently. Weights start from a Gaussian with standard
deviation 0.05, biases from zero, and hidden activations are LeakyReLU.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DimensionError
from .tensor import Tensor, leaky_relu, no_grad, softmax

WEIGHT_STD = 0.05


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths, input through output, plus the LeakyReLU slope."""

    layer_widths: tuple[int, ...]
    activation_slope: float = 0.2

    def __post_init__(self):
        if len(self.layer_widths) < 2:
            raise ContractViolation("MlpSpec needs at least input and output widths")
        if any(w <= 0 for w in self.layer_widths):
            raise ContractViolation(f"widths must be positive: {self.layer_widths}")
        if not 0.0 < self.activation_slope < 1.0:
            raise ContractViolation(
                f"activation slope must be in (0, 1): {self.activation_slope}"
            )


class Mlp:
    """Stack of linear layers.

    ``activate_final=True`` applies LeakyReLU after every layer (feature
    extractor); ``False`` leaves the last layer linear (classifier logits).
    """

    def __init__(self, spec: MlpSpec, seed, activate_final: bool = False):
        self.spec = spec
        self.activate_final = activate_final
        rng = np.random.default_rng(seed)
        widths = spec.layer_widths
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for w_in, w_out in zip(widths[:-1], widths[1:]):
            self.weights.append(Tensor(rng.normal(0.0, WEIGHT_STD, (w_in, w_out))))
            self.biases.append(Tensor(np.zeros(w_out)))

    def named_params(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"{prefix}W{i}", w))
            out.append((f"{prefix}b{i}", b))
        return out

    def params(self) -> list[Tensor]:
        return [t for _, t in self.named_params()]

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.shape[1] != self.spec.layer_widths[0]:
            raise DimensionError(
                f"input shape {x.shape} does not match width {self.spec.layer_widths[0]}"
            )
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last or self.activate_final:
                h = leaky_relu(h, self.spec.activation_slope)
        return h


def forward_features(extractor: Mlp, x: Tensor) -> Tensor:
    """Run the feature extractor over a batch of rows."""
    return extractor(x)


def forward_head(head: Mlp, features: Tensor) -> tuple[Tensor, Tensor]:
    """Return (logits, softmax probabilities) of one classifier head."""
    logits = head(features)
    return logits, softmax(logits)


class ClassifierBank:
    """Shared feature extractor plus classifier heads C1..Cn.

    Head 0 is the source classifier, head 1 the target-specific classifier,
    and the rest are auxiliary. All heads share one spec; each is drawn from
    its own seed stream so their initial parameters differ.
    """

    def __init__(
        self,
        input_dim: int,
        num_classes: int,
        feature_widths: tuple[int, ...] = (64, 32),
        head_hidden: tuple[int, ...] = (16,),
        num_heads: int = 3,
        activation_slope: float = 0.2,
        seed: int = 0,
    ):
        if num_heads < 3:
            raise ContractViolation(f"need at least 3 heads, got {num_heads}")
        self.input_dim = input_dim
        self.num_classes = num_classes
        self.num_heads = num_heads
        self.seed = seed
        self.feature_spec = MlpSpec((input_dim, *feature_widths), activation_slope)
        feat_dim = feature_widths[-1]
        self.head_spec = MlpSpec((feat_dim, *head_hidden, num_classes), activation_slope)
        streams = np.random.SeedSequence(seed).spawn(num_heads + 1)
        self.extractor = Mlp(self.feature_spec, streams[0], activate_final=True)
        self.heads = [
            Mlp(self.head_spec, streams[i + 1], activate_final=False)
            for i in range(num_heads)
        ]

    def named_params(self) -> list[tuple[str, Tensor]]:
        out = self.extractor.named_params("F.")
        for i, head in enumerate(self.heads):
            out.extend(head.named_params(f"C{i + 1}."))
        return out

    def features(self, x: Tensor) -> Tensor:
        return self.extractor(x)

    def head_probs(self, i: int, features: Tensor) -> Tensor:
        return forward_head(self.heads[i], features)[1]


def predict(extractor: Mlp, head: Mlp, x: Tensor) -> int:
    """Argmax class of one sample under a head; ties go to the lowest index."""
    with no_grad():
        _, probs = forward_head(head, extractor(x))
    return int(np.argmax(probs.data[0]))


def predict_batch(extractor: Mlp, head: Mlp, x: Tensor) -> np.ndarray:
    with no_grad():
        _, probs = forward_head(head, extractor(x))
    return np.argmax(probs.data, axis=1)


# ----------------------------------------------------------------------
# checkpointing
#
# A checkpoint is a .npz archive: a "meta" entry holding a JSON description
# (constructor arguments) plus one "p<i>" entry per parameter array in
# named_params() order. float64 arrays round-trip bit-exactly.


def save_checkpoint(bank: ClassifierBank, path):
    meta = {
        "input_dim": bank.input_dim,
        "num_classes": bank.num_classes,
        "feature_widths": list(bank.feature_spec.layer_widths[1:]),
        "head_hidden": list(bank.head_spec.layer_widths[1:-1]),
        "num_heads": bank.num_heads,
        "activation_slope": bank.feature_spec.activation_slope,
        "seed": bank.seed,
    }
    arrays = {f"p{i}": t.data for i, (_, t) in enumerate(bank.named_params())}
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path) -> ClassifierBank:
    with np.load(path) as archive:
        meta = json.loads(archive["meta"].tobytes().decode())
        bank = ClassifierBank(
            input_dim=meta["input_dim"],
            num_classes=meta["num_classes"],
            feature_widths=tuple(meta["feature_widths"]),
            head_hidden=tuple(meta["head_hidden"]),
            num_heads=meta["num_heads"],
            activation_slope=meta["activation_slope"],
            seed=meta["seed"],
        )
        for i, (_, t) in enumerate(bank.named_params()):
            t.data = archive[f"p{i}"].copy()
            t.grad = np.zeros_like(t.data)
    return bank
