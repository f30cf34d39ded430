"""Per-criterion binary value heads: training, prediction, serialization.

Each head is a single affine layer mapping a hidden-state vector to two
logits, trained with softmax cross-entropy. Class index 1 always means
Retrieve; the serialized ``label_semantics`` field pins that down so a file
cannot be silently inverted. All internal math runs at 64-bit; feature files
store float32 and are widened on load.

Training is bitwise-deterministic for a given seed: per-epoch shuffles use a
generator seeded ``seed + epoch_index``, batch order is fixed, the last
partial batch is kept, and the loss is the mean cross-entropy over the batch.
After every epoch the weights are checkpointed; the returned classifier is
the checkpoint with the best validation accuracy, earliest epoch winning
ties. No early stopping, no gradient clipping, no weight decay.

Weights start at zero. With a 5e-5 learning rate and ten epochs the total
parameter displacement is tiny, so a random starting point could never be
walked back; zero initialization also makes the first update point exactly
along the class-mean difference, and the seed still governs shuffle order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from uar.errors import (
    ConfigError,
    CorruptPayload,
    DegenerateLabels,
    DimensionMismatch,
    NonFiniteValue,
    SchemaVersionUnsupported,
)
from uar.features import FeatureDataset, Label, Scenario

FORMAT_VERSION = 1
LABEL_SEMANTICS = "class1=retrieve"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-5
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    optimizer: str = "adam"  # "adam" or "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r} (expected 'adam' or 'sgd')")


@dataclass(frozen=True)
class HeadScore:
    """One head's judgment of one vector."""

    verdict: Label
    logits: tuple[float, float]
    prob_retrieve: float


@dataclass
class LinearClassifier:
    """A 2-by-d affine head. weights[1] scores Retrieve, weights[0] NoRetrieve."""

    scenario: Scenario
    weights: np.ndarray
    bias: np.ndarray
    training_meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] != 2:
            raise CorruptPayload(f"weights must be 2xd, got shape {self.weights.shape}")
        if self.bias.shape != (2,):
            raise CorruptPayload(f"bias must have length 2, got shape {self.bias.shape}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise NonFiniteValue("classifier parameters contain NaN or Inf")
        va = self.training_meta.get("validation_accuracy")
        if va is not None and not 0.0 <= va <= 1.0:
            raise CorruptPayload(f"validation_accuracy must be in [0,1], got {va}")

    @property
    def dim(self) -> int:
        return int(self.weights.shape[1])

    def logits_matrix(self, X: np.ndarray) -> np.ndarray:
        """Logits for a stack of vectors; (n, d) -> (n, 2), float64."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise DimensionMismatch(f"expected (n, {self.dim}) inputs, got {X.shape}")
        return X @ self.weights.T + self.bias

    def predict(self, x: np.ndarray) -> HeadScore:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise DimensionMismatch(f"expected a length-{self.dim} vector, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise NonFiniteValue("input vector contains NaN or Inf")
        logits = self.weights @ x + self.bias
        verdict = Label.RETRIEVE if logits[1] > logits[0] else Label.NO_RETRIEVE
        return HeadScore(
            verdict=verdict,
            logits=(float(logits[0]), float(logits[1])),
            prob_retrieve=float(_softmax2(logits)[1]),
        )


def _softmax2(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


def loss_and_grad(
    weights: np.ndarray, bias: np.ndarray, X: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean softmax cross-entropy over the batch and its analytic gradient.

    Exposed so the analytic gradient can be checked against finite
    differences; also the single code path training itself uses.
    """
    n = X.shape[0]
    logits = X @ weights.T + bias  # (n, 2)
    shift = logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(logits - shift).sum(axis=1, keepdims=True)) + shift
    logp = logits - logsumexp
    loss = float(-logp[np.arange(n), y].mean())
    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    return loss, delta.T @ X, delta.sum(axis=0)


def _accuracy(weights: np.ndarray, bias: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    logits = X @ weights.T + bias
    # tie at equal logits counts as class 0 (NoRetrieve)
    pred = (logits[:, 1] > logits[:, 0]).astype(np.int64)
    return float((pred == y).mean())


def train(
    train_ds: FeatureDataset,
    valid_ds: FeatureDataset,
    cfg: TrainConfig | None = None,
    scenario: Scenario | None = None,
) -> LinearClassifier:
    """Train a head and return the best epoch checkpoint by validation accuracy.

    Both datasets must be fully labeled and share one dimension; the training
    split must contain both classes. ``scenario`` defaults to the one tag all
    training records share, or unspecified when they are mixed.
    """
    cfg = cfg or TrainConfig()
    if train_ds.dim != valid_ds.dim:
        raise DimensionMismatch(
            f"train dim {train_ds.dim} != valid dim {valid_ds.dim}"
        )
    X = train_ds.matrix().astype(np.float64)
    y = train_ds.labels_array()
    Xv = valid_ds.matrix().astype(np.float64)
    yv = valid_ds.labels_array()
    if len(set(y.tolist())) < 2:
        raise DegenerateLabels("training data must contain both labels")

    if scenario is None:
        tags = {rec.scenario for rec in train_ds.records}
        scenario = tags.pop() if len(tags) == 1 else Scenario.UNSPECIFIED

    d = train_ds.dim
    weights = np.zeros((2, d), dtype=np.float64)
    bias = np.zeros(2, dtype=np.float64)
    m_w = np.zeros_like(weights)
    v_w = np.zeros_like(weights)
    m_b = np.zeros_like(bias)
    v_b = np.zeros_like(bias)
    step = 0

    n = X.shape[0]
    checkpoints: list[tuple[np.ndarray, np.ndarray, float]] = []
    epoch_losses: list[float] = []
    for epoch in range(cfg.epochs):
        order = np.random.Generator(np.random.PCG64(cfg.seed + epoch)).permutation(n)
        total_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, g_w, g_b = loss_and_grad(weights, bias, X[batch], y[batch])
            total_loss += loss * len(batch)
            if cfg.optimizer == "adam":
                step += 1
                m_w = cfg.beta1 * m_w + (1 - cfg.beta1) * g_w
                v_w = cfg.beta2 * v_w + (1 - cfg.beta2) * g_w * g_w
                m_b = cfg.beta1 * m_b + (1 - cfg.beta1) * g_b
                v_b = cfg.beta2 * v_b + (1 - cfg.beta2) * g_b * g_b
                mc = 1 - cfg.beta1**step
                vc = 1 - cfg.beta2**step
                weights = weights - cfg.learning_rate * (m_w / mc) / (np.sqrt(v_w / vc) + cfg.eps)
                bias = bias - cfg.learning_rate * (m_b / mc) / (np.sqrt(v_b / vc) + cfg.eps)
            else:
                weights = weights - cfg.learning_rate * g_w
                bias = bias - cfg.learning_rate * g_b
        epoch_losses.append(total_loss / n)
        checkpoints.append((weights.copy(), bias.copy(), _accuracy(weights, bias, Xv, yv)))

    best_index = max(range(len(checkpoints)), key=lambda i: (checkpoints[i][2], -i))
    best_w, best_b, best_acc = checkpoints[best_index]
    meta = {
        "epochs_trained": cfg.epochs,
        "best_epoch": best_index + 1,
        "learning_rate": cfg.learning_rate,
        "batch_size": cfg.batch_size,
        "seed": cfg.seed,
        "validation_accuracy": best_acc,
        "optimizer": cfg.optimizer,
        "epoch_validation_accuracy": [c[2] for c in checkpoints],
        "epoch_train_loss": epoch_losses,
        "train_records": n,
        "valid_records": int(Xv.shape[0]),
    }
    return LinearClassifier(scenario=scenario, weights=best_w, bias=best_b, training_meta=meta)


# ---------------------------------------------------------------------------
# serialization: versioned JSON document
# ---------------------------------------------------------------------------

def save(clf: LinearClassifier) -> bytes:
    """Serialize to the versioned JSON document; weights round-trip bit-exactly."""
    doc = {
        "format_version": FORMAT_VERSION,
        "scenario": clf.scenario.value,
        "dim": clf.dim,
        "weights": [[float(v) for v in row] for row in clf.weights],
        "bias": [float(v) for v in clf.bias],
        "label_semantics": LABEL_SEMANTICS,
        "training_meta": clf.training_meta,
    }
    return (json.dumps(doc, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


def load(data: bytes | str) -> LinearClassifier:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptPayload("classifier document is not UTF-8") from None
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise CorruptPayload(f"classifier document is not valid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise CorruptPayload("classifier document must be a JSON object")
    version = doc.get("format_version")
    if version is None:
        raise CorruptPayload("classifier document missing 'format_version'")
    if version != FORMAT_VERSION:
        raise SchemaVersionUnsupported(f"unsupported format_version {version}")
    for key in ("scenario", "dim", "weights", "bias", "label_semantics"):
        if key not in doc:
            raise CorruptPayload(f"classifier document missing {key!r}")
    if doc["label_semantics"] != LABEL_SEMANTICS:
        raise CorruptPayload(
            f"unexpected label_semantics {doc['label_semantics']!r}; "
            f"this implementation requires {LABEL_SEMANTICS!r}"
        )
    try:
        scenario = Scenario(doc["scenario"])
    except ValueError:
        raise CorruptPayload(f"unknown scenario {doc['scenario']!r}") from None
    dim = doc["dim"]
    if not isinstance(dim, int) or dim <= 0:
        raise CorruptPayload(f"dim must be a positive integer, got {dim!r}")
    weights = doc["weights"]
    if (
        not isinstance(weights, list)
        or len(weights) != 2
        or any(not isinstance(row, list) or len(row) != dim for row in weights)
    ):
        raise CorruptPayload("weights must be a 2-row matrix with `dim` columns")
    bias = doc["bias"]
    if not isinstance(bias, list) or len(bias) != 2:
        raise CorruptPayload("bias must be a length-2 list")
    for value in (*weights[0], *weights[1], *bias):
        if not isinstance(value, (int, float)):
            raise CorruptPayload("weights and bias must be numbers")
        if not math.isfinite(value):
            raise NonFiniteValue("weights and bias must be finite")
    meta = doc.get("training_meta") or {}
    if not isinstance(meta, dict):
        raise CorruptPayload("training_meta must be an object")
    return LinearClassifier(
        scenario=scenario,
        weights=np.array(weights, dtype=np.float64),
        bias=np.array(bias, dtype=np.float64),
        training_meta=meta,
    )


def save_file(clf: LinearClassifier, path: str | Path) -> None:
    Path(path).write_bytes(save(clf))


def load_file(path: str | Path) -> LinearClassifier:
    from uar.errors import IoFailure

    path = Path(path)
    if not path.exists():
        raise IoFailure(f"no such file: {path}")
    return load(path.read_bytes())
