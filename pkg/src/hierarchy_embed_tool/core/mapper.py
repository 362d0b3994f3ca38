"""Linear mapper from feature vectors onto the class-embedding hypersphere.

The model is ``psi(x) = normalize(W x + b)`` with an optional softmax head
``rho(x) = softmax(V psi(x) + c)``. Gradients are derived analytically; the
only nonlinear pieces are the L2 normalization and the softmax.
"""
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np

from hierarchy_embed_tool.core.embedding import EmbeddingMatrix
from hierarchy_embed_tool.core.errors import MapperError, TrainingError
from hierarchy_embed_tool.core.schedules import Schedule, learning_rate

logger = logging.getLogger(__name__)

NORM_EPSILON = 1e-12
DEFAULT_LAMBDA = 0.1

Batch = Tuple[np.ndarray, np.ndarray]
SeedLike = Union[int, np.random.Generator]


class LossMode(str, Enum):
    CORR = "corr"
    CORR_CLS = "corr+cls"
    CLS = "cls"

    @property
    def uses_corr(self) -> bool:
        return self is not LossMode.CLS

    @property
    def uses_head(self) -> bool:
        return self is not LossMode.CORR


@dataclass(frozen=True)
class FeatureDataset:
    """Feature vectors with 0-based class labels (and item ids for retrieval)."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    class_order: Optional[Tuple[str, ...]] = None
    ids: Optional[np.ndarray] = None

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise MapperError(f"features must form a matrix, got shape {features.shape}")
        if labels.shape != (features.shape[0],):
            raise MapperError(f"{labels.shape[0]} labels for {features.shape[0]} samples")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise MapperError(f"labels must lie in [0, {self.num_classes}), got range [{labels.min()}, {labels.max()}]")
        if self.class_order is not None and len(self.class_order) != self.num_classes:
            raise MapperError(f"{len(self.class_order)} class names for {self.num_classes} classes")
        ids = np.arange(features.shape[0]) if self.ids is None else np.asarray(self.ids)
        if ids.shape != (features.shape[0],):
            raise MapperError(f"{ids.shape[0]} ids for {features.shape[0]} samples")
        for array in (features, labels, ids):
            array.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", ids)
        if self.class_order is not None:
            object.__setattr__(self, "class_order", tuple(self.class_order))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def with_features(self, features: np.ndarray) -> "FeatureDataset":
        """Same samples and labels with transformed feature vectors."""
        return replace(self, features=features)


@dataclass(frozen=True)
class MapperModel:
    """Parameters of psi (weights d x p, bias d) and the optional head (n x d, n)."""

    weights: np.ndarray
    bias: np.ndarray
    head_weights: Optional[np.ndarray] = None
    head_bias: Optional[np.ndarray] = None
    loss_mode: LossMode = LossMode.CORR

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        bias = np.array(self.bias, dtype=np.float64)
        if weights.ndim != 2 or bias.shape != (weights.shape[0],):
            raise MapperError(f"inconsistent mapper shapes: weights {weights.shape}, bias {bias.shape}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)
        object.__setattr__(self, "loss_mode", LossMode(self.loss_mode))
        if (self.head_weights is None) != (self.head_bias is None):
            raise MapperError("classifier head needs both weights and bias")
        if self.head_weights is not None:
            head_weights = np.array(self.head_weights, dtype=np.float64)
            head_bias = np.array(self.head_bias, dtype=np.float64)
            if head_weights.ndim != 2 or head_weights.shape[1] != weights.shape[0] or head_bias.shape != (
                head_weights.shape[0],
            ):
                raise MapperError(
                    f"inconsistent head shapes: weights {head_weights.shape}, bias {head_bias.shape} "
                    f"for embedding dimension {weights.shape[0]}"
                )
            object.__setattr__(self, "head_weights", head_weights)
            object.__setattr__(self, "head_bias", head_bias)

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    @property
    def has_head(self) -> bool:
        return self.head_weights is not None

    @property
    def num_classes(self) -> Optional[int]:
        return self.head_weights.shape[0] if self.has_head else None

    def parameters(self) -> Dict[str, np.ndarray]:
        params = {"weights": self.weights, "bias": self.bias}
        if self.has_head:
            params["head_weights"] = self.head_weights
            params["head_bias"] = self.head_bias
        return params

    def _check_inputs(self, features: np.ndarray) -> np.ndarray:
        X = np.asarray(features, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise MapperError(f"expected feature vectors of dimension {self.input_dim}, got shape {X.shape}")
        return X

    def pre_normalization(self, features: np.ndarray) -> np.ndarray:
        return self._check_inputs(features) @ self.weights.T + self.bias

    def embed_batch(self, features: np.ndarray) -> np.ndarray:
        return l2_normalize(self.pre_normalization(features))

    def logits(self, features: np.ndarray) -> np.ndarray:
        if not self.has_head:
            raise MapperError("model has no classifier head")
        return self.embed_batch(features) @ self.head_weights.T + self.head_bias

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return _softmax(self.logits(features))

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(features), axis=1)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for ``train``."""

    epochs: int = 100
    batch_size: int = 32
    base_lr: float = 0.5
    min_lr: float = 1e-6
    schedule: Schedule = Schedule.COSINE
    cycle_len: int = 12
    cycle_mult: float = 2.0
    lam: float = DEFAULT_LAMBDA
    seed: int = 0
    loss_mode: LossMode = LossMode.CORR
    clip_norm: Optional[float] = 10.0

    def __post_init__(self):
        object.__setattr__(self, "schedule", Schedule(self.schedule))
        object.__setattr__(self, "loss_mode", LossMode(self.loss_mode))
        if self.epochs < 0:
            raise MapperError("epochs must be >= 0")
        if self.batch_size < 1:
            raise MapperError("batch_size must be >= 1")
        if self.base_lr <= 0:
            raise MapperError("base_lr must be > 0")
        if self.min_lr < 0:
            raise MapperError("min_lr must be >= 0")
        if self.lam < 0:
            raise MapperError("lambda must be >= 0")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise MapperError("clip_norm must be > 0")

    def lr_at(self, epoch: int) -> float:
        return learning_rate(
            self.schedule, epoch, self.epochs, self.base_lr, self.min_lr, self.cycle_len, self.cycle_mult
        )


@dataclass(frozen=True)
class MapperGradients:
    weights: np.ndarray
    bias: np.ndarray
    head_weights: Optional[np.ndarray] = None
    head_bias: Optional[np.ndarray] = None

    def arrays(self) -> Dict[str, np.ndarray]:
        grads = {"weights": self.weights, "bias": self.bias}
        if self.head_weights is not None:
            grads["head_weights"] = self.head_weights
            grads["head_bias"] = self.head_bias
        return grads

    def norm(self) -> float:
        return math.sqrt(sum(float(np.sum(g * g)) for g in self.arrays().values()))


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    lr: float
    loss_corr: float
    loss_cls: float
    loss_total: float


@dataclass(frozen=True)
class TrainResult:
    model: MapperModel
    history: Tuple[EpochLog, ...]


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale a vector (or every row of a matrix) to unit Euclidean norm.

    Raises:
        MapperError: A vector with norm <= 1e-12.
    """
    v = np.asarray(v, dtype=np.float64)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norms <= NORM_EPSILON):
        raise MapperError("cannot L2-normalize a (near-)zero vector")
    return v / norms


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def embed(model: MapperModel, x: np.ndarray) -> np.ndarray:
    """psi(x): unit-norm embedding of a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise MapperError(f"expected a feature vector of dimension {model.input_dim}, got shape {x.shape}")
    return model.embed_batch(x[None, :])[0]


def _check_batch(batch: Batch, num_classes: int) -> Batch:
    X, y = batch
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or y.shape != (X.shape[0],) or X.shape[0] == 0:
        raise MapperError(f"batch needs m >= 1 feature rows with one label each, got {X.shape} and {y.shape}")
    if y.min() < 0 or y.max() >= num_classes:
        raise MapperError(f"label out of range: labels must lie in [0, {num_classes})")
    return X, y


def _check_phi(model: MapperModel, phi: EmbeddingMatrix):
    if phi.dim != model.dim:
        raise MapperError(f"model embeds into {model.dim} dimensions but class embeddings have {phi.dim}")


def loss_corr(batch: Batch, model: MapperModel, phi: EmbeddingMatrix) -> float:
    """Mean of ``1 - psi(x_b) . phi(c_{y_b})`` over the batch."""
    _check_phi(model, phi)
    X, y = _check_batch(batch, phi.num_classes)
    psi = model.embed_batch(X)
    return float(np.mean(1.0 - np.sum(psi * phi.rows[y], axis=1)))


def loss_cls(batch: Batch, model: MapperModel) -> float:
    """Mean negative log-likelihood of the softmax head."""
    if not model.has_head:
        raise MapperError("model has no classifier head")
    X, y = _check_batch(batch, model.num_classes)
    log_probs = _log_softmax(model.logits(X))
    return float(-np.mean(log_probs[np.arange(len(y)), y]))


def loss_combined(batch: Batch, model: MapperModel, phi: EmbeddingMatrix, lam: float = DEFAULT_LAMBDA) -> float:
    """L_CORR + lambda * L_CLS."""
    corr = loss_corr(batch, model, phi)
    if lam == 0:
        return corr
    return corr + lam * loss_cls(batch, model)


def evaluate_losses(
    batch: Batch, model: MapperModel, phi: EmbeddingMatrix, config: TrainConfig
) -> Tuple[float, float, float]:
    """(loss_corr, loss_cls, configured total); loss_cls is NaN for models without a head."""
    corr = loss_corr(batch, model, phi)
    cls = loss_cls(batch, model) if model.has_head else float("nan")
    if config.loss_mode is LossMode.CORR:
        total = corr
    elif config.loss_mode is LossMode.CLS:
        total = cls
    else:
        total = corr + config.lam * cls
    return corr, cls, total


def training_loss(batch: Batch, model: MapperModel, phi: EmbeddingMatrix, config: TrainConfig) -> float:
    """The loss that ``gradients`` differentiates for ``config.loss_mode``."""
    return evaluate_losses(batch, model, phi, config)[2]


def gradients(batch: Batch, model: MapperModel, phi: EmbeddingMatrix, config: TrainConfig) -> MapperGradients:
    """Analytic gradient of the configured loss with respect to all parameters.

    The normalization Jacobian ``(I - psi psi^T) / ||z||`` maps the gradient
    with respect to psi back onto the pre-normalization output z.
    """
    mode = config.loss_mode
    if mode.uses_head and not model.has_head:
        raise MapperError(f"loss mode '{mode.value}' needs a classifier head")
    _check_phi(model, phi)
    X, y = _check_batch(batch, phi.num_classes)
    m = X.shape[0]

    z = model.pre_normalization(X)
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    if np.any(norms <= NORM_EPSILON):
        raise MapperError("zero pre-normalization vector in batch")
    psi = z / norms

    grad_psi = np.zeros_like(psi)
    head_weights = head_bias = None
    if mode.uses_corr:
        grad_psi -= phi.rows[y] / m
    if mode.uses_head:
        weight = 1.0 if mode is LossMode.CLS else config.lam
        delta = _softmax(psi @ model.head_weights.T + model.head_bias)
        delta[np.arange(m), y] -= 1.0
        delta *= weight / m
        head_weights = delta.T @ psi
        head_bias = delta.sum(axis=0)
        grad_psi += delta @ model.head_weights
    elif model.has_head:
        head_weights = np.zeros_like(model.head_weights)
        head_bias = np.zeros_like(model.head_bias)

    radial = np.sum(grad_psi * psi, axis=1, keepdims=True)
    grad_z = (grad_psi - radial * psi) / norms
    return MapperGradients(
        weights=grad_z.T @ X,
        bias=grad_z.sum(axis=0),
        head_weights=head_weights,
        head_bias=head_bias,
    )


def initialize_model(
    input_dim: int, dim: int, num_classes: int, loss_mode: LossMode, seed: SeedLike = 0
) -> MapperModel:
    """Uniform initialization in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; head only when the mode uses one."""
    loss_mode = LossMode(loss_mode)
    rng = np.random.default_rng(seed)
    bound = 1.0 / math.sqrt(input_dim)
    weights = rng.uniform(-bound, bound, size=(dim, input_dim))
    bias = rng.uniform(-bound, bound, size=dim)
    head_weights = head_bias = None
    if loss_mode.uses_head:
        head_bound = 1.0 / math.sqrt(dim)
        head_weights = rng.uniform(-head_bound, head_bound, size=(num_classes, dim))
        head_bias = rng.uniform(-head_bound, head_bound, size=num_classes)
    return MapperModel(weights, bias, head_weights, head_bias, loss_mode)


def _sgd_step(model: MapperModel, grads: MapperGradients, lr: float, clip_norm: Optional[float]) -> MapperModel:
    scale = lr
    if clip_norm is not None:
        norm = grads.norm()
        if norm > clip_norm:
            scale *= clip_norm / norm
    updated = {name: value - scale * grads.arrays()[name] for name, value in model.parameters().items()}
    return replace(model, **updated)


def train(
    dataset: FeatureDataset,
    phi: EmbeddingMatrix,
    config: TrainConfig,
    on_epoch: Optional[Callable[[EpochLog], None]] = None,
) -> TrainResult:
    """Mini-batch SGD on the configured loss.

    Initialization and the per-epoch shuffles are drawn from one generator
    seeded with ``config.seed``, so identical inputs give identical models.
    Losses in the history are measured on the full dataset after each epoch.

    Raises:
        MapperError: Empty dataset or label/class mismatch.
        TrainingError: The loss became non-finite.
    """
    if len(dataset) == 0:
        raise MapperError("cannot train on an empty dataset")
    if dataset.num_classes != phi.num_classes:
        raise MapperError(f"dataset has {dataset.num_classes} classes but {phi.num_classes} class embeddings")

    rng = np.random.default_rng(config.seed)
    model = initialize_model(dataset.input_dim, phi.dim, phi.num_classes, config.loss_mode, rng)
    X, y = dataset.features, dataset.labels
    history = []

    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        order = rng.permutation(len(dataset))
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            grads = gradients((X[idx], y[idx]), model, phi, config)
            model = _sgd_step(model, grads, lr, config.clip_norm)

        try:
            corr, cls, total = evaluate_losses((X, y), model, phi, config)
        except (MapperError, FloatingPointError) as e:
            raise TrainingError(f"training diverged at epoch {epoch + 1}: {e}") from e
        if not math.isfinite(total):
            raise TrainingError(f"training diverged at epoch {epoch + 1}: loss is {total}")
        entry = EpochLog(epoch + 1, lr, corr, cls, total)
        history.append(entry)
        logger.debug(f"epoch {entry.epoch}: lr={lr:.3g} loss_corr={corr:.4f} loss_cls={cls:.4f} total={total:.4f}")
        if on_epoch is not None:
            on_epoch(entry)

    return TrainResult(model=model, history=tuple(history))


def classify_nearest_centroid(model: MapperModel, phi: EmbeddingMatrix, x: np.ndarray) -> int:
    """Index of the class embedding with the largest dot product (smallest index on ties)."""
    _check_phi(model, phi)
    return int(np.argmax(phi.rows @ embed(model, x)))


def nearest_centroid_predictions(model: MapperModel, phi: EmbeddingMatrix, features: np.ndarray) -> np.ndarray:
    _check_phi(model, phi)
    return np.argmax(model.embed_batch(features) @ phi.rows.T, axis=1)


def extract_features(model: MapperModel, features: np.ndarray, normalize: bool = True) -> np.ndarray:
    """Mapper outputs: L2-normalized embeddings, or the raw pre-normalization vectors."""
    return model.embed_batch(features) if normalize else model.pre_normalization(features)


def make_lifting(input_dim: int, dim: int, seed: SeedLike = 0) -> np.ndarray:
    """Seeded full-rank ``input_dim x dim`` Gaussian matrix."""
    if input_dim < dim or dim < 1:
        raise MapperError(f"lifting needs input_dim >= dim >= 1, got {input_dim} and {dim}")
    rng = np.random.default_rng(seed)
    while True:
        lifting = rng.standard_normal((input_dim, dim))
        if np.linalg.matrix_rank(lifting) == dim:
            return lifting


def generate_synthetic_dataset(
    phi: EmbeddingMatrix,
    samples_per_class: int,
    noise_sigma: float,
    input_dim: int,
    seed: SeedLike = 0,
    lifting: Optional[np.ndarray] = None,
) -> FeatureDataset:
    """Samples ``lifting @ phi(c_y) + N(0, sigma^2 I)``, ``samples_per_class`` per class.

    Pass the same ``lifting`` to draw train and test sets from one ground truth.
    """
    if input_dim < phi.dim:
        raise MapperError(f"input_dim ({input_dim}) must be >= embedding dimension ({phi.dim})")
    if samples_per_class < 1:
        raise MapperError("samples_per_class must be >= 1")
    if noise_sigma < 0:
        raise MapperError("noise_sigma must be >= 0")

    rng = np.random.default_rng(seed)
    if lifting is None:
        lifting = make_lifting(input_dim, phi.dim, rng)
    lifting = np.asarray(lifting, dtype=np.float64)
    if lifting.shape != (input_dim, phi.dim):
        raise MapperError(f"lifting must have shape {(input_dim, phi.dim)}, got {lifting.shape}")

    labels = np.repeat(np.arange(phi.num_classes), samples_per_class)
    features = phi.rows[labels] @ lifting.T + noise_sigma * rng.standard_normal((len(labels), input_dim))
    return FeatureDataset(features=features, labels=labels, num_classes=phi.num_classes, class_order=phi.class_order)
