"""Black-box classifier abstraction.

Every classifier maps an Image of a declared size onto a probability
distribution over a class catalog. Built-ins (constant, linear softmax) are
pure functions; real models attach as child processes through the wire
protocol in `pda.external`.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import ClassCatalog, LabeledDataset
from .image import Image

__all__ = [
    "ClassifierError",
    "validate_distribution",
    "Classifier",
    "ConstantClassifier",
    "LinearSoftmaxWeights",
    "LinearSoftmaxClassifier",
    "TrainResult",
    "train_linear_softmax",
    "softmax",
    "softmax_loss_and_gradient",
    "dataset_accuracy",
    "save_weights",
    "load_weights",
]


class ClassifierError(RuntimeError):
    """Raised for dimension mismatches and failed classifier calls."""


def validate_distribution(probs: np.ndarray, k: int, tol: float = 1e-9) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (k,):
        raise ClassifierError(f"expected {k} class probabilities, got shape {probs.shape}")
    if not np.all(np.isfinite(probs)):
        raise ClassifierError("class probabilities must be finite")
    if probs.min() < 0.0 or probs.max() > 1.0:
        raise ClassifierError("class probabilities must lie in [0, 1]")
    if abs(probs.sum() - 1.0) > tol:
        raise ClassifierError(f"class probabilities sum to {probs.sum()}, not 1")
    return probs


class Classifier:
    """Base class: a catalog, fixed input dimensions, and classify methods.

    `concurrent` declares whether the instance tolerates concurrent calls;
    built-ins are pure and do.
    """

    kind = "abstract"
    concurrent = True

    def __init__(self, catalog: ClassCatalog, width: int, height: int, channels: int):
        self.catalog = catalog
        self.width = width
        self.height = height
        self.channels = channels

    @property
    def n_classes(self) -> int:
        return len(self.catalog)

    def _check_image(self, image: Image) -> None:
        if (image.width, image.height, image.channels) != (self.width, self.height, self.channels):
            raise ClassifierError(
                f"image is {image.width}x{image.height}x{image.channels}, classifier "
                f"expects {self.width}x{self.height}x{self.channels}"
            )

    def classify(self, image: Image) -> np.ndarray:
        return self.classify_batch([image])[0]

    def classify_batch(self, images: Sequence[Image]) -> np.ndarray:
        """Vector of distributions, one row per input, order preserved."""
        for img in images:
            self._check_image(img)
        return self._classify_pixel_batch(
            np.stack([img.pixels for img in images]) if images else
            np.empty((0, self.height, self.width, self.channels))
        )

    def _classify_pixel_batch(self, pixels: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def close(self) -> None:
        """Release any resources; no-op for in-process classifiers."""


class ConstantClassifier(Classifier):
    """Returns one fixed distribution regardless of input."""

    kind = "constant"

    def __init__(self, probs, catalog: ClassCatalog, width: int, height: int, channels: int):
        super().__init__(catalog, width, height, channels)
        self.probs = validate_distribution(np.asarray(probs, dtype=np.float64), len(catalog))

    @classmethod
    def uniform(cls, catalog: ClassCatalog, width: int, height: int, channels: int):
        k = len(catalog)
        return cls(np.full(k, 1.0 / k), catalog, width, height, channels)

    def _classify_pixel_batch(self, pixels: np.ndarray) -> np.ndarray:
        return np.tile(self.probs, (pixels.shape[0], 1))


@dataclass(frozen=True)
class LinearSoftmaxWeights:
    """K x D weight matrix plus length-K bias for flattened pixel inputs."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ClassifierError("weights must be (K, D) with a length-K bias")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ClassifierError("weights must be finite")

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction; finite logits never overflow."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class LinearSoftmaxClassifier(Classifier):
    """softmax(W x + b) over flattened pixels; the desk-scale baseline."""

    kind = "linear_softmax"

    def __init__(
        self,
        weights: LinearSoftmaxWeights,
        catalog: ClassCatalog,
        width: int,
        height: int,
        channels: int,
    ):
        super().__init__(catalog, width, height, channels)
        if weights.n_classes != len(catalog):
            raise ClassifierError(
                f"weights have {weights.n_classes} classes, catalog has {len(catalog)}"
            )
        if weights.n_features != width * height * channels:
            raise ClassifierError(
                f"weights expect {weights.n_features} features, image size gives "
                f"{width * height * channels}"
            )
        self.weights = weights

    def _classify_pixel_batch(self, pixels: np.ndarray) -> np.ndarray:
        x = pixels.reshape(pixels.shape[0], -1)
        # One matrix-vector product per row: a row inside a batch is then
        # bitwise identical to the same image classified alone (a single
        # batched matmul may round differently per BLAS kernel).
        wt = self.weights.weights.T
        logits = np.stack([row @ wt for row in x]) + self.weights.bias
        return softmax(logits)


def softmax_loss_and_gradient(
    x: np.ndarray, y_onehot: np.ndarray, weights: np.ndarray, bias: np.ndarray, l2: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy plus l2*||W||^2/2, with gradients in W and b."""
    n = x.shape[0]
    probs = softmax(x @ weights.T + bias)
    eps = np.finfo(np.float64).tiny
    ce = -np.sum(y_onehot * np.log(np.maximum(probs, eps))) / n
    loss = ce + 0.5 * l2 * float(np.sum(weights * weights))
    diff = probs - y_onehot
    grad_w = diff.T @ x / n + l2 * weights
    grad_b = diff.sum(axis=0) / n
    return loss, grad_w, grad_b


@dataclass
class TrainResult:
    weights: LinearSoftmaxWeights
    losses: list[float]


class TrainingDiverged(ClassifierError):
    pass


def train_linear_softmax(
    train: LabeledDataset,
    epochs: int,
    learning_rate: float,
    l2: float = 0.0,
    seed: int = 0,
) -> TrainResult:
    """Full-batch gradient descent from zero-initialized weights.

    Deterministic given (dataset order, seed, hyperparameters). The loss
    recorded for each epoch is evaluated before that epoch's update.
    """
    if len(train) == 0:
        raise ClassifierError("training set is empty")
    images = train.images()
    w0, h0, c0 = images[0].width, images[0].height, images[0].channels
    for img in images:
        if (img.width, img.height, img.channels) != (w0, h0, c0):
            raise ClassifierError("training images must share one size")
    x = np.stack([img.pixels.reshape(-1) for img in images])
    k = len(train.catalog)
    y = np.zeros((len(train), k))
    y[np.arange(len(train)), train.labels()] = 1.0

    del seed  # reserved for mini-batch shuffling; full-batch needs no draws
    weights = np.zeros((k, x.shape[1]))
    bias = np.zeros(k)
    losses: list[float] = []
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is detected below
        for epoch in range(epochs):
            loss, grad_w, grad_b = softmax_loss_and_gradient(x, y, weights, bias, l2)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}; lower the learning rate"
                )
            losses.append(loss)
            weights -= learning_rate * grad_w
            bias -= learning_rate * grad_b
    return TrainResult(LinearSoftmaxWeights(weights, bias), losses)


def dataset_accuracy(classifier: Classifier, ds: LabeledDataset) -> float:
    if len(ds) == 0:
        raise ClassifierError("cannot score an empty dataset")
    probs = classifier.classify_batch(ds.images())
    return float(np.mean(probs.argmax(axis=1) == ds.labels()))


# ---------------------------------------------------------------------------
# LSW1 weight file format: header `LSW1 K D`, then K rows of D+1 decimals
# (weights followed by the bias).
# ---------------------------------------------------------------------------


def save_weights(weights: LinearSoftmaxWeights, path: str | Path) -> None:
    k, d = weights.weights.shape
    lines = [f"LSW1 {k} {d}"]
    for row, b in zip(weights.weights, weights.bias):
        lines.append(" ".join(f"{v:.17g}" for v in row) + f" {b:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_weights(path: str | Path) -> LinearSoftmaxWeights:
    text = Path(path).read_text().split()
    if len(text) < 3 or text[0] != "LSW1":
        raise ClassifierError(f"{path}: not an LSW1 weights file")
    k, d = int(text[1]), int(text[2])
    values = np.array([float(v) for v in text[3:]])
    if values.size != k * (d + 1):
        raise ClassifierError(
            f"{path}: expected {k * (d + 1)} values for K={k} D={d}, got {values.size}"
        )
    rows = values.reshape(k, d + 1)
    return LinearSoftmaxWeights(rows[:, :d].copy(), rows[:, d].copy())
