"""Binary tomato / not-tomato validation of candidate regions.

A deliberately small convolutional network written directly in numpy::

    32x32x3 -> conv3x3x8 -> relu -> maxpool2
            -> conv3x3x16 -> relu -> maxpool2
            -> dense(1024 -> 2) -> softmax

Trained with softmax cross-entropy (binary cross-entropy over two logits)
and plain mini-batch gradient descent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import checkpoint
from .imaging import RgbImage, read_image

__all__ = [
    "ARCHITECTURE",
    "INPUT_SIZE",
    "TrainingError",
    "DivergenceError",
    "DetectorInputError",
    "DetectionLabel",
    "DetectorModel",
    "RegionVerdict",
    "init_detector",
    "detector_loss_and_grads",
    "train_detector",
    "validate_regions",
]

ARCHITECTURE = "ripeline.detector/v1:in32x32x3,conv3x3x8,relu,pool2,conv3x3x16,relu,pool2,dense2,softmax"
INPUT_SIZE = 32
PARAM_SHAPES = {
    "conv1.w": (3, 3, 3, 8),
    "conv1.b": (8,),
    "conv2.w": (3, 3, 8, 16),
    "conv2.b": (16,),
    "dense.w": (8 * 8 * 16, 2),
    "dense.b": (2,),
}


class TrainingError(ValueError):
    pass


class DivergenceError(TrainingError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


class DetectorInputError(ValueError):
    pass


@dataclass(frozen=True)
class DetectionLabel:
    path: str
    is_tomato: bool

    def load(self) -> RgbImage:
        return read_image(self.path)


class RegionVerdict(NamedTuple):
    score: float
    accepted: bool


@dataclass(eq=False)
class DetectorModel:
    params: dict[str, np.ndarray]
    version: str = ARCHITECTURE
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, shape in PARAM_SHAPES.items():
            if name not in self.params:
                raise ValueError(f"missing parameter {name}")
            if self.params[name].shape != shape:
                raise ValueError(f"{name} has shape {self.params[name].shape}, expected {shape}")

    def predict_proba(self, batch: np.ndarray) -> np.ndarray:
        """Tomato probability for an ``(N, 32, 32, 3)`` batch in [0, 1]."""
        probs, _ = _forward(self.params, batch)
        return probs[:, 1]

    def save(self, path) -> Path:
        return checkpoint.save_checkpoint(path, ARCHITECTURE, self.params, self.metadata)

    @classmethod
    def load(cls, path) -> "DetectorModel":
        arch, tensors, meta = checkpoint.load_checkpoint(path)
        if arch != ARCHITECTURE:
            raise checkpoint.CheckpointError(f"checkpoint holds {arch!r}, not a detector")
        return cls(tensors, arch, meta)


def init_detector(seed: int = 0) -> DetectorModel:
    """Fan-in scaled uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in PARAM_SHAPES.items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            limit = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-limit, limit, shape)
    return DetectorModel(params)


def _conv_forward(x, w, b):
    n, h, wd, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # n, h, w, c, 3, 3
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * wd, 9 * c)
    out = cols @ w.reshape(9 * c, -1) + b
    return out.reshape(n, h, wd, -1), cols


def _conv_backward(dout, cols, x_shape, w):
    n, h, wd, c = x_shape
    cout = w.shape[-1]
    d2 = dout.reshape(-1, cout)
    dw = (cols.T @ d2).reshape(w.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ w.reshape(9 * c, cout).T).reshape(n, h, wd, 3, 3, c)
    dxp = np.zeros((n, h + 2, wd + 2, c))
    for i in range(3):
        for j in range(3):
            dxp[:, i : i + h, j : j + wd, :] += dcols[:, :, :, i, j, :]
    return dxp[:, 1:-1, 1:-1, :], dw, db


def _pool_forward(x):
    n, h, w, c = x.shape
    blocks = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, h // 2, w // 2, c, 4)
    idx = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0], idx


def _pool_backward(dout, idx, x_shape):
    n, h, w, c = x_shape
    dblocks = np.zeros((n, h // 2, w // 2, c, 4))
    np.put_along_axis(dblocks, idx[..., None], dout[..., None], axis=-1)
    return dblocks.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(x_shape)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward(p, x):
    z1, cols1 = _conv_forward(x, p["conv1.w"], p["conv1.b"])
    a1 = np.maximum(z1, 0.0)
    p1, idx1 = _pool_forward(a1)
    z2, cols2 = _conv_forward(p1, p["conv2.w"], p["conv2.b"])
    a2 = np.maximum(z2, 0.0)
    p2, idx2 = _pool_forward(a2)
    flat = p2.reshape(len(x), -1)
    logits = flat @ p["dense.w"] + p["dense.b"]
    cache = (x, z1, cols1, p1, idx1, z2, cols2, p2, idx2, flat, logits)
    return _softmax(logits), cache


def detector_loss_and_grads(params, x, y):
    """Mean cross-entropy of integer labels ``y`` and its parameter gradients."""
    probs, (x, z1, cols1, p1, idx1, z2, cols2, p2, idx2, flat, logits) = _forward(params, x)
    n = len(x)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), y].mean()

    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    g = {"dense.w": flat.T @ dlogits, "dense.b": dlogits.sum(axis=0)}
    dp2 = (dlogits @ params["dense.w"].T).reshape(p2.shape)
    da2 = _pool_backward(dp2, idx2, z2.shape)
    dz2 = da2 * (z2 > 0)
    dp1, g["conv2.w"], g["conv2.b"] = _conv_backward(dz2, cols2, p1.shape, params["conv2.w"])
    da1 = _pool_backward(dp1, idx1, z1.shape)
    dz1 = da1 * (z1 > 0)
    _, g["conv1.w"], g["conv1.b"] = _conv_backward(dz1, cols1, x.shape, params["conv1.w"])
    return float(loss), g


def _to_batch(images: Sequence[RgbImage]) -> np.ndarray:
    arr = np.empty((len(images), INPUT_SIZE, INPUT_SIZE, 3))
    for i, img in enumerate(images):
        if (img.height, img.width) != (INPUT_SIZE, INPUT_SIZE):
            raise DetectorInputError(
                f"thumbnail {i} is {img.width}x{img.height}, expected {INPUT_SIZE}x{INPUT_SIZE}"
            )
        arr[i] = img.to_float()
    return arr


def _coerce_samples(data):
    images, labels = [], []
    for item in data:
        if isinstance(item, DetectionLabel):
            images.append(item.load())
            labels.append(int(bool(item.is_tomato)))
        else:
            img, lab = item
            images.append(img)
            labels.append(int(bool(lab)))
    return images, np.array(labels, dtype=np.int64)


def train_detector(data, epochs: int = 50, learning_rate: float = 0.05, seed: int = 0,
                   batch_size: int = 8) -> DetectorModel:
    """Train the detector from labelled 32x32 thumbnails.

    ``data`` holds :class:`DetectionLabel` records or ``(RgbImage, is_tomato)``
    pairs. Deterministic for a given ``seed``.
    """
    if epochs < 1:
        raise TrainingError("epochs must be >= 1")
    images, y = _coerce_samples(data)
    if len(set(y.tolist())) < 2:
        raise TrainingError("training data must contain both tomato and non-tomato samples")
    x = _to_batch(images)
    model = init_detector(seed)
    params = model.params
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), batch_size):
            idx = order[start : start + batch_size]
            loss, grads = detector_loss_and_grads(params, x[idx], y[idx])
            if not np.isfinite(loss):
                raise DivergenceError(epoch, loss)
            total += loss * len(idx)
            for k in params:
                params[k] -= learning_rate * grads[k]
        history.append(total / len(x))
    model.metadata = {
        "epochs": epochs,
        "seed": seed,
        "learning_rate": learning_rate,
        "batch_size": batch_size,
        "final_loss": history[-1],
        "loss_history": history,
    }
    return model


def validate_regions(model: DetectorModel, thumbs: Sequence[RgbImage], threshold: float = 0.5) -> list[RegionVerdict]:
    """Score each thumbnail; ``accepted`` is exactly ``score >= threshold``."""
    if len(thumbs) == 0:
        return []
    scores = model.predict_proba(_to_batch(thumbs))
    return [RegionVerdict(float(s), bool(s >= threshold)) for s in scores]
