"""Five-class maturity classifier: LSTM + single-head attention + Boom layer.

Thumbnails are read as a sequence of pixel rows. Each row is embedded,
passed through a stack of LSTM layers, summarized by one attention head in
which only the query (the final hidden state) is projected, expanded to 4x
width and back by the Boom feed-forward block, and mapped to class logits.

Everything is float64 numpy with hand-written backpropagation; see
:func:`grad_check` for the finite-difference verification.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import checkpoint
from .imaging import RgbImage, resize_bilinear
from .maturity import NUM_CLASSES, MaturityClass

__all__ = [
    "ARCHITECTURE",
    "ClassifierConfig",
    "ShaRnnModel",
    "ModelError",
    "NumericError",
    "InputError",
    "TrainingError",
    "DivergenceError",
    "init_model",
    "preprocess",
    "preprocess_batch",
    "embed",
    "lstm_forward",
    "softmax",
    "attend",
    "boom",
    "forward",
    "loss_and_grads",
    "classify",
    "predict_proba",
    "train_classifier",
    "gradient_errors",
    "grad_check",
]

ARCHITECTURE = "ripeline.sharnn/v1:rows,embed,lstm,single-head-attention,boom4x,softmax5"
BOOM_FACTOR = 4


class ModelError(ValueError):
    """Shapes of inputs and parameters disagree."""


class NumericError(FloatingPointError):
    def __init__(self, timestep: int, layer: int):
        super().__init__(f"non-finite LSTM state at layer {layer}, timestep {timestep}")
        self.timestep = timestep
        self.layer = layer


class InputError(ValueError):
    pass


class TrainingError(ValueError):
    pass


class DivergenceError(TrainingError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


@dataclass(frozen=True)
class ClassifierConfig:
    side: int = 32
    d: int = 64
    layers: int = 2
    learning_rate: float = 0.1
    epochs: int = 60
    batch_size: int = 10
    seed: int = 0
    fine_tune_epochs: int = 0
    clip_norm: float | None = None

    def __post_init__(self):
        for name in ("side", "d", "layers", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.fine_tune_epochs < 0:
            raise ValueError("fine_tune_epochs must be >= 0")

    @property
    def timesteps(self) -> int:
        return self.side

    @property
    def features(self) -> int:
        return 3 * self.side


def _param_shapes(cfg: ClassifierConfig) -> dict[str, tuple[int, ...]]:
    d, f = cfg.d, cfg.features
    shapes = {"embed.w": (f, d), "embed.b": (d,)}
    for layer in range(cfg.layers):
        shapes[f"lstm{layer}.w"] = (2 * d, 4 * d)
        shapes[f"lstm{layer}.b"] = (4 * d,)
    shapes.update(
        {
            "attn.q": (d, d),
            "boom.w1": (d, BOOM_FACTOR * d),
            "boom.b1": (BOOM_FACTOR * d,),
            "boom.w2": (BOOM_FACTOR * d, d),
            "boom.b2": (d,),
            "head.w": (d, NUM_CLASSES),
            "head.b": (NUM_CLASSES,),
        }
    )
    return shapes


@dataclass(eq=False)
class ShaRnnModel:
    params: dict[str, np.ndarray]
    config: ClassifierConfig = field(default_factory=ClassifierConfig)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, shape in _param_shapes(self.config).items():
            if name not in self.params:
                raise ModelError(f"missing parameter {name}")
            if self.params[name].shape != shape:
                raise ModelError(f"{name} has shape {self.params[name].shape}, expected {shape}")

    def copy(self) -> "ShaRnnModel":
        return ShaRnnModel({k: v.copy() for k, v in self.params.items()}, self.config, dict(self.metadata))

    def save(self, path) -> Path:
        meta = {"config": asdict(self.config), **{k: v for k, v in self.metadata.items() if k != "config"}}
        return checkpoint.save_checkpoint(path, ARCHITECTURE, self.params, meta)

    @classmethod
    def load(cls, path) -> "ShaRnnModel":
        arch, tensors, meta = checkpoint.load_checkpoint(path)
        if arch != ARCHITECTURE:
            raise checkpoint.CheckpointError(f"checkpoint holds {arch!r}, not a maturity classifier")
        cfg = ClassifierConfig(**meta.pop("config"))
        return cls(tensors, cfg, meta)


def init_model(cfg: ClassifierConfig | None = None, seed: int | None = None) -> ShaRnnModel:
    """Uniform ``+-1/sqrt(fan_in)`` weights and zero biases, except forget-gate biases of 1."""
    cfg = cfg or ClassifierConfig()
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    params = {}
    for name, shape in _param_shapes(cfg).items():
        if len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            limit = 1.0 / math.sqrt(shape[0])
            params[name] = rng.uniform(-limit, limit, shape)
    for layer in range(cfg.layers):
        params[f"lstm{layer}.b"][cfg.d : 2 * cfg.d] = 1.0
    return ShaRnnModel(params, cfg)


# ---------------------------------------------------------------- preprocessing

def preprocess(thumb, cfg: ClassifierConfig | None = None) -> np.ndarray:
    """Resize to ``side x side`` and emit one timestep per pixel row.

    Returns a ``(side, 3 * side)`` float64 array with channels in [0, 1].
    """
    cfg = cfg or ClassifierConfig()
    data = thumb.data if isinstance(thumb, RgbImage) else np.asarray(thumb)
    if data.ndim != 3 or data.shape[2] != 3 or data.shape[0] < 1 or data.shape[1] < 1:
        raise InputError(f"cannot preprocess array of shape {data.shape}")
    resized = resize_bilinear(data.astype(np.float64), cfg.side, cfg.side) / 255.0
    seq = resized.reshape(cfg.side, 3 * cfg.side)
    if not np.isfinite(seq).all():
        raise InputError("non-finite pixel values")
    return seq


def preprocess_batch(thumbs: Sequence, cfg: ClassifierConfig) -> np.ndarray:
    return np.stack([preprocess(t, cfg) for t in thumbs]) if len(thumbs) else np.zeros((0, cfg.side, 3 * cfg.side))


# ---------------------------------------------------------------- forward parts

def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def embed(seq: np.ndarray, model: ShaRnnModel) -> np.ndarray:
    """Per-timestep affine map ``x @ W_e + b_e``."""
    w, b = model.params["embed.w"], model.params["embed.b"]
    seq = np.asarray(seq, dtype=np.float64)
    if seq.shape[-1] != w.shape[0]:
        raise ModelError(f"feature width {seq.shape[-1]} does not match embedding input {w.shape[0]}")
    return seq @ w + b


def _lstm_layer(x, w, b, layer):
    """Run one LSTM layer over ``x`` of shape (B, T, d_in); returns outputs and cache."""
    bsz, steps, d_in = x.shape
    d = w.shape[1] // 4
    h = np.zeros((bsz, d))
    c = np.zeros((bsz, d))
    out = np.empty((bsz, steps, d))
    cache = []
    for t in range(steps):
        xh = np.concatenate([x[:, t], h], axis=1)
        z = xh @ w + b
        i = _sigmoid(z[:, :d])
        f = _sigmoid(z[:, d : 2 * d])
        o = _sigmoid(z[:, 2 * d : 3 * d])
        g = np.tanh(z[:, 3 * d :])
        c_prev = c
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        if not (np.isfinite(h).all() and np.isfinite(c).all()):
            raise NumericError(t, layer)
        out[:, t] = h
        cache.append((xh, c_prev, i, f, o, g, tc))
    return out, cache


def _lstm_stack(emb, model):
    caches = []
    h = emb
    for layer in range(model.config.layers):
        h, cache = _lstm_layer(h, model.params[f"lstm{layer}.w"], model.params[f"lstm{layer}.b"], layer)
        caches.append(cache)
    return h, caches


def lstm_forward(emb: np.ndarray, model: ShaRnnModel):
    """Stacked LSTM over a ``(T, d)`` (or ``(B, T, d)``) sequence.

    Returns the top-layer hidden states ``H`` and the final state ``h_T``.
    """
    emb = np.asarray(emb, dtype=np.float64)
    single = emb.ndim == 2
    batch = emb[None] if single else emb
    if batch.shape[-1] != model.config.d:
        raise ModelError(f"embedding width {batch.shape[-1]} != d={model.config.d}")
    hs, _ = _lstm_stack(batch, model)
    if single:
        return hs[0], hs[0, -1]
    return hs, hs[:, -1]


def _attend(hs, h_last, wq):
    d = hs.shape[-1]
    q = h_last @ wq
    scores = np.einsum("btd,bd->bt", hs, q) / math.sqrt(d)
    weights = softmax(scores, axis=1)
    context = np.einsum("bt,btd->bd", weights, hs)
    return context, weights, q


def attend(H: np.ndarray, h_T: np.ndarray, model: ShaRnnModel):
    """Single-head scaled dot-product attention with a projected query only.

    ``q = h_T @ W_q``; keys and values are the raw hidden states. Returns
    ``(context, weights)``.
    """
    H = np.asarray(H, dtype=np.float64)
    h_T = np.asarray(h_T, dtype=np.float64)
    wq = model.params["attn.q"]
    if H.shape[-1] != wq.shape[0] or h_T.shape[-1] != wq.shape[0]:
        raise ModelError("hidden width does not match the query projection")
    if H.ndim == 2:
        ctx, w, _ = _attend(H[None], h_T[None], wq)
        return ctx[0], w[0]
    ctx, w, _ = _attend(H, h_T, wq)
    return ctx, w


def boom(v: np.ndarray, model: ShaRnnModel) -> np.ndarray:
    """Expand to ``4d`` with a rectifier, then project back to ``d``."""
    p = model.params
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != p["boom.w1"].shape[0]:
        raise ModelError(f"boom input width {v.shape[-1]} != {p['boom.w1'].shape[0]}")
    u = np.maximum(v @ p["boom.w1"] + p["boom.b1"], 0.0)
    return u @ p["boom.w2"] + p["boom.b2"]


def forward(model: ShaRnnModel, seqs: np.ndarray):
    """Full forward pass on a ``(B, T, F)`` batch; returns probabilities and cache."""
    p = model.params
    emb = embed(seqs, model)
    hs, lstm_caches = _lstm_stack(emb, model)
    ctx, weights, q = _attend(hs, hs[:, -1], p["attn.q"])
    pre = ctx @ p["boom.w1"] + p["boom.b1"]
    u = np.maximum(pre, 0.0)
    out = u @ p["boom.w2"] + p["boom.b2"]
    logits = out @ p["head.w"] + p["head.b"]
    cache = (seqs, emb, hs, lstm_caches, ctx, weights, q, pre, u, out, logits)
    return softmax(logits, axis=1), cache


def _lstm_layer_backward(dout, cache, w):
    bsz, steps, d = dout.shape
    d_in = w.shape[0] - d
    dw = np.zeros_like(w)
    db = np.zeros(w.shape[1])
    dx = np.empty((bsz, steps, d_in))
    dh_next = np.zeros((bsz, d))
    dc_next = np.zeros((bsz, d))
    for t in reversed(range(steps)):
        xh, c_prev, i, f, o, g, tc = cache[t]
        dh = dout[:, t] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc**2) + dc_next
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f
        dz = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), do * o * (1 - o), dg * (1 - g**2)], axis=1
        )
        dw += xh.T @ dz
        db += dz.sum(axis=0)
        dxh = dz @ w.T
        dx[:, t] = dxh[:, :d_in]
        dh_next = dxh[:, d_in:]
    return dx, dw, db


def loss_and_grads(model: ShaRnnModel, seqs: np.ndarray, labels: np.ndarray):
    """Mean categorical cross-entropy and gradients for every parameter."""
    p = model.params
    labels = np.asarray(labels, dtype=np.int64)
    probs, (seqs, emb, hs, lstm_caches, ctx, weights, q, pre, u, out, logits) = forward(model, seqs)
    n = len(labels)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-logp[np.arange(n), labels].mean())

    g = {}
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    g["head.w"] = out.T @ dlogits
    g["head.b"] = dlogits.sum(axis=0)
    dout = dlogits @ p["head.w"].T
    g["boom.w2"] = u.T @ dout
    g["boom.b2"] = dout.sum(axis=0)
    dpre = (dout @ p["boom.w2"].T) * (pre > 0)
    g["boom.w1"] = ctx.T @ dpre
    g["boom.b1"] = dpre.sum(axis=0)
    dctx = dpre @ p["boom.w1"].T

    d = hs.shape[-1]
    dhs = weights[:, :, None] * dctx[:, None, :]
    dweights = np.einsum("btd,bd->bt", hs, dctx)
    dscores = weights * (dweights - (weights * dweights).sum(axis=1, keepdims=True))
    dhs += dscores[:, :, None] * q[:, None, :] / math.sqrt(d)
    dq = np.einsum("bt,btd->bd", dscores, hs) / math.sqrt(d)
    h_last = hs[:, -1]
    g["attn.q"] = h_last.T @ dq
    dhs[:, -1] += dq @ p["attn.q"].T

    dx = dhs
    for layer in reversed(range(model.config.layers)):
        dx, g[f"lstm{layer}.w"], g[f"lstm{layer}.b"] = _lstm_layer_backward(
            dx, lstm_caches[layer], p[f"lstm{layer}.w"]
        )
    g["embed.w"] = np.einsum("btf,btd->fd", seqs, dx)
    g["embed.b"] = dx.sum(axis=(0, 1))
    return loss, g


# ---------------------------------------------------------------- inference

def predict_proba(model: ShaRnnModel, thumbs: Sequence, batch_size: int = 64) -> np.ndarray:
    """Class probabilities, shape ``(len(thumbs), 5)``."""
    cfg = model.config
    out = []
    for start in range(0, len(thumbs), batch_size):
        seqs = preprocess_batch(thumbs[start : start + batch_size], cfg)
        out.append(forward(model, seqs)[0])
    return np.concatenate(out) if out else np.zeros((0, NUM_CLASSES))


def classify(model: ShaRnnModel, thumb, cfg: ClassifierConfig | None = None) -> np.ndarray:
    """Probability distribution over the five maturity classes.

    ``MaturityClass(int(probs.argmax()))`` is the prediction.
    """
    if cfg is not None and (cfg.side, cfg.d, cfg.layers) != (model.config.side, model.config.d, model.config.layers):
        raise ModelError("config does not match the model architecture")
    seq = preprocess(thumb, model.config)
    return forward(model, seq[None])[0][0]


# ---------------------------------------------------------------- training

def _coerce_dataset(data):
    """Accept ``(images, labels)`` or an iterable of ``(image, label)`` pairs."""
    if isinstance(data, tuple) and len(data) == 2 and not isinstance(data[0], RgbImage):
        images, labels = data
    else:
        pairs = list(data)
        images = [p[0] for p in pairs]
        labels = [p[1] for p in pairs]
    return list(images), np.array([int(MaturityClass(int(c))) for c in labels], dtype=np.int64)


def _evaluate(model, seqs, labels, batch_size=128):
    total, correct = 0.0, 0
    for start in range(0, len(seqs), batch_size):
        sl = slice(start, start + batch_size)
        probs, _ = forward(model, seqs[sl])
        y = labels[sl]
        total += float(-np.log(probs[np.arange(len(y)), y]).sum())
        correct += int((probs.argmax(axis=1) == y).sum())
    return total / len(seqs), correct / len(seqs)


def _run_phase(model, seqs, labels, epochs, lr, batch_size, clip_norm, rng, curve, val, phase):
    params = model.params
    for _ in range(epochs):
        order = rng.permutation(len(seqs))
        for start in range(0, len(seqs), batch_size):
            idx = order[start : start + batch_size]
            loss, grads = loss_and_grads(model, seqs[idx], labels[idx])
            if not np.isfinite(loss):
                raise DivergenceError(len(curve) + 1, loss)
            scale = lr
            if clip_norm is not None:
                norm = math.sqrt(sum(float((gr**2).sum()) for gr in grads.values()))
                if norm > clip_norm:
                    scale = lr * clip_norm / norm
            for k in params:
                params[k] -= scale * grads[k]
        loss, acc = _evaluate(model, seqs, labels)
        if not np.isfinite(loss):
            raise DivergenceError(len(curve) + 1, loss)
        entry = {"epoch": len(curve) + 1, "phase": phase, "loss": loss, "accuracy": acc}
        if val is not None:
            entry["val_loss"], entry["val_accuracy"] = _evaluate(model, *val)
        curve.append(entry)


def train_classifier(data, cfg: ClassifierConfig | None = None, val_data=None):
    """Train a classifier from scratch by mini-batch gradient descent.

    ``data`` (and optional ``val_data``) are ``(images, labels)`` or
    ``(image, label)`` pairs. When ``cfg.fine_tune_epochs`` is positive a
    second phase runs at one tenth of the learning rate. Returns
    ``(model, curve)`` where ``curve`` has one dict per epoch with the
    training-set loss and accuracy after that epoch.
    """
    cfg = cfg or ClassifierConfig()
    images, labels = _coerce_dataset(data)
    missing = sorted(set(range(NUM_CLASSES)) - set(labels.tolist()))
    if missing:
        names = ", ".join(MaturityClass(m).label for m in missing)
        raise TrainingError(f"no training samples for class(es): {names}")
    seqs = preprocess_batch(images, cfg)
    val = None
    if val_data is not None:
        v_images, v_labels = _coerce_dataset(val_data)
        if len(v_images):
            val = (preprocess_batch(v_images, cfg), v_labels)

    model = init_model(cfg)
    rng = np.random.default_rng(cfg.seed)
    curve: list[dict] = []
    _run_phase(model, seqs, labels, cfg.epochs, cfg.learning_rate, cfg.batch_size, cfg.clip_norm, rng, curve, val, "train")
    if cfg.fine_tune_epochs:
        _run_phase(model, seqs, labels, cfg.fine_tune_epochs, cfg.learning_rate / 10.0, cfg.batch_size,
                   cfg.clip_norm, rng, curve, val, "fine_tune")
    model.metadata = {"seed": cfg.seed, "epochs": len(curve), "final_loss": curve[-1]["loss"]}
    return model, curve


# ---------------------------------------------------------------- gradient check

def _as_sample(sample, cfg):
    x, y = sample
    if isinstance(x, RgbImage):
        x = preprocess(x, cfg)
    x = np.asarray(x, dtype=np.float64)
    return x[None] if x.ndim == 2 else x, np.atleast_1d(np.asarray(y, dtype=np.int64))


def gradient_errors(model: ShaRnnModel, sample, epsilon: float = 1e-4, n_coords: int = 100,
                    seed: int = 0, groups: Sequence[str] | None = None, floor: float = 1e-7) -> dict[str, float]:
    """Max relative error between analytic and central-difference gradients per parameter group.

    ``n_coords`` coordinates are sampled without replacement from each group
    (all of them when the group is smaller). The relative error is
    ``|a - n| / max(|a|, |n|, floor)``.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon {epsilon} outside [1e-7, 1e-3]")
    x, y = _as_sample(sample, model.config)
    _, grads = loss_and_grads(model, x, y)
    rng = np.random.default_rng(seed)
    work = model.copy()
    errors = {}
    for name in groups or list(model.params):
        arr = work.params[name]
        flat = arr.reshape(-1)
        picks = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
        worst = 0.0
        for idx in picks:
            orig = flat[idx]
            flat[idx] = orig + epsilon
            lp, _ = loss_and_grads(work, x, y)
            flat[idx] = orig - epsilon
            lm, _ = loss_and_grads(work, x, y)
            flat[idx] = orig
            numeric = (lp - lm) / (2 * epsilon)
            analytic = grads[name].reshape(-1)[idx]
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            worst = max(worst, err)
        errors[name] = worst
    return errors


def grad_check(model: ShaRnnModel, sample, epsilon: float = 1e-4, n_coords: int = 100, seed: int = 0) -> float:
    """Largest relative gradient error over all parameter groups."""
    return max(gradient_errors(model, sample, epsilon, n_coords, seed).values())


def with_zero_head(model: ShaRnnModel) -> ShaRnnModel:
    """Copy of ``model`` whose classification head is all zeros (uniform output)."""
    out = model.copy()
    out.params["head.w"][:] = 0.0
    out.params["head.b"][:] = 0.0
    return out

