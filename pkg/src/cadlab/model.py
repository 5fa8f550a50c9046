"""Small fully connected classifier with an analytic input gradient.

The network is deliberately simple: flatten, two rectified hidden layers,
softmax output. What matters downstream is that the gradient of the loss
with respect to raw [0, 255] pixels is exact and cheap, since that
gradient is the whole attack surface.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ParameterError, ShapeError
from .imagecore import Image, round_half_away

_MAGIC = b"MDL1"

#: Pixel values are scaled by this before entering the first layer.
INPUT_SCALE = 1.0 / 255.0


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.1
    seed: int = 0
    hidden_sizes: tuple = (128, 64)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ParameterError("epochs and batch size must be >= 1")
        if self.learning_rate < 0.0:
            raise ParameterError("learning rate must be >= 0")
        if any(h < 1 for h in self.hidden_sizes):
            raise ParameterError("hidden sizes must be >= 1")


@dataclass
class Dataset:
    """Labeled images with a fixed class count and a split tag."""

    images: list
    labels: list
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ParameterError(
                f"{len(self.images)} images vs {len(self.labels)} labels"
            )
        if self.num_classes < 2:
            raise ParameterError("need at least 2 classes")
        for lab in self.labels:
            if not 0 <= lab < self.num_classes:
                raise ParameterError(f"label {lab} out of range")
        if self.images:
            c, h, w = self.images[0].planes.shape
            for im in self.images:
                if im.planes.shape != (c, h, w):
                    raise ShapeError("dataset images must share dimensions")

    def __len__(self):
        return len(self.images)


@dataclass
class Model:
    input_shape: tuple  # (channels, height, width)
    num_classes: int
    weights: list = field(default_factory=list)  # per layer, (out, in)
    biases: list = field(default_factory=list)

    def __post_init__(self):
        if self.num_classes < 2:
            raise ParameterError("need at least 2 classes")
        dim = int(np.prod(self.input_shape))
        for w, b in zip(self.weights, self.biases):
            if w.shape[1] != dim or w.shape[0] != b.shape[0]:
                raise ShapeError(
                    f"layer shape chain broken at {w.shape} (expect in={dim})"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ParameterError("non-finite parameters")
            dim = w.shape[0]
        if self.weights and dim != self.num_classes:
            raise ShapeError(f"final layer has {dim} outputs, not {self.num_classes}")

    @property
    def input_dim(self):
        return int(np.prod(self.input_shape))


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_batch(model, x):
    """x: (n, input_dim) already scaled. Returns activations per layer."""
    acts = [x]
    a = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w.T + b
        a = z if i == last else np.maximum(z, 0.0)
        acts.append(a)
    return acts


def _check_input(model, img: Image):
    if img.planes.shape != model.input_shape:
        raise ShapeError(
            f"image shape {img.planes.shape} does not match model "
            f"input {model.input_shape}"
        )


def forward(model: Model, img: Image) -> np.ndarray:
    """Class probability vector for one image."""
    _check_input(model, img)
    x = img.planes.reshape(1, -1) * INPUT_SCALE
    logits = _forward_batch(model, x)[-1]
    return _softmax(logits)[0]


def predict_batch(model: Model, images) -> np.ndarray:
    """Argmax class per image; ties resolved to the lowest index."""
    x = np.stack([im.planes.ravel() for im in images]) * INPUT_SCALE
    logits = _forward_batch(model, x)[-1]
    return np.argmax(logits, axis=1)


def loss_and_input_grad(model: Model, img: Image, label: int):
    """Cross-entropy loss and its gradient w.r.t. raw [0, 255] pixels."""
    _check_input(model, img)
    if not 0 <= label < model.num_classes:
        raise ParameterError(f"label {label} out of range")
    x = img.planes.reshape(1, -1) * INPUT_SCALE
    acts = _forward_batch(model, x)
    probs = _softmax(acts[-1])
    loss = -float(np.log(probs[0, label]))
    delta = probs.copy()
    delta[0, label] -= 1.0  # dJ/dlogits = p - onehot
    for i in range(len(model.weights) - 1, 0, -1):
        delta = (delta @ model.weights[i]) * (acts[i] > 0.0)
    grad = (delta @ model.weights[0]) * INPUT_SCALE
    return loss, grad.reshape(img.planes.shape)


def train(data: Dataset, cfg: TrainConfig) -> Model:
    """Mini-batch gradient descent; bit-reproducible for a given seed.

    Draw order from the seeded generator: layer parameters in forward
    order (weights then bias per layer), then one index permutation per
    epoch.
    """
    if len(data) == 0:
        raise ParameterError("empty dataset")
    rng = np.random.default_rng(cfg.seed)
    shape = data.images[0].planes.shape
    dims = [int(np.prod(shape))] + list(cfg.hidden_sizes) + [data.num_classes]
    weights, biases = [], []
    for din, dout in zip(dims, dims[1:]):
        scale = np.sqrt(2.0 / din)
        weights.append(rng.standard_normal((dout, din)) * scale)
        biases.append(np.zeros(dout))
    model = Model(input_shape=shape, num_classes=data.num_classes,
                  weights=weights, biases=biases)

    x_all = np.stack([im.planes.ravel() for im in data.images]) * INPUT_SCALE
    y_all = np.asarray(data.labels, dtype=np.int64)
    n = len(data)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x, y = x_all[idx], y_all[idx]
            acts = _forward_batch(model, x)
            probs = _softmax(acts[-1])
            delta = probs
            delta[np.arange(len(idx)), y] -= 1.0
            delta /= len(idx)
            for i in range(len(model.weights) - 1, -1, -1):
                gw = delta.T @ acts[i]
                gb = delta.sum(axis=0)
                if i > 0:
                    delta = (delta @ model.weights[i]) * (acts[i] > 0.0)
                model.weights[i] -= cfg.learning_rate * gw
                model.biases[i] -= cfg.learning_rate * gb
    return model


def accuracy(model: Model, data: Dataset) -> float:
    if len(data) == 0:
        raise ParameterError("empty dataset")
    pred = predict_batch(model, data.images)
    return float(np.mean(pred == np.asarray(data.labels)))


def quantize_for_classifier(img: Image) -> Image:
    """Integer pixels, as if the image had passed through a file."""
    return Image(round_half_away(img.planes))


# ---------------------------------------------------------------------------
# Serialization: magic, architecture descriptor, then parameters as
# little-endian float64 in forward order (weights then bias per layer).

def save_model(model: Model) -> bytes:
    c, h, w = model.input_shape
    hidden = [wt.shape[0] for wt in model.weights[:-1]]
    head = struct.pack(
        "<4sIIIIB", _MAGIC, c, h, w, model.num_classes, len(hidden)
    )
    head += struct.pack(f"<{len(hidden)}I", *hidden) if hidden else b""
    body = b"".join(
        np.ascontiguousarray(a, dtype="<f8").tobytes()
        for wt, b in zip(model.weights, model.biases)
        for a in (wt, b)
    )
    return head + body


def load_model(data: bytes) -> Model:
    head = struct.calcsize("<4sIIIIB")
    if len(data) < head:
        raise FormatError("model file shorter than its header")
    magic, c, h, w, k, nh = struct.unpack_from("<4sIIIIB", data)
    if magic != _MAGIC:
        raise FormatError(f"bad model magic {magic!r}")
    pos = head
    if len(data) < pos + 4 * nh:
        raise FormatError("truncated architecture descriptor")
    hidden = list(struct.unpack_from(f"<{nh}I", data, pos)) if nh else []
    pos += 4 * nh
    dims = [c * h * w] + hidden + [k]
    weights, biases = [], []
    for din, dout in zip(dims, dims[1:]):
        need = 8 * (dout * din + dout)
        if len(data) < pos + need:
            raise FormatError("truncated model parameters")
        wt = np.frombuffer(data, dtype="<f8", count=dout * din, offset=pos)
        pos += 8 * dout * din
        b = np.frombuffer(data, dtype="<f8", count=dout, offset=pos)
        pos += 8 * dout
        weights.append(wt.reshape(dout, din).copy())
        biases.append(b.copy())
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes in model file")
    return Model(input_shape=(c, h, w), num_classes=k,
                 weights=weights, biases=biases)
