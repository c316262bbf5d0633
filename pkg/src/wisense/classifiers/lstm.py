"""Single-layer LSTM classifier on raw amplitude windows, in plain numpy.

The network reads a (T x 90) z-normalized amplitude window step by step and
classifies from the final hidden state through a softmax readout; no
hand-crafted spectral features are involved. Training is stochastic
gradient descent on cross-entropy with full backpropagation through time
and global gradient-norm clipping. Every run is deterministic given the
seed: same seed, bitwise-identical loss trace.

Gate order throughout is (input, forget, candidate, output); the forget
gate bias starts at 1.0 so memory is initially retained.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import NonFiniteLoss, ShapeMismatch
from ..model import sorted_labels

DEFAULT_INPUT_DIM = 90
DEFAULT_HIDDEN = 200
MAGIC = b"WISENSE-LSTM\n"
FORMAT_VERSION = 1
_MICRO_BATCH = 64  # internal chunking bound; keeps BPTT caches small


@dataclass(frozen=True)
class TrainConfig:
    """SGD hyperparameters. Defaults follow the reference training recipe."""

    batch_size: int = 200
    learning_rate: float = 1e-4
    epochs: int = 10
    seed: int = 0
    clip_norm: float = 5.0

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ValueError("learning_rate and clip_norm must be positive")


_PARAM_NAMES = ("w_x", "w_h", "bias", "w_out", "b_out")


@dataclass
class LstmModel:
    """Parameters of the recurrent classifier.

    w_x: (D, 4H), w_h: (H, 4H), bias: (4H,), w_out: (H, C), b_out: (C,).
    """

    labels: tuple
    w_x: np.ndarray
    w_h: np.ndarray
    bias: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.w_x.shape[0]

    @property
    def hidden(self) -> int:
        return self.w_h.shape[0]

    @property
    def n_classes(self) -> int:
        return self.w_out.shape[1]

    @property
    def dtype(self) -> np.dtype:
        return self.w_x.dtype

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _PARAM_NAMES}

    @classmethod
    def initialize(
        cls,
        labels: Sequence,
        input_dim: int = DEFAULT_INPUT_DIM,
        hidden: int = DEFAULT_HIDDEN,
        seed: int = 0,
        dtype=np.float64,
    ) -> "LstmModel":
        ordered = sorted_labels(labels)
        rng = np.random.default_rng([307, int(seed)])
        bound = 1.0 / np.sqrt(hidden)
        u = lambda *shape: rng.uniform(-bound, bound, size=shape).astype(dtype)
        bias = np.zeros(4 * hidden, dtype=dtype)
        bias[hidden : 2 * hidden] = 1.0  # forget gate starts open
        return cls(
            labels=ordered,
            w_x=u(input_dim, 4 * hidden),
            w_h=u(hidden, 4 * hidden),
            bias=bias,
            w_out=u(hidden, len(ordered)),
            b_out=np.zeros(len(ordered), dtype=dtype),
        )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _forward(model: LstmModel, x: np.ndarray, keep_cache: bool):
    """Run the recurrence over (B, T, D); returns final h and the step cache."""
    b, t_len, d = x.shape
    h_dim = model.hidden
    h = np.zeros((b, h_dim), dtype=model.dtype)
    c = np.zeros((b, h_dim), dtype=model.dtype)
    # the input projection has no recurrence: do it for all steps at once
    zx = (x.reshape(b * t_len, d) @ model.w_x).reshape(b, t_len, 4 * h_dim)
    cache = []
    for t in range(t_len):
        z = zx[:, t] + h @ model.w_h + model.bias
        gi = _sigmoid(z[:, :h_dim])
        gf = _sigmoid(z[:, h_dim : 2 * h_dim])
        gg = np.tanh(z[:, 2 * h_dim : 3 * h_dim])
        go = _sigmoid(z[:, 3 * h_dim :])
        c_prev = c
        c = gf * c_prev + gi * gg
        tanh_c = np.tanh(c)
        if keep_cache:
            cache.append((h, c_prev, gi, gf, gg, go, tanh_c))
        h = go * tanh_c
    return h, c, cache


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def lstm_loss_and_grads(
    model: LstmModel, x: np.ndarray, y: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over the batch and gradients for every parameter.

    Exposed separately so gradients can be checked against finite
    differences.
    """
    x = np.asarray(x, dtype=model.dtype)
    b, t_len, _ = x.shape
    h_dim = model.hidden
    h_final, _, cache = _forward(model, x, keep_cache=True)
    logits = h_final @ model.w_out + model.b_out
    probs = _softmax(logits)
    eps = np.finfo(model.dtype).tiny
    loss = float(-np.log(np.maximum(probs[np.arange(b), y], eps)).mean())

    dlogits = probs.copy()
    dlogits[np.arange(b), y] -= 1.0
    dlogits /= b
    grads = {
        "w_out": h_final.T @ dlogits,
        "b_out": dlogits.sum(axis=0),
        "w_h": np.zeros_like(model.w_h),
    }
    dh = dlogits @ model.w_out.T
    dc = np.zeros((b, h_dim), dtype=model.dtype)
    dz_steps = [None] * t_len
    for t in range(t_len - 1, -1, -1):
        h_prev, c_prev, gi, gf, gg, go, tanh_c = cache[t]
        dgo = dh * tanh_c
        dc = dc + dh * go * (1.0 - tanh_c**2)
        dgi = dc * gg
        dgf = dc * c_prev
        dgg = dc * gi
        dz = np.concatenate(
            [
                dgi * gi * (1.0 - gi),
                dgf * gf * (1.0 - gf),
                dgg * (1.0 - gg**2),
                dgo * go * (1.0 - go),
            ],
            axis=1,
        )
        dz_steps[t] = dz
        grads["w_h"] += h_prev.T @ dz
        dh = dz @ model.w_h.T
        dc = dc * gf
    # input-side gradients batch over all steps at once
    dz_flat = np.stack(dz_steps, axis=1).reshape(b * t_len, 4 * h_dim)
    grads["w_x"] = x.reshape(b * t_len, -1).T @ dz_flat
    grads["bias"] = dz_flat.sum(axis=0)
    return loss, grads


def lstm_fit(
    windows: np.ndarray,
    labels: Sequence,
    config: TrainConfig = TrainConfig(),
    model: LstmModel | None = None,
    hidden: int = DEFAULT_HIDDEN,
    dtype=np.float64,
) -> tuple[LstmModel, list[float]]:
    """Train on (N, T, D) windows; returns the model and per-epoch mean loss.

    Batches are seeded shuffles; gradients are clipped to a global norm
    before the SGD step. Large batches are accumulated in fixed-size chunks,
    which changes nothing but peak memory.
    """
    x = np.asarray(windows, dtype=dtype)
    if x.ndim != 3:
        raise ShapeMismatch(f"windows must be (N, T, D), got shape {x.shape}")
    if model is None:
        model = LstmModel.initialize(
            labels, input_dim=x.shape[2], hidden=hidden, seed=config.seed, dtype=dtype
        )
    if x.shape[2] != model.input_dim:
        raise ShapeMismatch(f"windows have dim {x.shape[2]}, model expects {model.input_dim}")
    index = {l: i for i, l in enumerate(model.labels)}
    try:
        y = np.asarray([index[l] for l in labels], dtype=np.int64)
    except KeyError as exc:
        raise ShapeMismatch(f"label {exc} not covered by the model") from exc

    rng = np.random.default_rng([313, int(config.seed)])
    trace: list[float] = []
    n = x.shape[0]
    for _epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, grads = _accumulated_grads(model, x, y, batch)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"training loss became {loss}; aborting")
            epoch_loss += loss * len(batch)

            norm = np.sqrt(sum(float((g**2).sum()) for g in grads.values()))
            scale = config.learning_rate
            if norm > config.clip_norm:
                scale *= config.clip_norm / norm
            for name in _PARAM_NAMES:
                getattr(model, name)[...] -= scale * grads[name]
        trace.append(epoch_loss / n)
    return model, trace


def _accumulated_grads(model, x, y, batch_idx):
    """Loss/grads over a batch, accumulated in micro-chunks (fixed order)."""
    total = len(batch_idx)
    loss_sum = 0.0
    grads_sum: dict[str, np.ndarray] | None = None
    for start in range(0, total, _MICRO_BATCH):
        part = batch_idx[start : start + _MICRO_BATCH]
        loss, grads = lstm_loss_and_grads(model, x[part], y[part])
        w = len(part) / total
        loss_sum += loss * w
        if grads_sum is None:
            grads_sum = {k: g * w for k, g in grads.items()}
        else:
            for k, g in grads.items():
                grads_sum[k] += g * w
    return loss_sum, grads_sum


def lstm_predict(model: LstmModel, window: np.ndarray):
    """Forward pass: (label, class probabilities) for one (T, D) window."""
    w = np.asarray(window, dtype=model.dtype)
    if w.ndim != 2 or w.shape[1] != model.input_dim:
        raise ShapeMismatch(
            f"window must be (T, {model.input_dim}), got shape {w.shape}"
        )
    h, _, _ = _forward(model, w[None], keep_cache=False)
    probs = _softmax(h @ model.w_out + model.b_out)[0]
    return model.labels[int(np.argmax(probs))], probs


def lstm_predict_batch(model: LstmModel, windows: np.ndarray) -> list:
    w = np.asarray(windows, dtype=model.dtype)
    if w.ndim != 3 or w.shape[2] != model.input_dim:
        raise ShapeMismatch(f"windows must be (N, T, {model.input_dim}), got shape {w.shape}")
    out = []
    for start in range(0, w.shape[0], _MICRO_BATCH):
        h, _, _ = _forward(model, w[start : start + _MICRO_BATCH], keep_cache=False)
        probs = _softmax(h @ model.w_out + model.b_out)
        out.extend(model.labels[int(i)] for i in probs.argmax(axis=1))
    return out


# ---------------------------------------------------------------------------
# serialization: JSON header + flat little-endian tensor blob in one file


def save_lstm(model: LstmModel, path: str | Path, extra: dict | None = None) -> None:
    header = {
        "format": "wisense-lstm",
        "version": FORMAT_VERSION,
        "labels": [getattr(l, "value", l) for l in model.labels],
        "dtype": str(np.dtype(model.dtype)),
        "tensors": [[name, list(getattr(model, name).shape)] for name in _PARAM_NAMES],
    }
    if extra:
        header.update(extra)
    header_bytes = json.dumps(header).encode()
    blob = b"".join(
        np.ascontiguousarray(getattr(model, name)).astype(model.dtype, copy=False).tobytes()
        for name in _PARAM_NAMES
    )
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(blob)


def read_lstm_header(path: str | Path) -> dict:
    """Read only the JSON header of a saved model file."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path} is not an LSTM model file")
        (header_len,) = struct.unpack("<I", fh.read(4))
        return json.loads(fh.read(header_len).decode())


def load_lstm(path: str | Path, label_type=None) -> LstmModel:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path} is not an LSTM model file")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode())
        if header.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported LSTM model version {header.get('version')}")
        dtype = np.dtype(header["dtype"])
        tensors = {}
        for name, shape in header["tensors"]:
            count = int(np.prod(shape))
            data = np.frombuffer(fh.read(count * dtype.itemsize), dtype=dtype)
            tensors[name] = data.reshape(shape).copy()
    labels = header["labels"]
    if label_type is not None:
        labels = [label_type(l) for l in labels]
    return LstmModel(labels=tuple(labels), **tensors)
