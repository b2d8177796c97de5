"""Desk-scale federated averaging on a one-hidden-layer network.

Each device trains a 50-unit sigmoid MLP with softmax cross-entropy on its
local shard by full-batch gradient descent; the aggregator combines weight
vectors in proportion to local dataset sizes.  The dataset is either a
synthetic 8x8 digit task (keeps a full training run under a minute) or real
IDX-format image/label files.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DatasetFormatError

N_CLASSES = 10

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class FlConfig:
    hidden_units: int = 50
    learning_rate: float = 1.0
    local_iterations: int = 1
    global_rounds: int = 50
    samples_per_device: int = 200
    seed: int = 0
    drop_on_outage: bool = True

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if min(self.hidden_units, self.local_iterations, self.global_rounds,
               self.samples_per_device) < 1:
            raise ConfigError("counts must be >= 1")


@dataclass
class Dataset:
    """Per-device training shards plus one held-out evaluation split."""

    device_x: list[np.ndarray]
    device_y: list[np.ndarray]
    eval_x: np.ndarray
    eval_y: np.ndarray

    @property
    def n_devices(self) -> int:
        return len(self.device_x)

    @property
    def input_dim(self) -> int:
        return self.eval_x.shape[1]


class Model:
    """One-hidden-layer network stored as a flat weight vector.

    Layout: [W1 (d x h), b1 (h), W2 (h x 10), b2 (10)] flattened in this
    order so aggregation is plain vector arithmetic.
    """

    def __init__(self, input_dim: int, hidden_units: int, weights: np.ndarray):
        self.input_dim = input_dim
        self.hidden_units = hidden_units
        self.weights = weights

    @classmethod
    def init(cls, input_dim: int, hidden_units: int, rng: np.random.Generator) -> "Model":
        d, h = input_dim, hidden_units
        w1 = rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, h))
        w2 = rng.normal(0.0, 1.0 / np.sqrt(h), size=(h, N_CLASSES))
        flat = np.concatenate([w1.ravel(), np.zeros(h), w2.ravel(), np.zeros(N_CLASSES)])
        return cls(input_dim, hidden_units, flat)

    @classmethod
    def zeros(cls, input_dim: int, hidden_units: int) -> "Model":
        d, h = input_dim, hidden_units
        n = d * h + h + h * N_CLASSES + N_CLASSES
        return cls(input_dim, hidden_units, np.zeros(n))

    def unpack(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        d, h = self.input_dim, self.hidden_units
        w = self.weights
        i = 0
        w1 = w[i:i + d * h].reshape(d, h); i += d * h
        b1 = w[i:i + h]; i += h
        w2 = w[i:i + h * N_CLASSES].reshape(h, N_CLASSES); i += h * N_CLASSES
        b2 = w[i:i + N_CLASSES]
        return w1, b1, w2, b2

    def copy(self) -> "Model":
        return Model(self.input_dim, self.hidden_units, self.weights.copy())


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward(model: Model, x: np.ndarray):
    w1, b1, w2, b2 = model.unpack()
    hidden = _sigmoid(x @ w1 + b1)
    probs = _softmax(hidden @ w2 + b2)
    return hidden, probs


def local_loss(model: Model, x: np.ndarray, y: np.ndarray) -> float:
    """Mean softmax cross-entropy over the device's samples."""
    _, probs = _forward(model, x)
    picked = probs[np.arange(len(y)), y]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def loss_gradient(model: Model, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Analytic full-batch gradient of local_loss in flat-weight layout."""
    w1, b1, w2, b2 = model.unpack()
    m = len(y)
    hidden, probs = _forward(model, x)
    delta_out = probs.copy()
    delta_out[np.arange(m), y] -= 1.0
    delta_out /= m
    g_w2 = hidden.T @ delta_out
    g_b2 = delta_out.sum(axis=0)
    delta_hid = (delta_out @ w2.T) * hidden * (1.0 - hidden)
    g_w1 = x.T @ delta_hid
    g_b1 = delta_hid.sum(axis=0)
    return np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])


def local_update(model: Model, x: np.ndarray, y: np.ndarray, learning_rate: float,
                 local_iterations: int) -> Model:
    """Full-batch gradient descent, applied local_iterations times."""
    w = model.weights.copy()
    out = Model(model.input_dim, model.hidden_units, w)
    for _ in range(local_iterations):
        out.weights = out.weights - learning_rate * loss_gradient(out, x, y)
    if not np.all(np.isfinite(out.weights)):
        raise FloatingPointError("local update diverged to non-finite weights")
    return out


def aggregate(models: list[Model], sizes: list[int] | np.ndarray) -> Model:
    """Dataset-size weighted average of the devices' weight vectors."""
    if not models:
        raise ConfigError("aggregate needs at least one model")
    dim = models[0].weights.shape
    if any(m.weights.shape != dim for m in models):
        raise ConfigError("model dimension mismatch")
    sizes = np.asarray(sizes, dtype=float)
    if len(sizes) != len(models) or np.any(sizes <= 0):
        raise ConfigError("one positive size per model required")
    weights = sizes / sizes.sum()
    stacked = np.stack([m.weights for m in models])
    return Model(models[0].input_dim, models[0].hidden_units, weights @ stacked)


def accuracy(model: Model, x: np.ndarray, y: np.ndarray) -> float:
    _, probs = _forward(model, x)
    return float(np.mean(probs.argmax(axis=1) == y))


def run_round(
    global_model: Model,
    data: Dataset,
    cfg: FlConfig,
    participating: np.ndarray | None = None,
) -> tuple[Model, float, list[float]]:
    """One FL round: broadcast, local updates, aggregate, evaluate.

    ``participating`` masks devices out of aggregation (an outage round);
    with no participants the global model carries over unchanged.
    """
    if participating is None:
        participating = np.ones(data.n_devices, dtype=bool)
    updated: list[Model] = []
    sizes: list[int] = []
    losses: list[float] = []
    for n in range(data.n_devices):
        local = local_update(global_model, data.device_x[n], data.device_y[n],
                             cfg.learning_rate, cfg.local_iterations)
        losses.append(local_loss(local, data.device_x[n], data.device_y[n]))
        if participating[n]:
            updated.append(local)
            sizes.append(len(data.device_y[n]))
    new_global = aggregate(updated, sizes) if updated else global_model.copy()
    return new_global, accuracy(new_global, data.eval_x, data.eval_y), losses


def train(
    data: Dataset,
    cfg: FlConfig,
    participation: list[np.ndarray] | None = None,
) -> tuple[Model, list[float]]:
    """Full training run; returns the final model and per-round accuracy.

    ``participation`` optionally supplies a per-round device mask (from the
    PHY outage simulation when the coupled mode is on).
    """
    rng = np.random.default_rng(cfg.seed)
    model = Model.init(data.input_dim, cfg.hidden_units, rng)
    curve: list[float] = []
    for r in range(cfg.global_rounds):
        mask = participation[r] if participation is not None else None
        model, acc, _ = run_round(model, data, cfg, mask)
        curve.append(acc)
    return model, curve


# --------------------------------------------------------------------------
# Datasets
# --------------------------------------------------------------------------

# 8x8 digit prototypes, one per class; blurred and noised per sample.
_DIGIT_ROWS = {
    0: ("..####..", ".##..##.", ".#....#.", ".#....#.", ".#....#.", ".#....#.",
        ".##..##.", "..####.."),
    1: ("...##...", "..###...", "...##...", "...##...", "...##...", "...##...",
        "...##...", ".######."),
    2: ("..####..", ".##..##.", ".....##.", "....##..", "...##...", "..##....",
        ".##.....", ".######."),
    3: (".#####..", "....##..", "...##...", "..####..", ".....##.", ".....##.",
        ".##..##.", "..####.."),
    4: ("....##..", "...###..", "..#.##..", ".#..##..", ".######.", "....##..",
        "....##..", "....##.."),
    5: (".######.", ".##.....", ".##.....", ".#####..", ".....##.", ".....##.",
        ".##..##.", "..####.."),
    6: ("..####..", ".##.....", ".##.....", ".#####..", ".##..##.", ".##..##.",
        ".##..##.", "..####.."),
    7: (".######.", ".....##.", "....##..", "....##..", "...##...", "...##...",
        "..##....", "..##...."),
    8: ("..####..", ".##..##.", ".##..##.", "..####..", ".##..##.", ".##..##.",
        ".##..##.", "..####.."),
    9: ("..####..", ".##..##.", ".##..##.", ".##..##.", "..#####.", ".....##.",
        ".....##.", "..####.."),
}


def _digit_prototypes() -> np.ndarray:
    protos = np.zeros((N_CLASSES, 8, 8))
    for digit, rows in _DIGIT_ROWS.items():
        for i, row in enumerate(rows):
            for j, c in enumerate(row):
                if c == "#":
                    protos[digit, i, j] = 1.0
    # light blur so class boundaries are not axis-aligned pixels
    kernel = np.array([[0.05, 0.1, 0.05], [0.1, 0.4, 0.1], [0.05, 0.1, 0.05]])
    blurred = np.zeros_like(protos)
    padded = np.pad(protos, ((0, 0), (1, 1), (1, 1)), mode="edge")
    for di in range(3):
        for dj in range(3):
            blurred += kernel[di, dj] * padded[:, di:di + 8, dj:dj + 8]
    return blurred.reshape(N_CLASSES, 64)


def synthetic_dataset(
    n_devices: int,
    samples_per_device: int,
    seed: int,
    eval_samples: int = 1000,
    noise_sigma: float = 0.25,
    label_skew: bool = False,
) -> Dataset:
    """Blurred 8x8 digit prototypes with Gaussian perturbations.

    Training samples are generated as one pool of n_devices * D samples and
    split disjointly across devices (i.i.d. by default, sorted by label when
    ``label_skew`` is set).  Deterministic for a given seed.
    """
    rng = np.random.default_rng(seed)
    protos = _digit_prototypes()

    def draw(count: int) -> tuple[np.ndarray, np.ndarray]:
        labels = rng.integers(0, N_CLASSES, size=count)
        x = protos[labels] + noise_sigma * rng.normal(size=(count, 64))
        return x.astype(np.float64), labels.astype(np.int64)

    total = n_devices * samples_per_device
    train_x, train_y = draw(total)
    if label_skew:
        order = np.argsort(train_y, kind="stable")
        train_x, train_y = train_x[order], train_y[order]
    eval_x, eval_y = draw(eval_samples)
    device_x = [train_x[i * samples_per_device:(i + 1) * samples_per_device]
                for i in range(n_devices)]
    device_y = [train_y[i * samples_per_device:(i + 1) * samples_per_device]
                for i in range(n_devices)]
    return Dataset(device_x, device_y, eval_x, eval_y)


def _read_idx(path: Path, expected_magic: int) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < 4:
        raise DatasetFormatError(f"{path}: truncated header at byte 0")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise DatasetFormatError(
            f"{path}: bad magic 0x{magic:08x} at byte 0, expected 0x{expected_magic:08x}"
        )
    n_dims = magic & 0xFF
    header_len = 4 + 4 * n_dims
    if len(raw) < header_len:
        raise DatasetFormatError(f"{path}: truncated dimension list at byte {len(raw)}")
    dims = struct.unpack(f">{n_dims}I", raw[4:header_len])
    count = int(np.prod(dims))
    if len(raw) != header_len + count:
        raise DatasetFormatError(
            f"{path}: payload length {len(raw) - header_len} at byte {header_len}, "
            f"expected {count}"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header_len).reshape(dims)


def load_idx_dataset(
    images_path: str | Path,
    labels_path: str | Path,
    n_devices: int,
    samples_per_device: int,
    seed: int,
    eval_samples: int = 1000,
    downsample_to: int | None = 8,
) -> Dataset:
    """Big-endian IDX image/label pair, split disjointly across devices.

    Images are scaled to [0, 1] and optionally downsampled (nearest pixel)
    to ``downsample_to`` x ``downsample_to`` so the default model size works
    for any source resolution.
    """
    images = _read_idx(Path(images_path), IDX_IMAGE_MAGIC)
    labels = _read_idx(Path(labels_path), IDX_LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise DatasetFormatError(
            f"image count {images.shape[0]} != label count {labels.shape[0]}"
        )
    total_needed = n_devices * samples_per_device + eval_samples
    if images.shape[0] < total_needed:
        raise DatasetFormatError(
            f"need {total_needed} samples, file holds {images.shape[0]}"
        )
    if downsample_to is not None and downsample_to != images.shape[1]:
        sel = np.floor(np.linspace(0, images.shape[1] - 1e-9, downsample_to)).astype(int)
        images = images[:, sel][:, :, sel]
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    y = labels.astype(np.int64)

    rng = np.random.default_rng(seed)
    order = rng.permutation(images.shape[0])
    x, y = x[order], y[order]
    device_x = [x[i * samples_per_device:(i + 1) * samples_per_device]
                for i in range(n_devices)]
    device_y = [y[i * samples_per_device:(i + 1) * samples_per_device]
                for i in range(n_devices)]
    base = n_devices * samples_per_device
    return Dataset(device_x, device_y, x[base:base + eval_samples],
                   y[base:base + eval_samples])


def load_dataset(
    source: str,
    n_devices: int,
    samples_per_device: int,
    seed: int,
    labels_path: str | None = None,
    label_skew: bool = False,
) -> Dataset:
    """``synthetic`` or a path to IDX images (labels file alongside)."""
    if source == "synthetic":
        return synthetic_dataset(n_devices, samples_per_device, seed,
                                 label_skew=label_skew)
    if labels_path is None:
        raise ConfigError("IDX datasets need labels_path")
    return load_idx_dataset(source, labels_path, n_devices, samples_per_device, seed)
