"""Residual convolutional denoiser with hand-written forward/backward passes.

The model predicts the noise; the output is clamp(input - prediction, 0, 1)
with a straight-through subgradient (zero where clamped).  Default
architecture: 5 conv layers, 16 channels, 3x3 kernels, ReLU between layers,
no normalization.  All passes run through the selected conv backend.
"""

from __future__ import annotations

import dataclasses
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from ..core import PixelGrid
from ..rng import SeededRng
from ..sampling import NoiseStrategy, next_noise
from . import backend

__all__ = [
    "ConvLayer",
    "DenoiserModel",
    "TrainConfig",
    "TrainHistory",
    "ModelFormatError",
    "init_model",
    "forward",
    "grad_wrt_params",
    "grad_wrt_input",
    "train",
    "save_model",
    "load_model",
]


@dataclass
class ConvLayer:
    weight: np.ndarray  # (out_c, in_c, 3, 3)
    bias: np.ndarray  # (out_c,)
    relu: bool


@dataclass
class DenoiserModel:
    layers: list[ConvLayer]
    residual: bool = True
    sigma_trained: float | None = None
    seed: int = 0


@dataclass
class TrainConfig:
    strategy: NoiseStrategy
    patch_size: int = 40
    stride: int | None = None  # patch extraction stride; defaults to patch_size
    epochs: int = 1
    batch_size: int = 16
    learning_rate: float = 1e-3
    lr_decay: float = 1.0  # per-epoch multiplier on the learning rate
    optimizer: str = "adam"  # or "sgd-momentum"
    seed: int = 0
    val_fraction: float = 0.1
    max_steps: int | None = None  # optional cap on total optimizer steps

    def __post_init__(self) -> None:
        if self.patch_size < 8:
            raise ValueError("patch_size must be >= 8")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd-momentum"):
            raise ValueError(f"unknown optimizer: {self.optimizer!r}")
        if self.stride is not None and self.stride < 1:
            raise ValueError("stride must be >= 1")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_psnr: list[float] = field(default_factory=list)


class ModelFormatError(ValueError):
    """Corrupt or unsupported model file; offset is the failing byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def init_model(layer_count: int = 5, channels: int = 16, seed: int = 0) -> DenoiserModel:
    """He-initialized model: 1 -> channels -> ... -> channels -> 1."""
    if layer_count < 2:
        raise ValueError("layer_count must be >= 2")
    if channels < 1:
        raise ValueError("channels must be >= 1")
    root = SeededRng(seed)
    layers = []
    for i in range(layer_count):
        in_c = 1 if i == 0 else channels
        out_c = 1 if i == layer_count - 1 else channels
        scale = math.sqrt(2.0 / (in_c * 9))
        flat = root.child(i).normal(out_c * in_c * 9, scale)
        layers.append(
            ConvLayer(
                weight=flat.reshape(out_c, in_c, 3, 3),
                bias=np.zeros(out_c),
                relu=i < layer_count - 1,
            )
        )
    return DenoiserModel(layers=layers, seed=seed)


def _check_arch(model: DenoiserModel) -> None:
    if model.layers[0].weight.shape[1] != 1 or model.layers[-1].weight.shape[0] != 1:
        raise ValueError("model must map 1 input channel to 1 output channel")


def _pad(x: np.ndarray) -> np.ndarray:
    return np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))


def _forward_batch(model: DenoiserModel, x: np.ndarray):
    """Forward pass on a (B, 1, H, W) batch; returns (output, cache)."""
    caches = []
    act = x
    for layer in model.layers:
        xpad = _pad(act)
        z = backend.conv3x3(xpad, layer.weight, layer.bias)
        mask = None
        if layer.relu:
            mask = z > 0.0
            z = z * mask
        caches.append((xpad, mask))
        act = z
    raw = x - act if model.residual else act
    out = np.clip(raw, 0.0, 1.0)
    through = (raw >= 0.0) & (raw <= 1.0)
    return out, (caches, through, x)


def _backward_batch(model: DenoiserModel, cache, out: np.ndarray, clean: np.ndarray):
    """Gradients of mean((out-clean)^2) w.r.t. parameters and the input."""
    caches, through, _x = cache
    dout = (2.0 / out.size) * (out - clean)
    dthrough = dout * through  # straight-through clamp: zero where clamped
    dact = -dthrough if model.residual else dthrough
    param_grads = []
    for layer, (xpad, mask) in zip(reversed(model.layers), reversed(caches)):
        if mask is not None:
            dact = dact * mask
        dweight, dbias = backend.conv3x3_wgrad(xpad, dact)
        flipped = np.ascontiguousarray(
            layer.weight.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
        )
        dact = backend.conv3x3(_pad(dact), flipped, np.zeros(flipped.shape[0]))
        param_grads.append((dweight, dbias))
    param_grads.reverse()
    dx = dthrough + dact if model.residual else dact
    return param_grads, dx


def _as_batch(items) -> np.ndarray:
    grids = [g.grid() if isinstance(g, PixelGrid) else np.asarray(g, float) for g in items]
    return np.stack(grids)[:, None, :, :]


def forward(model: DenoiserModel, noisy: PixelGrid) -> PixelGrid:
    """Denoise one image: clamp(noisy - predicted_noise, 0, 1)."""
    _check_arch(model)
    grid = noisy.grid() if isinstance(noisy, PixelGrid) else np.asarray(noisy, float)
    if grid.ndim != 2 or min(grid.shape) < 3:
        raise ValueError("input must be a 2-D image at least 3x3")
    out, _ = _forward_batch(model, grid[None, None])
    return PixelGrid.from_array(out[0, 0])


def _forward_array(model: DenoiserModel, grid: np.ndarray) -> np.ndarray:
    out, _ = _forward_batch(model, grid[None, None])
    return out[0, 0]


def mse_loss(model: DenoiserModel, noisy: np.ndarray, clean: np.ndarray) -> float:
    out, _ = _forward_batch(model, noisy)
    diff = out - clean
    return float(np.mean(diff * diff))


def grad_wrt_params(model: DenoiserModel, batch):
    """Per-layer (dweight, dbias) of the batch-mean MSE loss.

    batch is a nonempty sequence of (noisy, clean) pairs (PixelGrids or 2-D
    arrays of one common shape).
    """
    _check_arch(model)
    pairs = list(batch)
    if not pairs:
        raise ValueError("batch must be nonempty")
    noisy = _as_batch([p[0] for p in pairs])
    clean = _as_batch([p[1] for p in pairs])
    out, cache = _forward_batch(model, noisy)
    grads, _ = _backward_batch(model, cache, out, clean)
    return grads


def grad_wrt_input(model: DenoiserModel, x, clean) -> np.ndarray:
    """Gradient of MSE(forward(model, x), clean) with respect to x (H, W)."""
    _check_arch(model)
    noisy = _as_batch([x])
    target = _as_batch([clean])
    if noisy.shape != target.shape:
        raise ValueError("x and clean must share a shape")
    out, cache = _forward_batch(model, noisy)
    _, dx = _backward_batch(model, cache, out, target)
    return dx[0, 0]


class _Optimizer:
    def __init__(self, kind: str, shapes):
        self.kind = kind
        self.step_count = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes] if kind == "adam" else None

    def apply(self, params, grads, lr: float) -> None:
        self.step_count += 1
        if self.kind == "adam":
            b1, b2, eps = 0.9, 0.999, 1e-8
            t = self.step_count
            for p, g, m, v in zip(params, grads, self.m, self.v):
                m *= b1
                m += (1 - b1) * g
                v *= b2
                v += (1 - b2) * g * g
                m_hat = m / (1 - b1**t)
                v_hat = v / (1 - b2**t)
                p -= lr * m_hat / (np.sqrt(v_hat) + eps)
        else:  # sgd-momentum
            for p, g, m in zip(params, grads, self.m):
                m *= 0.9
                m += g
                p -= lr * m


def _extract_patches(corpus, patch: int, stride: int):
    slots = []
    for idx, image in enumerate(corpus):
        grid = image.grid()
        h, w = grid.shape
        for y in range(0, h - patch + 1, stride):
            for x in range(0, w - patch + 1, stride):
                slots.append((idx, y, x))
    return slots


def train(
    config: TrainConfig, corpus, model: DenoiserModel | None = None
) -> tuple[DenoiserModel, TrainHistory]:
    """Train on clean images with strategy noise; pass `model` to resume.

    Deterministic under config.seed: patch shuffling, noise draws, and
    initialization all derive from it.  Noisy inputs are clip(clean+noise, 0, 1).
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("corpus must be nonempty")
    patch = config.patch_size
    stride = config.stride if config.stride is not None else patch
    slots = _extract_patches(corpus, patch, stride)
    if not slots:
        raise ValueError(f"no image in the corpus fits a {patch}x{patch} patch")

    root = SeededRng(config.seed)
    strategy = dataclasses.replace(config.strategy, position=0)
    noise_rng = root.child(1)

    order = root.child(0).permutation(len(slots))
    slots = [slots[i] for i in order]
    n_val = min(max(1, int(round(config.val_fraction * len(slots)))), len(slots) - 1)
    if len(slots) < 2:
        val_slots, train_slots = slots, slots
    else:
        val_slots, train_slots = slots[:n_val], slots[n_val:]

    grids = [image.grid() for image in corpus]

    def patch_of(slot):
        idx, y, x = slot
        return grids[idx][y : y + patch, x : x + patch]

    val_clean = np.stack([patch_of(s) for s in val_slots])[:, None]
    val_rng = root.child(2)
    val_noise = np.stack(
        [
            val_rng.child(j).normal(patch * patch, strategy.sigma).reshape(patch, patch)
            for j in range(len(val_slots))
        ]
    )[:, None]
    val_noisy = np.clip(val_clean + val_noise, 0.0, 1.0)

    if model is None:
        model = init_model(seed=config.seed)
    params = [t for layer in model.layers for t in (layer.weight, layer.bias)]
    optimizer = _Optimizer(config.optimizer, [p.shape for p in params])
    history = TrainHistory()
    lr = config.learning_rate
    total_steps = 0
    done = False

    for epoch in range(config.epochs):
        perm = root.child(16 + epoch).permutation(len(train_slots))
        epoch_losses = []
        for start in range(0, len(perm), config.batch_size):
            chosen = perm[start : start + config.batch_size]
            clean = np.stack([patch_of(train_slots[i]) for i in chosen])[:, None]
            noise = np.stack(
                [
                    next_noise(strategy, patch * patch, noise_rng).values.reshape(
                        patch, patch
                    )
                    for _ in chosen
                ]
            )[:, None]
            noisy = np.clip(clean + noise, 0.0, 1.0)

            out, cache = _forward_batch(model, noisy)
            diff = out - clean
            epoch_losses.append(float(np.mean(diff * diff)))
            grads, _ = _backward_batch(model, cache, out, clean)
            flat_grads = [t for pair in grads for t in pair]
            optimizer.apply(params, flat_grads, lr)
            for p in params:
                if not np.all(np.isfinite(p)):
                    raise ArithmeticError(
                        "non-finite weights after optimizer step "
                        f"{optimizer.step_count}; lower the learning rate"
                    )
            total_steps += 1
            if config.max_steps is not None and total_steps >= config.max_steps:
                done = True
                break

        history.train_loss.append(float(np.mean(epoch_losses)))
        psnrs = []
        for start in range(0, len(val_slots), 32):
            out, _ = _forward_batch(model, val_noisy[start : start + 32])
            target = val_clean[start : start + 32]
            err = np.mean((out - target) ** 2, axis=(1, 2, 3))
            psnrs.extend(
                math.inf if e == 0 else 10.0 * math.log10(1.0 / e) for e in err
            )
        history.val_psnr.append(float(np.mean(psnrs)))
        lr *= config.lr_decay
        if done:
            break

    model.sigma_trained = strategy.sigma
    model.seed = config.seed
    return model, history


_MAGIC = b"TSDN"
_VERSION = 1


def save_model(model: DenoiserModel, path) -> None:
    """Write the TSDN v1 binary format (see README for the layout)."""
    sigma = math.nan if model.sigma_trained is None else model.sigma_trained
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<II", _VERSION, len(model.layers))
    blob += struct.pack("<dQB", sigma, model.seed, int(model.residual))
    for layer in model.layers:
        out_c, in_c, kh, kw = layer.weight.shape
        blob += struct.pack("<IIIIB", out_c, in_c, kh, kw, int(layer.relu))
    for layer in model.layers:
        blob += layer.weight.astype("<f8").tobytes()
        blob += layer.bias.astype("<f8").tobytes()
    with open(path, "wb") as handle:
        handle.write(blob)


def _take(data: bytes, offset: int, count: int, what: str) -> tuple[bytes, int]:
    if offset + count > len(data):
        raise ModelFormatError(f"truncated while reading {what}", len(data))
    return data[offset : offset + count], offset + count


def load_model(path) -> DenoiserModel:
    with open(path, "rb") as handle:
        data = handle.read()
    chunk, offset = _take(data, 0, 4, "magic")
    if chunk != _MAGIC:
        raise ModelFormatError(f"bad magic {chunk!r}, expected {_MAGIC!r}", 0)
    chunk, offset = _take(data, offset, 8, "version/layer count")
    version, layer_count = struct.unpack("<II", chunk)
    if version != _VERSION:
        raise ModelFormatError(f"unsupported format version {version}", 4)
    if not 0 < layer_count < 1024:
        raise ModelFormatError(f"implausible layer count {layer_count}", 8)
    chunk, offset = _take(data, offset, 17, "model header")
    sigma, seed, residual = struct.unpack("<dQB", chunk)

    dims = []
    for i in range(layer_count):
        chunk, offset = _take(data, offset, 17, f"layer {i} descriptor")
        out_c, in_c, kh, kw, relu = struct.unpack("<IIIIB", chunk)
        if kh != 3 or kw != 3:
            raise ModelFormatError(
                f"layer {i} kernel {kh}x{kw} unsupported (3x3 only)", offset - 17
            )
        dims.append((out_c, in_c, bool(relu)))

    layers = []
    for i, (out_c, in_c, relu) in enumerate(dims):
        w_bytes = out_c * in_c * 9 * 8
        chunk, offset = _take(data, offset, w_bytes, f"layer {i} weights")
        weight = np.frombuffer(chunk, dtype="<f8").reshape(out_c, in_c, 3, 3).copy()
        chunk, offset = _take(data, offset, out_c * 8, f"layer {i} bias")
        bias = np.frombuffer(chunk, dtype="<f8").copy()
        layers.append(ConvLayer(weight=weight, bias=bias, relu=relu))

    return DenoiserModel(
        layers=layers,
        residual=bool(residual),
        sigma_trained=None if math.isnan(sigma) else sigma,
        seed=seed,
    )
