"""Compact convolutional victim classifiers.

Torch-backed, CPU-oriented networks exposed through a numpy-in/numpy-out
batch protocol (``predict_batch`` / ``loss_batch`` / ``input_gradient_batch``)
so the attack and evaluation code stay framework-agnostic.  Two presets ship:
an all-convolutional 303k-parameter stack and a slimmer strided net for
transfer experiments.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

CONF_FLOOR = 1e-12

CHECKPOINT_MAGIC = b"SSCP"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ConvBlock:
    out_channels: int
    kernel: int
    stride: int = 1
    pool: bool = False


@dataclass(frozen=True)
class NetworkConfig:
    name: str
    blocks: tuple[ConvBlock, ...]
    head: str = "conv"  # 'conv': 1x1-output conv to classes; 'dense': flatten + linear
    input_size: int = 88
    num_classes: int = 10
    dropout: float = 0.0

    def spatial_trace(self) -> list[int]:
        """Feature-map side length after each block."""
        size = self.input_size
        trace = []
        for b in self.blocks:
            size = (size - b.kernel) // b.stride + 1
            if b.pool:
                size //= 2
            trace.append(size)
        return trace


def aconvnet_config(num_classes: int = 10, input_size: int = 88) -> NetworkConfig:
    """All-convolutional stack (16/32/64/128 channels, conv head)."""
    return NetworkConfig(
        name="aconvnet",
        blocks=(
            ConvBlock(16, 5, pool=True),
            ConvBlock(32, 5, pool=True),
            ConvBlock(64, 6, pool=True),
            ConvBlock(128, 5),
        ),
        head="conv",
        input_size=input_size,
        num_classes=num_classes,
    )


def slimnet_config(num_classes: int = 10, input_size: int = 88) -> NetworkConfig:
    """Strided three-block net with a dense head; cheaper and structurally
    distinct from the all-conv stack for transfer studies."""
    return NetworkConfig(
        name="slimnet",
        blocks=(
            ConvBlock(12, 5, stride=2),
            ConvBlock(24, 5, stride=2),
            ConvBlock(48, 5, stride=2),
        ),
        head="dense",
        input_size=input_size,
        num_classes=num_classes,
    )


PRESETS = {"aconvnet": aconvnet_config, "slimnet": slimnet_config}


class _ConvNet(nn.Module):
    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        layers: list[nn.Module] = []
        in_ch = 1
        for b in cfg.blocks:
            layers.append(nn.Conv2d(in_ch, b.out_channels, b.kernel, stride=b.stride))
            layers.append(nn.ReLU(inplace=True))
            if b.pool:
                layers.append(nn.MaxPool2d(2))
            in_ch = b.out_channels
        if cfg.dropout > 0:
            layers.append(nn.Dropout(cfg.dropout))
        side = cfg.spatial_trace()[-1]
        if cfg.head == "conv":
            layers.append(nn.Conv2d(in_ch, cfg.num_classes, side))
            self.flatten_head = False
        elif cfg.head == "dense":
            layers.append(nn.Flatten())
            layers.append(nn.Linear(in_ch * side * side, cfg.num_classes))
            self.flatten_head = True
        else:
            raise ValueError(f"unknown head kind: {cfg.head}")
        self.body = nn.Sequential(*layers)

    def forward(self, x):
        out = self.body(x)
        return out.flatten(1)


class TorchVictim:
    """A trained (or trainable) classifier exposing the numpy batch protocol."""

    def __init__(self, config: NetworkConfig, module: nn.Module):
        self.config = config
        self.module = module
        self.module.eval()

    @property
    def dtype(self):
        return next(self.module.parameters()).dtype

    @property
    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.module.parameters())

    def _to_tensor(self, images: np.ndarray) -> torch.Tensor:
        arr = np.ascontiguousarray(images, dtype=np.float32 if self.dtype == torch.float32 else np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3:
            raise ValueError("expected (h, w) or (batch, h, w) images")
        h = self.config.input_size
        if arr.shape[1:] != (h, h):
            raise ValueError(f"expected {h}x{h} inputs, got {arr.shape[1:]}")
        return torch.from_numpy(arr).unsqueeze(1)

    def _labels(self, labels, batch: int) -> torch.Tensor:
        lab = np.broadcast_to(np.asarray(labels, dtype=np.int64), (batch,)).copy()
        return torch.from_numpy(lab)

    def predict_batch(self, images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(logits, softmax confidences) for a (B, h, w) batch."""
        with torch.no_grad():
            logits = self.module(self._to_tensor(images))
            conf = torch.softmax(logits, dim=1)
        return logits.numpy(), conf.numpy()

    def loss_batch(self, images: np.ndarray, labels) -> np.ndarray:
        """Per-sample cross-entropy, floored before the log."""
        _, conf = self.predict_batch(images)
        lab = np.broadcast_to(np.asarray(labels, dtype=np.int64), (conf.shape[0],))
        p = conf[np.arange(conf.shape[0]), lab]
        return -np.log(np.maximum(p, CONF_FLOOR))

    def input_gradient_batch(self, images: np.ndarray, labels) -> np.ndarray:
        """d(cross-entropy)/d(pixel) for each image in the batch."""
        x = self._to_tensor(images).requires_grad_(True)
        y = self._labels(labels, x.shape[0])
        loss = F.cross_entropy(self.module(x), y, reduction="sum")
        (grad,) = torch.autograd.grad(loss, x)
        return grad.squeeze(1).numpy()

    def as_double(self) -> "TorchVictim":
        """Float64 copy for wide-precision gradient checks."""
        import copy

        clone = copy.deepcopy(self.module).double()
        return TorchVictim(self.config, clone)


def build_victim(config: NetworkConfig, seed: int = 0) -> TorchVictim:
    """Deterministically initialized, untrained victim."""
    torch.manual_seed(seed)
    return TorchVictim(config, _ConvNet(config))


def forward(net: TorchVictim, image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(logits, confidences) for one image."""
    logits, conf = net.predict_batch(image[None] if image.ndim == 2 else image)
    return logits[0], conf[0]


def loss(net: TorchVictim, image: np.ndarray, label: int) -> float:
    return float(net.loss_batch(image[None] if image.ndim == 2 else image, label)[0])


def input_gradient(net: TorchVictim, image: np.ndarray, label: int) -> np.ndarray:
    return net.input_gradient_batch(image[None] if image.ndim == 2 else image, label)[0]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 12
    seed: int = 0
    crop: int | None = None  # random-crop augmentation source size, None = off

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("need at least one epoch")


def _center_crop(images: np.ndarray, size: int) -> np.ndarray:
    h = images.shape[-2]
    if h == size:
        return images
    off = (h - size) // 2
    return images[..., off : off + size, off : off + size]


def train(
    net: TorchVictim,
    images: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    batch_hook=None,
) -> dict:
    """SGD-with-momentum training, deterministic under the config seed.

    ``images`` is (N, h, w) in [0, 1]; larger-than-input images are randomly
    cropped each epoch (center crop if augmentation is off).  ``batch_hook``
    may replace a batch of images before each step (used by adversarial
    training); it receives (epoch, sample_indices, images, labels) and
    returns images.  Aborts with a diagnostic on non-finite loss.
    """
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) == 0:
        raise ValueError("empty training set")
    if labels.min() < 0 or labels.max() >= net.config.num_classes:
        raise ValueError("labels out of range")
    rng = np.random.default_rng(cfg.seed)
    torch.manual_seed(cfg.seed)
    opt = torch.optim.SGD(net.module.parameters(), lr=cfg.learning_rate, momentum=cfg.momentum)
    size = net.config.input_size
    history = {"loss": [], "accuracy": []}
    net.module.train()
    try:
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(images))
            total_loss = 0.0
            correct = 0
            for start in range(0, len(order), cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                batch = images[idx]
                if batch.shape[-1] > size:
                    if cfg.crop is not None:
                        out = np.empty((len(idx), size, size), dtype=np.float32)
                        span = batch.shape[-1] - size
                        for j in range(len(idx)):
                            r, c = rng.integers(0, span + 1, 2)
                            out[j] = batch[j, r : r + size, c : c + size]
                        batch = out
                    else:
                        batch = _center_crop(batch, size)
                if batch_hook is not None:
                    batch = batch_hook(epoch, idx, batch, labels[idx])
                x = torch.from_numpy(np.ascontiguousarray(batch)).unsqueeze(1)
                y = torch.from_numpy(labels[idx])
                opt.zero_grad()
                logits = net.module(x)
                batch_loss = F.cross_entropy(logits, y)
                if not torch.isfinite(batch_loss):
                    raise RuntimeError(
                        f"non-finite loss at epoch {epoch}, sample offset {start}: {batch_loss.item()}"
                    )
                batch_loss.backward()
                opt.step()
                total_loss += float(batch_loss.item()) * len(idx)
                correct += int((logits.argmax(1) == y).sum().item())
            history["loss"].append(total_loss / len(order))
            history["accuracy"].append(correct / len(order))
    finally:
        net.module.eval()
    return history


def evaluate_accuracy(net: TorchVictim, images: np.ndarray, labels: np.ndarray, batch_size: int = 128) -> float:
    """Mean top-1 accuracy; larger images are center-cropped."""
    images = _center_crop(np.asarray(images, dtype=np.float32), net.config.input_size)
    labels = np.asarray(labels)
    correct = 0
    for start in range(0, len(images), batch_size):
        _, conf = net.predict_batch(images[start : start + batch_size])
        correct += int((conf.argmax(1) == labels[start : start + batch_size]).sum())
    return correct / len(images)


def save_checkpoint(path, net: TorchVictim) -> None:
    """Versioned binary container: magic, header manifest, little-endian
    float32 payload in manifest order."""
    cfg = net.config
    blocks = ";".join(f"{b.out_channels}:{b.kernel}:{b.stride}:{int(b.pool)}" for b in cfg.blocks)
    lines = [
        f"name = {cfg.name}",
        f"blocks = {blocks}",
        f"head = {cfg.head}",
        f"input_size = {cfg.input_size}",
        f"num_classes = {cfg.num_classes}",
        f"dropout = {cfg.dropout!r}",
    ]
    state = net.module.state_dict()
    for key, tensor in state.items():
        shape = ",".join(str(s) for s in tensor.shape) or "0"
        lines.append(f"tensor {key} {shape}")
    header = ("\n".join(lines) + "\n").encode()
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
    buf.write(header)
    for tensor in state.values():
        buf.write(tensor.detach().numpy().astype("<f4").tobytes(order="C"))
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path) -> TorchVictim:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"not a checkpoint file: {path}")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    header = blob[12 : 12 + header_len].decode().splitlines()
    fields = {}
    manifest = []
    for line in header:
        if line.startswith("tensor "):
            _, key, shape = line.split(" ")
            dims = tuple(int(s) for s in shape.split(",") if shape != "0")
            manifest.append((key, dims))
        else:
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
    blocks = tuple(
        ConvBlock(int(oc), int(k), int(s), bool(int(p)))
        for oc, k, s, p in (item.split(":") for item in fields["blocks"].split(";"))
    )
    config = NetworkConfig(
        name=fields["name"],
        blocks=blocks,
        head=fields["head"],
        input_size=int(fields["input_size"]),
        num_classes=int(fields["num_classes"]),
        dropout=float(fields["dropout"]),
    )
    net = build_victim(config)
    offset = 12 + header_len
    state = {}
    for key, dims in manifest:
        count = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(dims)
        state[key] = torch.from_numpy(arr.copy())
        offset += count * 4
    net.module.load_state_dict(state)
    net.module.eval()
    return net
