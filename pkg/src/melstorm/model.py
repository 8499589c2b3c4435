"""The four-block convolutional digit classifier and its training loop.

Each block is conv -> ReLU -> batchnorm (in that order), followed by
global average pooling and an affine head to 10 logits. Weights persist
in a small binary container ("AMNW") holding the architecture fingerprint
and named float32 arrays.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Mapping

import numpy as np

from .autograd import (
    Tensor,
    affine,
    backprop,
    batchnorm2d,
    conv2d,
    cross_entropy_loss,
    global_avg_pool,
    relu,
    zero_grads,
)
from .features import FeatureDataset
from .optim import AdamState, adam_step

WEIGHTS_MAGIC = b"AMNW"
WEIGHTS_VERSION = 1


class WeightsFormatError(ValueError):
    """Raised when a weights file cannot be decoded or does not match its config."""


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: tuple[int, int]
    stride: tuple[int, int]
    padding: tuple[int, int]


_DEFAULT_CONVS = (
    ConvSpec(1, 8, (5, 5), (2, 2), (2, 2)),
    ConvSpec(8, 16, (3, 3), (2, 2), (1, 1)),
    ConvSpec(16, 32, (3, 3), (2, 2), (1, 1)),
    ConvSpec(32, 64, (3, 3), (2, 2), (1, 1)),
)


@dataclass(frozen=True)
class ModelConfig:
    convs: tuple[ConvSpec, ...] = _DEFAULT_CONVS
    n_classes: int = 10
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def to_dict(self) -> dict:
        return {
            "convs": [
                {
                    "in_channels": c.in_channels,
                    "out_channels": c.out_channels,
                    "kernel": list(c.kernel),
                    "stride": list(c.stride),
                    "padding": list(c.padding),
                }
                for c in self.convs
            ],
            "n_classes": self.n_classes,
            "bn_momentum": self.bn_momentum,
            "bn_eps": self.bn_eps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        convs = tuple(
            ConvSpec(
                in_channels=int(c["in_channels"]),
                out_channels=int(c["out_channels"]),
                kernel=tuple(c["kernel"]),
                stride=tuple(c["stride"]),
                padding=tuple(c["padding"]),
            )
            for c in d["convs"]
        )
        return cls(
            convs=convs,
            n_classes=int(d["n_classes"]),
            bn_momentum=float(d["bn_momentum"]),
            bn_eps=float(d["bn_eps"]),
        )

    def fingerprint(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


@dataclass
class TrainConfig:
    lr: float = 0.001
    epochs: int = 5
    batch_size: int = 64
    seed: int = 0
    loss: str = "cross_entropy"

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError(f"TrainConfig: lr must be >= 0, got {self.lr}")
        if self.epochs < 1:
            raise ValueError(f"TrainConfig: epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"TrainConfig: batch_size must be >= 1, got {self.batch_size}")
        if self.loss != "cross_entropy":
            raise ValueError(f"TrainConfig: unsupported loss '{self.loss}'")


def parameter_template(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """The exact parameter name -> shape map a config determines."""
    shapes: dict[str, tuple[int, ...]] = {}
    for i, c in enumerate(cfg.convs, start=1):
        shapes[f"conv{i}.weight"] = (c.out_channels, c.in_channels, *c.kernel)
        shapes[f"conv{i}.bias"] = (c.out_channels,)
        shapes[f"bn{i}.gamma"] = (c.out_channels,)
        shapes[f"bn{i}.beta"] = (c.out_channels,)
    last = cfg.convs[-1].out_channels
    shapes["fc.weight"] = (cfg.n_classes, last)
    shapes["fc.bias"] = (cfg.n_classes,)
    return shapes


def _running_template(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for i, c in enumerate(cfg.convs, start=1):
        shapes[f"bn{i}.running_mean"] = (c.out_channels,)
        shapes[f"bn{i}.running_var"] = (c.out_channels,)
    return shapes


@dataclass
class ModelState:
    """Named parameter tensors plus batch-norm running statistics."""

    cfg: ModelConfig
    params: dict[str, Tensor]
    running: dict[str, np.ndarray]

    def logits(self, x: Tensor) -> Tensor:
        """Eval-mode forward with parameters held constant (attack-safe)."""
        frozen = {name: Tensor(p.data) for name, p in self.params.items()}
        return _forward(frozen, self.running, self.cfg, x, train=False)

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for name in sorted(self.params):
            h.update(self.params[name].data.tobytes())
        for name in sorted(self.running):
            h.update(self.running[name].tobytes())
        return h.hexdigest()[:16]


def build_model(cfg: ModelConfig, seed: int) -> ModelState:
    """He-normal conv/affine weights, zero biases, identity batch-norm."""
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    for i, c in enumerate(cfg.convs, start=1):
        fan_in = c.in_channels * c.kernel[0] * c.kernel[1]
        std = np.sqrt(2.0 / fan_in)
        params[f"conv{i}.weight"] = Tensor(
            rng.normal(0.0, std, size=(c.out_channels, c.in_channels, *c.kernel)), requires_grad=True
        )
        params[f"conv{i}.bias"] = Tensor(np.zeros(c.out_channels), requires_grad=True)
        params[f"bn{i}.gamma"] = Tensor(np.ones(c.out_channels), requires_grad=True)
        params[f"bn{i}.beta"] = Tensor(np.zeros(c.out_channels), requires_grad=True)
    last = cfg.convs[-1].out_channels
    params["fc.weight"] = Tensor(rng.normal(0.0, np.sqrt(2.0 / last), size=(cfg.n_classes, last)), requires_grad=True)
    params["fc.bias"] = Tensor(np.zeros(cfg.n_classes), requires_grad=True)
    running = {name: (np.ones(shape) if name.endswith("var") else np.zeros(shape)) for name, shape in _running_template(cfg).items()}
    return ModelState(cfg=cfg, params=params, running=running)


def _forward(params: Mapping[str, Tensor], running: dict[str, np.ndarray], cfg: ModelConfig, x: Tensor, train: bool) -> Tensor:
    if x.data.ndim != 4 or x.shape[1] != cfg.convs[0].in_channels:
        raise ValueError(
            f"forward: expected input [N, {cfg.convs[0].in_channels}, H, W], got shape {x.shape}"
        )
    h = x
    for i, c in enumerate(cfg.convs, start=1):
        h = conv2d(h, params[f"conv{i}.weight"], params[f"conv{i}.bias"], c.stride, c.padding)
        h = relu(h)
        h = batchnorm2d(
            h,
            params[f"bn{i}.gamma"],
            params[f"bn{i}.beta"],
            running[f"bn{i}.running_mean"],
            running[f"bn{i}.running_var"],
            train=train,
            momentum=cfg.bn_momentum,
            eps=cfg.bn_eps,
        )
    pooled = global_avg_pool(h)
    return affine(pooled, params["fc.weight"], params["fc.bias"])


def forward(model: ModelState, x: Tensor | np.ndarray, train: bool) -> Tensor:
    """Forward pass through the trainable parameters (records the tape)."""
    if not isinstance(x, Tensor):
        x = Tensor(x)
    return _forward(model.params, model.running, model.cfg, x, train=train)


def evaluate(model: ModelState, data: FeatureDataset, batch_size: int = 256) -> float:
    """Fraction of eval-mode argmax predictions matching the labels."""
    if len(data) == 0:
        raise ValueError("evaluate: empty dataset")
    correct = 0
    for start in range(0, len(data), batch_size):
        xb = data.x[start : start + batch_size]
        logits = model.logits(Tensor(xb))
        correct += int((logits.data.argmax(axis=1) == data.y[start : start + batch_size]).sum())
    return correct / len(data)


def predict(model: ModelState, x: np.ndarray) -> np.ndarray:
    """Eval-mode argmax labels for a batch [N, 1, H, W]."""
    return model.logits(Tensor(x)).data.argmax(axis=1)


def train(
    model: ModelState,
    train_data: FeatureDataset,
    val_data: FeatureDataset | None,
    tc: TrainConfig,
    log_path: str | Path | None = None,
) -> list[dict]:
    """Adam + cross-entropy over shuffled minibatches; returns per-epoch records.

    Each record is {"epoch", "train_loss", "val_acc"}; val_acc is None when
    no validation set is supplied. Shuffling derives from tc.seed only, so
    a (seed, dataset, config) triple fixes the whole run.
    """
    if len(train_data) == 0:
        raise ValueError("train: empty training set")
    rng = np.random.default_rng(tc.seed)
    state = AdamState(lr=tc.lr)
    n = len(train_data)
    records: list[dict] = []
    log_file: IO[str] | None = open(log_path, "w") if log_path is not None else None
    try:
        for epoch in range(1, tc.epochs + 1):
            perm = rng.permutation(n)
            total_loss = 0.0
            for start in range(0, n, tc.batch_size):
                idx = perm[start : start + tc.batch_size]
                xb = Tensor(train_data.x[idx])
                logits = forward(model, xb, train=True)
                loss = cross_entropy_loss(logits, train_data.y[idx])
                zero_grads(model.params)
                backprop(loss)
                adam_step(model.params, state)
                total_loss += loss.item() * len(idx)
            record = {
                "epoch": epoch,
                "train_loss": total_loss / n,
                "val_acc": evaluate(model, val_data) if val_data is not None else None,
            }
            records.append(record)
            if log_file is not None:
                log_file.write(json.dumps(record) + "\n")
    finally:
        if log_file is not None:
            log_file.close()
    return records


def save_weights(model: ModelState, path: str | Path) -> None:
    """Serialize config fingerprint plus named float32 arrays (little endian)."""
    arrays: list[tuple[str, np.ndarray]] = []
    for name in sorted(model.params):
        arrays.append((name, model.params[name].data))
    for name in sorted(model.running):
        arrays.append((name, model.running[name]))

    cfg_bytes = model.cfg.fingerprint().encode()
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write(struct.pack("<H", WEIGHTS_VERSION))
        f.write(struct.pack("<I", len(cfg_bytes)))
        f.write(cfg_bytes)
        f.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays:
            nb = name.encode()
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<I", dim))
            f.write(arr.astype("<f4").tobytes())


def _read_exact(f: IO[bytes], count: int, what: str) -> bytes:
    data = f.read(count)
    if len(data) != count:
        raise WeightsFormatError(f"weights file truncated while reading {what}")
    return data


def load_weights(path: str | Path) -> ModelState:
    """Load a weights file, checking magic, version, and the config's name set."""
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != WEIGHTS_MAGIC:
            raise WeightsFormatError(f"bad magic {magic!r}, expected {WEIGHTS_MAGIC!r}")
        (version,) = struct.unpack("<H", _read_exact(f, 2, "version"))
        if version != WEIGHTS_VERSION:
            raise WeightsFormatError(f"unsupported weights version {version}")
        (cfg_len,) = struct.unpack("<I", _read_exact(f, 4, "config length"))
        try:
            cfg = ModelConfig.from_dict(json.loads(_read_exact(f, cfg_len, "config")))
        except (KeyError, ValueError, TypeError) as exc:
            raise WeightsFormatError(f"config block is not a valid model config: {exc}") from exc
        (n_arrays,) = struct.unpack("<I", _read_exact(f, 4, "array count"))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(n_arrays):
            (name_len,) = struct.unpack("<H", _read_exact(f, 2, "array name length"))
            name = _read_exact(f, name_len, "array name").decode()
            (ndim,) = struct.unpack("<B", _read_exact(f, 1, f"ndim of '{name}'"))
            shape = tuple(
                struct.unpack("<I", _read_exact(f, 4, f"shape of '{name}'"))[0] for _ in range(ndim)
            )
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(_read_exact(f, 4 * count, f"data of '{name}'"), dtype="<f4")
            arrays[name] = data.astype(np.float64).reshape(shape)
        if f.read(1):
            raise WeightsFormatError("trailing bytes after the declared arrays")

    expected = dict(parameter_template(cfg))
    expected.update(_running_template(cfg))
    missing = sorted(set(expected) - set(arrays))
    extra = sorted(set(arrays) - set(expected))
    if missing or extra:
        problem = missing[0] if missing else extra[0]
        kind = "missing" if missing else "unexpected"
        raise WeightsFormatError(f"array set does not match config: {kind} '{problem}'")
    for name, shape in expected.items():
        if arrays[name].shape != shape:
            raise WeightsFormatError(
                f"array '{name}' has shape {arrays[name].shape}, config requires {shape}"
            )

    params = {name: Tensor(arrays[name], requires_grad=True) for name in parameter_template(cfg)}
    running = {name: arrays[name] for name in _running_template(cfg)}
    return ModelState(cfg=cfg, params=params, running=running)
