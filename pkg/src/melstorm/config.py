"""Experiment configuration: JSON schema, defaults, and dotted overrides.

An empty document resolves to the full default experiment (the published
parameter set: 48 kHz, n_fft 2034, 64 mel filters, top_db 80, Adam lr
0.001, 5 epochs, 0.8/0.12/0.08 split, eps grid 0.05..1.0). Validation
errors name the offending JSON path.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .features import FeatureConfig
from .harness import DEFAULT_EPS_GRID, SplitSpec, SweepSpec
from .model import ConvSpec, ModelConfig, TrainConfig
from .poison import PoisonConfig

DATA_DIR_ENV = "MELSTORM_DATA_DIR"


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class _Node:
    """A dict under validation: typed getters, unknown-key detection, path tracking."""

    def __init__(self, raw: Any, path: str):
        if not isinstance(raw, dict):
            raise ConfigError(path, f"expected an object, got {type(raw).__name__}")
        self.raw = raw
        self.path = path
        self.seen: set[str] = set()

    def _key_path(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def child(self, key: str) -> "_Node":
        self.seen.add(key)
        return _Node(self.raw.get(key, {}), self._key_path(key))

    def get(self, key: str, default: Any, kind: type | tuple[type, ...]) -> Any:
        self.seen.add(key)
        if key not in self.raw:
            return default
        value = self.raw[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if isinstance(value, bool) and kind in (int, float):
            raise ConfigError(self._key_path(key), f"expected {kind.__name__}, got a boolean")
        if not isinstance(value, kind):
            name = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
            raise ConfigError(self._key_path(key), f"expected {name}, got {type(value).__name__}")
        return value

    def get_number(self, key: str, default: float, *, minimum=None, exclusive_min=None, maximum=None) -> float:
        value = self.get(key, default, float)
        path = self._key_path(key)
        if minimum is not None and value < minimum:
            raise ConfigError(path, f"expected a number >= {minimum}, got {value}")
        if exclusive_min is not None and value <= exclusive_min:
            raise ConfigError(path, f"expected a number > {exclusive_min}, got {value}")
        if maximum is not None and value > maximum:
            raise ConfigError(path, f"expected a number <= {maximum}, got {value}")
        return value

    def get_int(self, key: str, default: int, *, minimum=None) -> int:
        value = self.get(key, default, int)
        if minimum is not None and value < minimum:
            raise ConfigError(self._key_path(key), f"expected an integer >= {minimum}, got {value}")
        return int(value)

    def get_choice(self, key: str, default: str, choices: Sequence[str]) -> str:
        value = self.get(key, default, str)
        if value not in choices:
            raise ConfigError(self._key_path(key), f"expected one of {list(choices)}, got '{value}'")
        return value

    def finish(self) -> None:
        unknown = sorted(set(self.raw) - self.seen)
        if unknown:
            raise ConfigError(self._key_path(unknown[0]), "unknown key")


@dataclass
class DataConfig:
    source: str = "synth"
    root: str | None = None
    n_per_class: int = 100
    seed: int = 7

    def resolve_root(self) -> Path:
        root = self.root or os.environ.get(DATA_DIR_ENV)
        if not root:
            raise ConfigError("data.root", f"directory source needs data.root or ${DATA_DIR_ENV}")
        return Path(root)


@dataclass
class PoisonPlan:
    enabled: bool = False
    config: PoisonConfig = field(default_factory=PoisonConfig)
    export: bool = False


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    split: SplitSpec = field(default_factory=lambda: SplitSpec(seed=11))
    model: ModelConfig = field(default_factory=ModelConfig)
    model_seed: int = 3
    train: TrainConfig = field(default_factory=lambda: TrainConfig(seed=5))
    poison: PoisonPlan = field(default_factory=PoisonPlan)
    attacks: list[SweepSpec] = field(default_factory=list)
    output_dir: str = "runs/experiment"

    def to_dict(self) -> dict:
        return {
            "data": {
                "source": self.data.source,
                "root": self.data.root,
                "n_per_class": self.data.n_per_class,
                "seed": self.data.seed,
            },
            "features": {
                "sample_rate": self.features.sample_rate,
                "n_fft": self.features.n_fft,
                "hop_length": self.features.hop_length,
                "n_mels": self.features.n_mels,
                "fmin": self.features.fmin,
                "fmax": self.features.fmax,
                "top_db": self.features.top_db,
                "clip_seconds": self.features.clip_seconds,
                "shift_fraction": self.features.shift_fraction,
            },
            "split": {"train": self.split.train, "val": self.split.val, "test": self.split.test, "seed": self.split.seed},
            "model": {"seed": self.model_seed, **self.model.to_dict()},
            "train": {
                "lr": self.train.lr,
                "epochs": self.train.epochs,
                "batch_size": self.train.batch_size,
                "seed": self.train.seed,
            },
            "poison": {
                "enabled": self.poison.enabled,
                "alpha": self.poison.config.alpha,
                "fraction": self.poison.config.fraction,
                "apply_to": self.poison.config.apply_to,
                "seed": self.poison.config.seed,
                "export": self.poison.export,
            },
            "attacks": [spec.to_dict() for spec in self.attacks],
            "output_dir": self.output_dir,
        }


def default_attacks() -> list[SweepSpec]:
    return [
        SweepSpec(kind="fgsm", seed=17),
        SweepSpec(kind="pgd", eps_iter=0.1, nb_iter=5, seed=17),
        SweepSpec(kind="cw", eps_grid=(1.0,), cw_lr=0.01, cw_max_iterations=200, seed=17),
    ]


def _pair(node: _Node, key: str, default: tuple[int, int]) -> tuple[int, int]:
    value = node.get(key, list(default), list)
    path = node._key_path(key)
    if len(value) != 2 or not all(isinstance(v, int) and v >= 0 for v in value):
        raise ConfigError(path, f"expected a pair of non-negative integers, got {value}")
    return (value[0], value[1])


def _parse_model(node: _Node) -> tuple[ModelConfig, int]:
    seed = node.get_int("seed", 3)
    n_classes = node.get_int("n_classes", 10, minimum=2)
    bn_momentum = node.get_number("bn_momentum", 0.1, exclusive_min=0.0, maximum=1.0)
    bn_eps = node.get_number("bn_eps", 1e-5, exclusive_min=0.0)
    default = ModelConfig()
    node.seen.add("convs")
    if "convs" in node.raw:
        raw_convs = node.get("convs", None, list) or []
        if not raw_convs:
            raise ConfigError(node._key_path("convs"), "expected a non-empty list of layers")
        convs = []
        for i, layer in enumerate(raw_convs):
            ln = _Node(layer, f"{node._key_path('convs')}.{i}")
            convs.append(
                ConvSpec(
                    in_channels=ln.get_int("in_channels", 0, minimum=1),
                    out_channels=ln.get_int("out_channels", 0, minimum=1),
                    kernel=_pair(ln, "kernel", (3, 3)),
                    stride=_pair(ln, "stride", (1, 1)),
                    padding=_pair(ln, "padding", (0, 0)),
                )
            )
            ln.finish()
        for prev, cur in zip(convs, convs[1:]):
            if prev.out_channels != cur.in_channels:
                raise ConfigError(node._key_path("convs"), f"layer channel chain broken: {prev.out_channels} -> {cur.in_channels}")
        convs = tuple(convs)
    else:
        convs = default.convs
    node.finish()
    return ModelConfig(convs=convs, n_classes=n_classes, bn_momentum=bn_momentum, bn_eps=bn_eps), seed


def _parse_attack(node: _Node) -> SweepSpec:
    kind = node.get_choice("kind", "fgsm", ("fgsm", "pgd", "cw"))
    default_grid = (1.0,) if kind == "cw" else DEFAULT_EPS_GRID
    grid = node.get("eps_grid", list(default_grid), list)
    path = node._key_path("eps_grid")
    if not grid or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in grid):
        raise ConfigError(path, f"expected a non-empty list of numbers, got {grid}")
    spec = dict(
        kind=kind,
        eps_grid=tuple(float(v) for v in grid),
        eps_iter=node.get_number("eps_iter", 0.1, exclusive_min=0.0),
        nb_iter=node.get_int("nb_iter", 5, minimum=1),
        cw_lr=node.get_number("cw_lr", 0.01, exclusive_min=0.0),
        cw_max_iterations=node.get_int("cw_max_iterations", 200, minimum=1),
        cw_const=node.get_number("cw_const", 1.0, exclusive_min=0.0),
        cw_kappa=node.get_number("cw_kappa", 0.0, minimum=0.0),
        sample_cap=node.get_int("sample_cap", 200, minimum=1),
        seed=node.get_int("seed", 17),
    )
    node.finish()
    try:
        return SweepSpec(**spec)
    except ValueError as exc:
        raise ConfigError(node.path, str(exc)) from exc


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a raw JSON document and fill every default."""
    root = _Node(raw, "")

    dn = root.child("data")
    data = DataConfig(
        source=dn.get_choice("source", "synth", ("synth", "directory")),
        root=dn.get("root", None, str) if dn.raw.get("root") is not None else None,
        n_per_class=dn.get_int("n_per_class", 100, minimum=1),
        seed=dn.get_int("seed", 7),
    )
    dn.seen.add("root")
    dn.finish()

    fn = root.child("features")
    sample_rate = fn.get_int("sample_rate", 48000, minimum=1)
    features = FeatureConfig(
        sample_rate=sample_rate,
        n_fft=fn.get_int("n_fft", 2034, minimum=2),
        hop_length=fn.get_int("hop_length", 512, minimum=1),
        n_mels=fn.get_int("n_mels", 64, minimum=1),
        fmin=fn.get_number("fmin", 0.0, minimum=0.0),
        fmax=fn.get_number("fmax", min(24000.0, sample_rate / 2), exclusive_min=0.0, maximum=sample_rate / 2),
        top_db=fn.get_number("top_db", 80.0, exclusive_min=0.0),
        clip_seconds=fn.get_number("clip_seconds", 1.0, exclusive_min=0.0),
        shift_fraction=fn.get_number("shift_fraction", 0.1, minimum=0.0, maximum=0.5),
    )
    if features.fmin >= features.fmax:
        raise ConfigError("features.fmin", f"fmin ({features.fmin}) must be below fmax ({features.fmax})")
    fn.finish()

    sn = root.child("split")
    try:
        split = SplitSpec(
            train=sn.get_number("train", 0.8, exclusive_min=0.0),
            val=sn.get_number("val", 0.12, exclusive_min=0.0),
            test=sn.get_number("test", 0.08, exclusive_min=0.0),
            seed=sn.get_int("seed", 11),
        )
    except ValueError as exc:
        raise ConfigError("split", str(exc)) from exc
    sn.finish()

    model_cfg, model_seed = _parse_model(root.child("model"))

    tn = root.child("train")
    try:
        train_cfg = TrainConfig(
            lr=tn.get_number("lr", 0.001, minimum=0.0),
            epochs=tn.get_int("epochs", 5, minimum=1),
            batch_size=tn.get_int("batch_size", 64, minimum=1),
            seed=tn.get_int("seed", 5),
        )
    except ValueError as exc:
        raise ConfigError("train", str(exc)) from exc
    tn.finish()

    pn = root.child("poison")
    try:
        poison = PoisonPlan(
            enabled=pn.get("enabled", False, bool),
            config=PoisonConfig(
                alpha=pn.get_number("alpha", 0.05, minimum=0.0),
                fraction=pn.get_number("fraction", 1.0, minimum=0.0, maximum=1.0),
                apply_to=pn.get_choice("apply_to", "both", ("train", "test", "both")),
                seed=pn.get_int("seed", 13),
            ),
            export=pn.get("export", False, bool),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("poison", str(exc)) from exc
    pn.finish()

    root.seen.add("attacks")
    if "attacks" in raw:
        raw_attacks = root.get("attacks", None, list)
        attacks = [_parse_attack(_Node(a, f"attacks.{i}")) for i, a in enumerate(raw_attacks)]
    else:
        attacks = default_attacks()

    output_dir = root.get("output_dir", "runs/experiment", str)
    root.finish()

    if data.source == "directory" and data.root is None and not os.environ.get(DATA_DIR_ENV):
        raise ConfigError("data.root", f"directory source needs data.root or ${DATA_DIR_ENV}")

    return ExperimentConfig(
        data=data,
        features=features,
        split=split,
        model=model_cfg,
        model_seed=model_seed,
        train=train_cfg,
        poison=poison,
        attacks=attacks,
        output_dir=output_dir,
    )


def apply_overrides(raw: dict, overrides: Sequence[str]) -> dict:
    """Apply `dotted.key=value` pairs onto the raw document before validation."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like dotted.key=value")
        dotted, _, text = item.partition("=")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        keys = dotted.split(".")
        node: Any = raw
        for i, key in enumerate(keys[:-1]):
            if isinstance(node, list):
                if not key.isdigit() or int(key) >= len(node):
                    raise ConfigError(dotted, f"bad list index '{key}'")
                node = node[int(key)]
            else:
                node = node.setdefault(key, {})
            if not isinstance(node, (dict, list)):
                raise ConfigError(dotted, f"'{'.'.join(keys[: i + 1])}' is not a section")
        last = keys[-1]
        if isinstance(node, list):
            if not last.isdigit() or int(last) >= len(node):
                raise ConfigError(dotted, f"bad list index '{last}'")
            node[int(last)] = value
        else:
            node[last] = value
    return raw


def load_config(path: str | Path | None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Read a JSON config file (or start from {}), apply overrides, validate."""
    if path is None:
        raw: dict = {}
    else:
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(str(path), "top-level JSON value must be an object")
    raw = apply_overrides(raw, overrides)
    return parse_config(raw)
