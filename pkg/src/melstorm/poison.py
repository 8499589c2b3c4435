"""Uniform-noise data poisoning on raw waveforms.

Noise u ~ Uniform(-alpha, alpha) is added per sample and the result is
clamped back into [-1, 1], so poisoned corpora stay exportable as valid
WAV. Selection and per-clip noise streams both derive from the config
seed, clip by clip, so results do not depend on processing order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .audio import AudioClip, write_wav

APPLY_CHOICES = ("train", "test", "both")


@dataclass
class PoisonConfig:
    alpha: float = 0.05
    fraction: float = 1.0
    apply_to: str = "both"
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"PoisonConfig: alpha must be >= 0, got {self.alpha}")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"PoisonConfig: fraction must be in [0, 1], got {self.fraction}")
        if self.apply_to not in APPLY_CHOICES:
            raise ValueError(f"PoisonConfig: apply_to must be one of {APPLY_CHOICES}, got '{self.apply_to}'")


def poison_signal(clip: AudioClip, alpha: float, rng: np.random.Generator) -> AudioClip:
    """Add i.i.d. Uniform(-alpha, alpha) noise and clamp into [-1, 1]."""
    if alpha < 0:
        raise ValueError(f"poison_signal: alpha must be >= 0, got {alpha}")
    noise = rng.uniform(-alpha, alpha, size=len(clip))
    samples = np.clip(clip.samples + noise, -1.0, 1.0)
    return replace(clip, samples=samples, id=clip.id + ".poisoned")


def poison_dataset(clips: list[AudioClip], pc: PoisonConfig) -> list[AudioClip]:
    """Replace a seeded random subset of round(fraction * N) clips by poisoned copies.

    Order, size, labels, and unselected clips are preserved. The subset and
    each clip's noise derive from pc.seed (per-clip counter streams).
    """
    n = len(clips)
    n_poison = int(round(pc.fraction * n))
    selector = np.random.default_rng([pc.seed, 0])
    chosen = set(selector.choice(n, size=n_poison, replace=False).tolist()) if n_poison else set()
    out = []
    for idx, clip in enumerate(clips):
        if idx in chosen:
            out.append(poison_signal(clip, pc.alpha, np.random.default_rng([pc.seed, 1, idx])))
        else:
            out.append(clip)
    return out


def export_poisoned_corpus(clips: list[AudioClip], root: str | Path, pc: PoisonConfig) -> Path:
    """Write poisoned WAVs under `<root>/poisoned/<label>/...` plus a manifest.

    The manifest records the config and one entry per clip so the export
    can be audited (or listened to) outside the system.
    """
    root = Path(root) / "poisoned"
    entries = []
    for idx, clip in enumerate(clips):
        if clip.label is None:
            raise ValueError(f"export_poisoned_corpus: clip {clip.id or idx} has no label")
        base = Path(clip.id).name if clip.id else f"{idx:05d}"
        if not base.endswith(".wav"):
            base += ".wav"
        path = root / str(clip.label) / base
        path.parent.mkdir(parents=True, exist_ok=True)
        write_wav(path, clip.samples, clip.sample_rate)
        entries.append(
            {
                "id": clip.id,
                "label": clip.label,
                "path": str(path.relative_to(root)),
                "poisoned": clip.id.endswith(".poisoned"),
                "seed": [pc.seed, 1, idx],
            }
        )
    manifest = {
        "config": {"alpha": pc.alpha, "fraction": pc.fraction, "apply_to": pc.apply_to, "seed": pc.seed},
        "clips": entries,
    }
    (root / "poison_manifest.json").write_text(json.dumps(manifest, indent=2))
    return root
