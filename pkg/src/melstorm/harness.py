"""Dataset splitting, epsilon sweeps, and report emission.

A sweep fixes one attack and walks an epsilon grid, attacking every
(capped) test sample at each point. Per-sample attacks are pure given the
frozen model, so grid points can fan out over worker threads; the report
is assembled in (eps, sample) order either way and its CSV form is
byte-stable across runs.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .attacks import AdversarialExample, AttackConfig, run_attack
from .audio import AudioClip
from .features import FeatureDataset
from .model import ModelState


@dataclass
class SplitSpec:
    train: float = 0.8
    val: float = 0.12
    test: float = 0.08
    seed: int = 0

    def __post_init__(self):
        for name in ("train", "val", "test"):
            if getattr(self, name) <= 0:
                raise ValueError(f"SplitSpec: {name} fraction must be positive")
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ValueError(
                f"SplitSpec: fractions must sum to 1.0, got {self.train + self.val + self.test}"
            )


def _allocate(count: int, fractions: Sequence[float]) -> list[int]:
    # Largest-remainder rounding so each split gets floor or ceil of its quota.
    quotas = [count * f for f in fractions]
    counts = [int(q) for q in quotas]
    leftover = count - sum(counts)
    order = sorted(range(len(fractions)), key=lambda i: quotas[i] - counts[i], reverse=True)
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def split_dataset(
    clips: Sequence[AudioClip], spec: SplitSpec
) -> tuple[list[AudioClip], list[AudioClip], list[AudioClip]]:
    """Label-stratified, seed-deterministic train/val/test split.

    Each class is shuffled and carved by largest-remainder rounding, so
    per-class train counts stay within one clip of the exact quota. Splits
    are disjoint and cover the input.
    """
    if len(clips) < 10:
        raise ValueError(f"split_dataset: need at least 10 clips, got {len(clips)}")
    by_label: dict[int, list[int]] = {}
    for idx, clip in enumerate(clips):
        if clip.label is None:
            raise ValueError(f"split_dataset: clip {clip.id or idx} has no label")
        by_label.setdefault(clip.label, []).append(idx)

    rng = np.random.default_rng(spec.seed)
    picks: tuple[list[int], list[int], list[int]] = ([], [], [])
    for label in sorted(by_label):
        indices = np.array(by_label[label])
        rng.shuffle(indices)
        n_train, n_val, n_test = _allocate(len(indices), (spec.train, spec.val, spec.test))
        picks[0].extend(indices[:n_train].tolist())
        picks[1].extend(indices[n_train : n_train + n_val].tolist())
        picks[2].extend(indices[n_train + n_val :].tolist())

    splits = tuple([clips[i] for i in sorted(part)] for part in picks)
    for name, part in zip(("train", "val", "test"), splits):
        if not part:
            raise ValueError(f"split_dataset: the {name} split is empty (dataset too small for the fractions)")
    return splits


DEFAULT_EPS_GRID = tuple(round(0.05 * k, 2) for k in range(1, 21))


@dataclass
class SweepSpec:
    kind: str = "fgsm"
    eps_grid: tuple[float, ...] = DEFAULT_EPS_GRID
    eps_iter: float = 0.1
    nb_iter: int = 5
    cw_lr: float = 0.01
    cw_max_iterations: int = 200
    cw_const: float = 1.0
    cw_kappa: float = 0.0
    sample_cap: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("fgsm", "pgd", "cw"):
            raise ValueError(f"SweepSpec: unknown attack kind '{self.kind}'")
        self.eps_grid = tuple(float(e) for e in self.eps_grid)
        if not self.eps_grid:
            raise ValueError("SweepSpec: eps grid is empty")
        # zero is allowed so a sweep can include the clean baseline point
        if any(e < 0 for e in self.eps_grid):
            raise ValueError("SweepSpec: eps grid values must be >= 0")
        if any(b <= a for a, b in zip(self.eps_grid, self.eps_grid[1:])):
            raise ValueError("SweepSpec: eps grid must be strictly increasing")
        if self.sample_cap < 1:
            raise ValueError(f"SweepSpec: sample_cap must be >= 1, got {self.sample_cap}")

    def attack_config(self, eps: float) -> AttackConfig:
        return AttackConfig(
            kind=self.kind,
            eps=eps,
            eps_iter=self.eps_iter,
            nb_iter=self.nb_iter,
            cw_lr=self.cw_lr,
            cw_max_iterations=self.cw_max_iterations,
            cw_const=self.cw_const,
            cw_kappa=self.cw_kappa,
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "eps_grid": list(self.eps_grid),
            "eps_iter": self.eps_iter,
            "nb_iter": self.nb_iter,
            "cw_lr": self.cw_lr,
            "cw_max_iterations": self.cw_max_iterations,
            "cw_const": self.cw_const,
            "cw_kappa": self.cw_kappa,
            "sample_cap": self.sample_cap,
            "seed": self.seed,
        }


@dataclass
class SweepRow:
    attack: str
    eps: float
    n_samples: int
    accuracy: float
    success_rate: float
    mean_linf: float
    max_linf: float
    mean_l2: float
    seed: int


@dataclass
class SweepReport:
    attack: str
    rows: list[SweepRow]
    metadata: dict = field(default_factory=dict)


def _attack_samples(
    model: ModelState,
    data: FeatureDataset,
    indices: np.ndarray,
    cfg: AttackConfig,
    jobs: int,
) -> list[AdversarialExample]:
    def one(i: int) -> AdversarialExample:
        return run_attack(model, data.x[i], int(data.y[i]), cfg)

    if jobs <= 1 or len(indices) <= 1:
        return [one(int(i)) for i in indices]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, (int(i) for i in indices)))


def run_sweep(model: ModelState, data: FeatureDataset, spec: SweepSpec, jobs: int = 1) -> SweepReport:
    """Attack every (capped) test sample at each grid point and tabulate."""
    if len(data) == 0:
        raise ValueError("run_sweep: empty dataset")
    AttackConfig(kind=spec.kind)  # rejects unknown kinds early

    rng = np.random.default_rng(spec.seed)
    if len(data) > spec.sample_cap:
        indices = np.sort(rng.choice(len(data), size=spec.sample_cap, replace=False))
    else:
        indices = np.arange(len(data))

    rows = []
    for eps in spec.eps_grid:
        examples = _attack_samples(model, data, indices, spec.attack_config(eps), jobs)
        labels = data.y[indices]
        preds = np.array([e.adv_pred for e in examples])
        rows.append(
            SweepRow(
                attack=spec.kind,
                eps=eps,
                n_samples=len(examples),
                accuracy=float((preds == labels).mean()),
                success_rate=float(np.mean([e.success for e in examples])),
                mean_linf=float(np.mean([e.linf for e in examples])),
                max_linf=float(np.max([e.linf for e in examples])),
                mean_l2=float(np.mean([e.l2 for e in examples])),
                seed=spec.seed,
            )
        )
    metadata = {
        "spec": spec.to_dict(),
        "model_checksum": model.checksum(),
        "sample_indices": indices.tolist(),
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    }
    return SweepReport(attack=spec.kind, rows=rows, metadata=metadata)


CSV_HEADER = "attack,eps,n_samples,accuracy,success_rate,mean_linf,max_linf,mean_l2,seed"


def write_report(report: SweepReport, path: str | Path) -> Path:
    """CSV (6-decimal floats) plus a sibling .json with the full metadata."""
    path = Path(path)
    lines = [CSV_HEADER]
    for r in report.rows:
        lines.append(
            f"{r.attack},{r.eps:.6f},{r.n_samples},{r.accuracy:.6f},{r.success_rate:.6f},"
            f"{r.mean_linf:.6f},{r.max_linf:.6f},{r.mean_l2:.6f},{r.seed}"
        )
    path.write_text("\n".join(lines) + "\n")
    sidecar = path.with_suffix(".json")
    payload = {
        "attack": report.attack,
        "rows": [vars(r) for r in report.rows],
        "metadata": report.metadata,
    }
    sidecar.write_text(json.dumps(payload, indent=2))
    return path


def read_report_csv(path: str | Path) -> list[dict]:
    """Parse a sweep CSV back into python values (used by show-report)."""
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: not a sweep report (bad header)")
    out = []
    for line in lines[1:]:
        cells = line.split(",")
        out.append(
            {
                "attack": cells[0],
                "eps": float(cells[1]),
                "n_samples": int(cells[2]),
                "accuracy": float(cells[3]),
                "success_rate": float(cells[4]),
                "mean_linf": float(cells[5]),
                "max_linf": float(cells[6]),
                "mean_l2": float(cells[7]),
                "seed": int(cells[8]),
            }
        )
    return out
