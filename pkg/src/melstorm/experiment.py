"""End-to-end experiment runner: data -> split -> train -> evaluate -> sweeps.

Every number an experiment emits is fixed by the config document (all RNG
streams are seeded from it), so re-running the same config byte-reproduces
the CSV reports, weights, and training logs. When poisoning is enabled the
runner trains a second model on the poisoned corpus with the same seeds
and reports both, which is the comparison the poisoning attack is about.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import replace
from pathlib import Path

from .audio import load_corpus, synth_corpus
from .config import ExperimentConfig
from .features import FeatureDataset, featurize_clips
from .harness import run_sweep, split_dataset, write_report
from .model import ModelState, build_model, evaluate, save_weights, train
from .poison import export_poisoned_corpus, poison_dataset


def _canonical_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True)


def run_experiment(cfg: ExperimentConfig, output_dir: str | Path | None = None, jobs: int = 1) -> dict[str, Path]:
    """Execute the configured pipeline and write all artifacts under output_dir."""
    out = Path(output_dir) if output_dir is not None else Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, Path] = {}

    resolved = out / "resolved_config.json"
    resolved.write_text(_canonical_json(cfg.to_dict()))
    artifacts["resolved_config"] = resolved

    if cfg.data.source == "synth":
        clips = synth_corpus(
            cfg.data.n_per_class,
            cfg.data.seed,
            sample_rate=cfg.features.sample_rate,
            length=cfg.features.clip_samples,
        )
    else:
        clips = load_corpus(cfg.data.resolve_root())

    train_clips, val_clips, test_clips = split_dataset(clips, cfg.split)

    def featurize(split_clips, augment: bool) -> FeatureDataset:
        seed = cfg.train.seed if augment and cfg.features.shift_fraction > 0 else None
        return featurize_clips(split_clips, cfg.features, augment_seed=seed)

    def fit(tag: str, tr, va) -> tuple[ModelState, list[dict]]:
        model = build_model(cfg.model, cfg.model_seed)
        log_path = out / f"train_log_{tag}.jsonl"
        records = train(model, tr, va, cfg.train, log_path=log_path)
        weights = out / f"{tag}_model.amnw"
        save_weights(model, weights)
        artifacts[f"{tag}_model"] = weights
        artifacts[f"train_log_{tag}"] = log_path
        return model, records

    train_feats = featurize(train_clips, augment=True)
    val_feats = featurize(val_clips, augment=False)
    test_feats = featurize(test_clips, augment=False)

    clean_model, _ = fit("clean", train_feats, val_feats)
    summary: dict = {
        "clean": {
            "val_acc": evaluate(clean_model, val_feats),
            "test_acc": evaluate(clean_model, test_feats),
        },
        "poisoned": None,
    }

    kind_counts: dict[str, int] = {}
    for spec in cfg.attacks:
        kind_counts[spec.kind] = kind_counts.get(spec.kind, 0) + 1
        suffix = "" if kind_counts[spec.kind] == 1 else str(kind_counts[spec.kind])
        report = run_sweep(clean_model, test_feats, spec, jobs=jobs)
        csv_path = write_report(report, out / f"{spec.kind}{suffix}_sweep.csv")
        artifacts[f"{spec.kind}{suffix}_sweep"] = csv_path

    if cfg.poison.enabled:
        pc = cfg.poison.config
        p_train = poison_dataset(train_clips, pc) if pc.apply_to in ("train", "both") else train_clips
        p_test = (
            poison_dataset(test_clips, replace(pc, seed=pc.seed + 1))
            if pc.apply_to in ("test", "both")
            else test_clips
        )
        p_train_feats = featurize(p_train, augment=True)
        p_test_feats = featurize(p_test, augment=False)
        poisoned_model, _ = fit("poisoned", p_train_feats, val_feats)
        summary["poisoned"] = {
            "val_acc": evaluate(poisoned_model, val_feats),
            "test_acc": evaluate(poisoned_model, p_test_feats),
            "clean_test_acc": evaluate(poisoned_model, test_feats),
        }
        if cfg.poison.export:
            artifacts["poisoned_corpus"] = export_poisoned_corpus(p_train + p_test, out, pc)

    summary_path = out / "eval_summary.json"
    summary_path.write_text(_canonical_json(summary))
    artifacts["eval_summary"] = summary_path

    manifest = {
        "config_sha256": hashlib.sha256(resolved.read_bytes()).hexdigest(),
        "seeds": {
            "data": cfg.data.seed,
            "split": cfg.split.seed,
            "model": cfg.model_seed,
            "train": cfg.train.seed,
            "poison": cfg.poison.config.seed,
            "attacks": [spec.seed for spec in cfg.attacks],
        },
        "artifacts": sorted(str(p.relative_to(out)) for p in artifacts.values()),
    }
    manifest_path = out / "run_manifest.json"
    manifest_path.write_text(_canonical_json(manifest))
    artifacts["run_manifest"] = manifest_path
    return artifacts
