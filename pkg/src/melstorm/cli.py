"""Command-line frontend for the robustness workbench.

Exit codes: 0 success, 1 usage error, 2 runtime failure. Every subcommand
takes ``--config`` (JSON experiment document) and repeatable ``--set
dotted.key=value`` overrides; flags specific to a subcommand win over the
config. ``MELSTORM_DATA_DIR`` provides a default corpus root for
directory-sourced data.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .audio import export_corpus, load_corpus, synth_corpus
from .config import ConfigError, ExperimentConfig, load_config
from .experiment import run_experiment
from .features import featurize_clips
from .harness import SweepSpec, read_report_csv, run_sweep, split_dataset, write_report
from .model import build_model, evaluate, load_weights, save_weights, train
from .poison import PoisonConfig, export_poisoned_corpus, poison_dataset


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage problems, not argparse's 2
        raise UsageError(f"{self.prog}: {message}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="melstorm", description="Audio-digit classifier robustness workbench.")
    parser.add_argument("--version", action="version", version=f"melstorm {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def common(p: _Parser) -> None:
        p.add_argument("--config", help="experiment config JSON (defaults apply when omitted)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. --set train.epochs=1")

    p = sub.add_parser("synth-data", parents=[], help="generate the synthetic digit corpus as WAV files")
    p.add_argument("--out", required=True, help="output corpus root")
    p.add_argument("--n-per-class", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)

    p = sub.add_parser("train", help="train the classifier and save weights")
    common(p)
    p.add_argument("--output-dir", default="runs/train", help="where weights and logs go")

    p = sub.add_parser("eval", help="evaluate saved weights on the config's val/test splits")
    common(p)
    p.add_argument("--model", required=True, help="weights file (.amnw)")

    p = sub.add_parser("attack", help="run one attack at one eps over the test split")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--attack", required=True, choices=["fgsm", "pgd", "cw"])
    p.add_argument("--eps", type=float, default=0.2)
    p.add_argument("--eps-iter", type=float, default=0.1)
    p.add_argument("--nb-iter", type=int, default=5)
    p.add_argument("--cw-lr", type=float, default=0.01)
    p.add_argument("--cw-iterations", type=int, default=200)
    p.add_argument("--cw-const", type=float, default=1.0)
    p.add_argument("--kappa", type=float, default=0.0)
    p.add_argument("--sample-cap", type=int, default=200)
    p.add_argument("--seed", type=int, default=17)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--output-dir", default=None, help="also write the one-row report here")

    p = sub.add_parser("sweep", help="run an attack across the eps grid and write a CSV report")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--attack", required=True, choices=["fgsm", "pgd", "cw"])
    p.add_argument("--eps-grid", default=None, help="comma-separated eps values (default: 0.05..1.0)")
    p.add_argument("--eps-iter", type=float, default=0.1)
    p.add_argument("--nb-iter", type=int, default=5)
    p.add_argument("--cw-lr", type=float, default=0.01)
    p.add_argument("--cw-iterations", type=int, default=200)
    p.add_argument("--cw-const", type=float, default=1.0)
    p.add_argument("--kappa", type=float, default=0.0)
    p.add_argument("--sample-cap", type=int, default=200)
    p.add_argument("--seed", type=int, default=17)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--output-dir", default="runs/sweep")

    p = sub.add_parser("poison", help="poison a corpus and export it as WAV")
    common(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=13)
    p.add_argument("--out", required=True, help="export root (a poisoned/ tree is created inside)")

    p = sub.add_parser("run", help="run a full experiment config end to end")
    common(p)
    p.add_argument("--output-dir", default=None, help="override the config's output_dir")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)

    p = sub.add_parser("show-report", help="pretty-print a sweep CSV and emit plot-ready long format")
    p.add_argument("--report", required=True, help="sweep CSV path")
    p.add_argument("--out", default=None, help="long-format CSV output (attack,eps,metric,value)")

    return parser


def _load_clips(cfg: ExperimentConfig):
    if cfg.data.source == "synth":
        return synth_corpus(
            cfg.data.n_per_class,
            cfg.data.seed,
            sample_rate=cfg.features.sample_rate,
            length=cfg.features.clip_samples,
        )
    return load_corpus(cfg.data.resolve_root())


def _test_features(cfg: ExperimentConfig):
    clips = _load_clips(cfg)
    _, val_clips, test_clips = split_dataset(clips, cfg.split)
    return (
        featurize_clips(val_clips, cfg.features),
        featurize_clips(test_clips, cfg.features),
    )


def _cmd_synth_data(args) -> int:
    clips = synth_corpus(args.n_per_class, args.seed)
    paths = export_corpus(clips, args.out)
    print(f"wrote {len(paths)} clips under {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = load_config(args.config, args.overrides)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    clips = _load_clips(cfg)
    train_clips, val_clips, _ = split_dataset(clips, cfg.split)
    augment_seed = cfg.train.seed if cfg.features.shift_fraction > 0 else None
    train_feats = featurize_clips(train_clips, cfg.features, augment_seed=augment_seed)
    val_feats = featurize_clips(val_clips, cfg.features)
    model = build_model(cfg.model, cfg.model_seed)
    records = train(model, train_feats, val_feats, cfg.train, log_path=out / "train_log.jsonl")
    save_weights(model, out / "model.amnw")
    (out / "resolved_config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    for r in records:
        print(f"epoch {r['epoch']}: train_loss={r['train_loss']:.4f} val_acc={r['val_acc']:.4f}")
    print(f"saved {out / 'model.amnw'}")
    return 0


def _cmd_eval(args) -> int:
    cfg = load_config(args.config, args.overrides)
    model = load_weights(args.model)
    val_feats, test_feats = _test_features(cfg)
    result = {"val_acc": evaluate(model, val_feats), "test_acc": evaluate(model, test_feats)}
    print(json.dumps(result, indent=2))
    return 0


def _sweep_spec_from_args(args, grid) -> SweepSpec:
    return SweepSpec(
        kind=args.attack,
        eps_grid=grid,
        eps_iter=args.eps_iter,
        nb_iter=args.nb_iter,
        cw_lr=args.cw_lr,
        cw_max_iterations=args.cw_iterations,
        cw_const=args.cw_const,
        cw_kappa=args.kappa,
        sample_cap=args.sample_cap,
        seed=args.seed,
    )


def _cmd_attack(args) -> int:
    cfg = load_config(args.config, args.overrides)
    model = load_weights(args.model)
    _, test_feats = _test_features(cfg)
    spec = _sweep_spec_from_args(args, (args.eps,))
    report = run_sweep(model, test_feats, spec, jobs=args.jobs)
    row = report.rows[0]
    print(json.dumps(vars(row), indent=2))
    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_report(report, out / f"{args.attack}_attack.csv")
    return 0


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.overrides)
    model = load_weights(args.model)
    _, test_feats = _test_features(cfg)
    if args.eps_grid:
        grid = tuple(float(v) for v in args.eps_grid.split(","))
    elif args.attack == "cw":
        grid = (1.0,)
    else:
        grid = None
    spec = _sweep_spec_from_args(args, grid) if grid else _sweep_spec_from_args(args, SweepSpec().eps_grid)
    report = run_sweep(model, test_feats, spec, jobs=args.jobs)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = write_report(report, out / f"{args.attack}_sweep.csv")
    for r in report.rows:
        print(f"eps={r.eps:.2f} accuracy={r.accuracy:.4f} success={r.success_rate:.4f}")
    print(f"wrote {path}")
    return 0


def _cmd_poison(args) -> int:
    cfg = load_config(args.config, args.overrides)
    clips = _load_clips(cfg)
    pc = PoisonConfig(alpha=args.alpha, fraction=args.fraction, apply_to="both", seed=args.seed)
    poisoned = poison_dataset(clips, pc)
    root = export_poisoned_corpus(poisoned, args.out, pc)
    print(f"wrote poisoned corpus under {root}")
    return 0


def _cmd_run(args) -> int:
    cfg = load_config(args.config, args.overrides)
    artifacts = run_experiment(cfg, output_dir=args.output_dir, jobs=args.jobs)
    for name in sorted(artifacts):
        print(f"{name}: {artifacts[name]}")
    return 0


_LONG_METRICS = ("accuracy", "success_rate", "mean_linf", "max_linf", "mean_l2")


def _cmd_show_report(args) -> int:
    rows = read_report_csv(args.report)
    header = ["attack", "eps", "n", "accuracy", "success", "mean_linf", "max_linf", "mean_l2"]
    table = [header] + [
        [
            r["attack"],
            f"{r['eps']:.2f}",
            str(r["n_samples"]),
            f"{r['accuracy']:.4f}",
            f"{r['success_rate']:.4f}",
            f"{r['mean_linf']:.4f}",
            f"{r['max_linf']:.4f}",
            f"{r['mean_l2']:.4f}",
        ]
        for r in rows
    ]
    widths = [max(len(line[i]) for line in table) for i in range(len(header))]
    for line in table:
        print("  ".join(cell.rjust(w) for cell, w in zip(line, widths)))
    if args.out:
        lines = ["attack,eps,metric,value"]
        for r in rows:
            for metric in _LONG_METRICS:
                lines.append(f"{r['attack']},{r['eps']:.6f},{metric},{r[metric]:.6f}")
        Path(args.out).write_text("\n".join(lines) + "\n")
        print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "synth-data": _cmd_synth_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "attack": _cmd_attack,
    "sweep": _cmd_sweep,
    "poison": _cmd_poison,
    "run": _cmd_run,
    "show-report": _cmd_show_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return 0 if exc.code in (0, None) else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (ConfigError, ValueError, OSError) as exc:
        print(f"melstorm: error: {exc}", file=sys.stderr)
        return 2


def run() -> None:
    sys.exit(main())
