import json

import pytest

from melstorm.cli import main
from melstorm.config import ConfigError, apply_overrides, default_attacks, load_config, parse_config

from conftest import TINY_FEATURES, TINY_MODEL


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def test_empty_object_gives_full_paper_defaults():
    cfg = parse_config({})
    assert cfg.features.n_fft == 2034
    assert cfg.features.sample_rate == 48000
    assert cfg.features.n_mels == 64
    assert cfg.features.top_db == 80.0
    assert cfg.train.lr == 0.001
    assert cfg.train.epochs == 5
    assert (cfg.split.train, cfg.split.val, cfg.split.test) == (0.8, 0.12, 0.08)
    assert [c.out_channels for c in cfg.model.convs] == [8, 16, 32, 64]
    assert len(cfg.attacks) == 3
    assert [a.kind for a in cfg.attacks] == ["fgsm", "pgd", "cw"]
    assert len(cfg.attacks[0].eps_grid) == 20


def test_nfft_default_when_absent():
    cfg = parse_config({"features": {"hop_length": 256}})
    assert cfg.features.n_fft == 2034
    assert cfg.features.hop_length == 256


def test_unknown_key_rejected_with_path():
    with pytest.raises(ConfigError, match="train.lrate"):
        parse_config({"train": {"lrate": 0.1}})
    with pytest.raises(ConfigError, match="turbo"):
        parse_config({"turbo": True})


def test_negative_lr_rejected():
    with pytest.raises(ConfigError, match="train.lr"):
        parse_config({"train": {"lr": -1}})


def test_type_errors_name_path():
    with pytest.raises(ConfigError, match="features.n_mels"):
        parse_config({"features": {"n_mels": "lots"}})
    with pytest.raises(ConfigError, match="poison.apply_to"):
        parse_config({"poison": {"apply_to": "tuesday"}})


def test_attack_validation_paths():
    with pytest.raises(ConfigError, match="attacks.0"):
        parse_config({"attacks": [{"kind": "fgsm", "eps_grid": [0.2, 0.1]}]})
    with pytest.raises(ConfigError, match="attacks.1.kind"):
        parse_config({"attacks": [{"kind": "fgsm"}, {"kind": "warp"}]})


def test_cw_default_grid_is_single_point():
    cfg = parse_config({"attacks": [{"kind": "cw"}]})
    assert cfg.attacks[0].eps_grid == (1.0,)


def test_overrides_apply_before_validation():
    raw = apply_overrides({}, ["train.epochs=1", "features.n_fft=2048", "data.n_per_class=5"])
    cfg = parse_config(raw)
    assert cfg.train.epochs == 1
    assert cfg.features.n_fft == 2048
    assert cfg.data.n_per_class == 5


def test_override_strings_and_lists():
    raw = apply_overrides({}, ['data.source="synth"', "attacks=[]"])
    cfg = parse_config(raw)
    assert cfg.data.source == "synth"
    assert cfg.attacks == []


def test_override_bad_syntax():
    with pytest.raises(ConfigError, match="dotted.key=value"):
        apply_overrides({}, ["no_equals_sign"])


def test_config_roundtrips_through_to_dict():
    cfg = parse_config({"train": {"epochs": 2}, "poison": {"enabled": True}})
    again = parse_config(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()


def test_directory_source_requires_root(monkeypatch):
    monkeypatch.delenv("MELSTORM_DATA_DIR", raising=False)
    with pytest.raises(ConfigError, match="data.root"):
        parse_config({"data": {"source": "directory"}})
    monkeypatch.setenv("MELSTORM_DATA_DIR", "/tmp/corpus")
    cfg = parse_config({"data": {"source": "directory"}})
    assert cfg.data.resolve_root().name == "corpus"


def test_load_config_rejects_bad_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{nope")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(path)
    path.write_text("[1,2]")
    with pytest.raises(ConfigError, match="object"):
        load_config(path)


def test_default_attacks_match_reported_settings():
    fgsm, pgd, cw = default_attacks()
    assert pgd.eps_iter == 0.1 and pgd.nb_iter == 5
    assert cw.cw_lr == 0.01 and cw.cw_max_iterations == 200
    assert fgsm.eps_grid[0] == 0.05 and fgsm.eps_grid[-1] == 1.0


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def tiny_config_file(tmp_path, **extra):
    doc = {
        "data": {"n_per_class": 12, "seed": 7},
        "features": {
            "sample_rate": TINY_FEATURES.sample_rate,
            "n_fft": TINY_FEATURES.n_fft,
            "hop_length": TINY_FEATURES.hop_length,
            "n_mels": TINY_FEATURES.n_mels,
            "fmax": TINY_FEATURES.fmax,
            "clip_seconds": TINY_FEATURES.clip_seconds,
        },
        "model": {
            "convs": [
                {"in_channels": c.in_channels, "out_channels": c.out_channels,
                 "kernel": list(c.kernel), "stride": list(c.stride), "padding": list(c.padding)}
                for c in TINY_MODEL.convs
            ]
        },
        "train": {"epochs": 1, "seed": 5},
    }
    doc.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


def test_cli_help_and_usage_codes(capsys):
    assert main(["--help"]) == 0
    assert main(["no-such-command"]) == 1
    assert main([]) == 1
    assert main(["train", "--bogus-flag"]) == 1
    capsys.readouterr()


def test_cli_runtime_error_is_exit_2(tmp_path, capsys):
    assert main(["eval", "--model", str(tmp_path / "missing.amnw")]) == 2
    err = capsys.readouterr().err
    assert "error" in err


def test_cli_synth_data_writes_corpus(tmp_path, capsys):
    assert main(["synth-data", "--out", str(tmp_path / "corpus"), "--n-per-class", "1", "--seed", "3"]) == 0
    wavs = list((tmp_path / "corpus").rglob("*.wav"))
    assert len(wavs) == 10


def test_cli_train_eval_attack_sweep_cycle(tmp_path, capsys):
    config = tiny_config_file(tmp_path)
    out = tmp_path / "run"
    assert main(["train", "--config", str(config), "--output-dir", str(out)]) == 0
    model_path = out / "model.amnw"
    assert model_path.exists()
    assert (out / "train_log.jsonl").exists()
    assert (out / "resolved_config.json").exists()
    capsys.readouterr()

    assert main(["eval", "--config", str(config), "--model", str(model_path)]) == 0
    result = json.loads(capsys.readouterr().out)
    assert 0.0 <= result["test_acc"] <= 1.0

    assert (
        main(
            ["attack", "--config", str(config), "--model", str(model_path),
             "--attack", "pgd", "--eps", "0.2", "--eps-iter", "0.1", "--nb-iter", "5",
             "--jobs", "1"]
        )
        == 0
    )
    row = json.loads(capsys.readouterr().out)
    assert row["attack"] == "pgd"
    assert row["eps"] == 0.2
    assert row["mean_linf"] <= 0.2 + 1e-9

    sweep_dir = tmp_path / "sweep"
    assert (
        main(
            ["sweep", "--config", str(config), "--model", str(model_path),
             "--attack", "fgsm", "--eps-grid", "0.1,0.5,0.9",
             "--output-dir", str(sweep_dir), "--jobs", "1"]
        )
        == 0
    )
    csv_lines = (sweep_dir / "fgsm_sweep.csv").read_text().strip().splitlines()
    assert len(csv_lines) == 4
    capsys.readouterr()


def test_cli_set_override_applies(tmp_path, capsys):
    config = tiny_config_file(tmp_path)
    out = tmp_path / "one-epoch"
    assert main(["train", "--config", str(config), "--set", "train.epochs=1", "--output-dir", str(out)]) == 0
    log_lines = (out / "train_log.jsonl").read_text().strip().splitlines()
    assert len(log_lines) == 1
    capsys.readouterr()


def test_cli_poison_exports(tmp_path, capsys):
    config = tiny_config_file(tmp_path)
    out = tmp_path / "poisonout"
    assert main(["poison", "--config", str(config), "--alpha", "0.05", "--out", str(out)]) == 0
    assert (out / "poisoned" / "poison_manifest.json").exists()
    capsys.readouterr()


def test_cli_show_report(tmp_path, capsys):
    csv = tmp_path / "r.csv"
    csv.write_text(
        "attack,eps,n_samples,accuracy,success_rate,mean_linf,max_linf,mean_l2,seed\n"
        "fgsm,0.050000,10,0.900000,0.100000,0.050000,0.050000,1.234000,17\n"
    )
    long_path = tmp_path / "long.csv"
    assert main(["show-report", "--report", str(csv), "--out", str(long_path)]) == 0
    printed = capsys.readouterr().out
    assert "fgsm" in printed and "0.9000" in printed
    lines = long_path.read_text().strip().splitlines()
    assert lines[0] == "attack,eps,metric,value"
    assert len(lines) == 1 + 5  # five metrics for the single row
