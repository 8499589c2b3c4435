import numpy as np
import pytest

from melstorm import (
    FeatureConfig,
    ModelConfig,
    SplitSpec,
    TrainConfig,
    build_model,
    featurize_clips,
    split_dataset,
    synth_corpus,
    train,
)
from melstorm.model import ConvSpec

# Small configuration used by unit tests: 8 kHz quarter-second clips keep
# feature extraction and training fast while exercising the same code paths.
TINY_FEATURES = FeatureConfig(
    sample_rate=8000,
    n_fft=256,
    hop_length=80,
    n_mels=32,
    fmax=4000.0,
    clip_seconds=0.25,
)
TINY_MODEL = ModelConfig(
    convs=(
        ConvSpec(1, 4, (3, 3), (2, 2), (1, 1)),
        ConvSpec(4, 8, (3, 3), (2, 2), (1, 1)),
    )
)


def tiny_clips(n_per_class, seed):
    return synth_corpus(n_per_class, seed, sample_rate=8000, length=2000)


@pytest.fixture(scope="session")
def tiny_setup():
    """A small trained model plus its splits, shared by attack/harness tests."""
    clips = tiny_clips(15, seed=7)
    tr, va, te = split_dataset(clips, SplitSpec(seed=11))
    train_feats = featurize_clips(tr, TINY_FEATURES, augment_seed=5)
    val_feats = featurize_clips(va, TINY_FEATURES)
    test_feats = featurize_clips(te, TINY_FEATURES)
    model = build_model(TINY_MODEL, seed=3)
    records = train(model, train_feats, val_feats, TrainConfig(epochs=4, seed=5))
    return {
        "clips": clips,
        "splits": (tr, va, te),
        "features": TINY_FEATURES,
        "train": train_feats,
        "val": val_feats,
        "test": test_feats,
        "model": model,
        "records": records,
    }


@pytest.fixture(scope="session")
def desk():
    """The full desk-scale setup the acceptance criteria run against."""
    cfg = FeatureConfig()
    clips = synth_corpus(100, seed=7)
    tr, va, te = split_dataset(clips, SplitSpec(seed=11))
    train_feats = featurize_clips(tr, cfg, augment_seed=5)
    val_feats = featurize_clips(va, cfg)
    test_feats = featurize_clips(te, cfg)
    model = build_model(ModelConfig(), seed=3)
    records = train(model, train_feats, val_feats, TrainConfig(epochs=5, seed=5))
    return {
        "clips": clips,
        "splits": (tr, va, te),
        "features": cfg,
        "train": train_feats,
        "val": val_feats,
        "test": test_feats,
        "model": model,
        "records": records,
        "train_config": TrainConfig(epochs=5, seed=5),
    }


def rng_array(shape, seed, scale=1.0):
    return scale * np.random.default_rng(seed).normal(size=shape)
