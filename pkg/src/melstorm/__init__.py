"""melstorm: a desk-scale robustness workbench for a spoken-digit CNN.

Mel-spectrogram features, a from-scratch float64 autograd engine, the
four-block convolutional classifier, FGSM/PGD/CW evasion attacks,
uniform-noise data poisoning, and an epsilon-sweep experiment harness.
"""

__version__ = "0.1.0"

from .audio import AudioClip, load_corpus, parse_wav, shift_augment, synth_corpus, write_wav
from .autograd import Tensor, backprop
from .features import FeatureConfig, FeatureMap, featurize_clips, mel_filterbank, mel_spectrogram
from .harness import SplitSpec, SweepSpec, run_sweep, split_dataset, write_report
from .model import ModelConfig, ModelState, TrainConfig, build_model, evaluate, load_weights, save_weights, train
from .attacks import AttackConfig, AdversarialExample, cw_l2, fgsm, input_gradient, pgd
from .poison import PoisonConfig, poison_dataset, poison_signal
from .config import ExperimentConfig, load_config
from .experiment import run_experiment

__all__ = [
    "AudioClip",
    "AdversarialExample",
    "AttackConfig",
    "ExperimentConfig",
    "FeatureConfig",
    "FeatureMap",
    "ModelConfig",
    "ModelState",
    "PoisonConfig",
    "SplitSpec",
    "SweepSpec",
    "Tensor",
    "TrainConfig",
    "backprop",
    "build_model",
    "cw_l2",
    "evaluate",
    "featurize_clips",
    "fgsm",
    "input_gradient",
    "load_config",
    "load_corpus",
    "load_weights",
    "mel_filterbank",
    "mel_spectrogram",
    "parse_wav",
    "pgd",
    "poison_dataset",
    "poison_signal",
    "run_experiment",
    "run_sweep",
    "save_weights",
    "shift_augment",
    "split_dataset",
    "synth_corpus",
    "train",
    "write_report",
    "write_wav",
]
