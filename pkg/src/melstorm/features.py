"""Normalized mel-spectrogram features for the digit classifier.

The pipeline: canonical-length waveform -> centered Hann-windowed frames
(reflect padding) -> power spectrum via the exact-length FFT -> triangular
HTK-mel filterbank -> dB relative to the per-clip maximum, clamped to a
top_db floor -> affine rescale to [0, 1]. The fixed [0, 1] range is what
makes the attack epsilon budgets meaningful.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .audio import AudioClip, canonical_length, shift_augment
from .fourier import rfft_batch


@dataclass(frozen=True)
class FeatureConfig:
    sample_rate: int = 48000
    n_fft: int = 2034
    hop_length: int = 512
    n_mels: int = 64
    fmin: float = 0.0
    fmax: float = 24000.0
    top_db: float = 80.0
    clip_seconds: float = 1.0
    shift_fraction: float = 0.1  # training-time augmentation budget

    @property
    def clip_samples(self) -> int:
        return int(round(self.sample_rate * self.clip_seconds))

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    @property
    def n_frames(self) -> int:
        return 1 + self.clip_samples // self.hop_length

    def fingerprint(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class MelBank:
    """Triangular filters with peaks equally spaced on the HTK mel scale."""

    weights: np.ndarray  # [n_mels, n_bins]
    fmin: float
    fmax: float
    scale: str = "htk"
    peaks_hz: np.ndarray | None = None


@dataclass
class FeatureMap:
    """One model input: values in [0, 1] with shape (1, n_mels, n_frames)."""

    values: np.ndarray
    clip_id: str = ""
    fingerprint: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or self.values.shape[0] != 1:
            raise ValueError(f"FeatureMap: expected shape (1, n_mels, n_frames), got {self.values.shape}")
        if self.values.min() < 0.0 or self.values.max() > 1.0:
            raise ValueError("FeatureMap: values must lie in [0, 1]")


@dataclass
class FeatureDataset:
    """Stacked features ready for the model: X is [N, 1, n_mels, n_frames]."""

    x: np.ndarray
    y: np.ndarray
    ids: list[str]

    def __len__(self) -> int:
        return self.x.shape[0]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_fft: int, n_mels: int, sample_rate: int, fmin: float, fmax: float) -> MelBank:
    """Build the triangular filter matrix evaluated at FFT bin centers."""
    if not 0.0 <= fmin < fmax <= sample_rate / 2:
        raise ValueError(f"mel_filterbank: need 0 <= fmin < fmax <= Nyquist, got fmin={fmin}, fmax={fmax}")
    n_bins = n_fft // 2 + 1
    bin_hz = np.arange(n_bins) * (sample_rate / n_fft)
    points_hz = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))

    lower = points_hz[:-2, None]
    peak = points_hz[1:-1, None]
    upper = points_hz[2:, None]
    rising = (bin_hz[None, :] - lower) / (peak - lower)
    falling = (upper - bin_hz[None, :]) / (upper - peak)
    weights = np.maximum(0.0, np.minimum(rising, falling))

    empty = np.where(~(weights > 0).any(axis=1))[0]
    if empty.size:
        raise ValueError(
            f"mel_filterbank: filter {empty[0]} has no positive weight at any FFT bin; "
            f"n_mels={n_mels} is too large for n_fft={n_fft} at {sample_rate} Hz"
        )
    return MelBank(weights=weights, fmin=fmin, fmax=fmax, peaks_hz=points_hz[1:-1])


def hann_window(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(samples: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    """Centered frames with reflect padding: [n_frames, n_fft]."""
    pad = n_fft // 2
    if samples.size <= pad:
        raise ValueError(f"frame_signal: signal of {samples.size} samples too short for n_fft={n_fft}")
    padded = np.pad(samples, pad, mode="reflect")
    n_frames = 1 + samples.size // hop
    starts = np.arange(n_frames) * hop
    return padded[starts[:, None] + np.arange(n_fft)[None, :]]


def mel_spectrogram(clip: AudioClip, cfg: FeatureConfig, bank: MelBank | None = None) -> FeatureMap:
    """Turn one clip into a normalized (1, n_mels, n_frames) feature map."""
    if clip.sample_rate != cfg.sample_rate:
        raise ValueError(f"mel_spectrogram: clip at {clip.sample_rate} Hz, config expects {cfg.sample_rate} Hz")
    if bank is None:
        bank = mel_filterbank(cfg.n_fft, cfg.n_mels, cfg.sample_rate, cfg.fmin, cfg.fmax)

    samples = canonical_length(clip.samples, cfg.clip_samples)
    frames = frame_signal(samples, cfg.n_fft, cfg.hop_length) * hann_window(cfg.n_fft)
    spectrum = rfft_batch(frames, cfg.n_fft)[:, : cfg.n_bins]
    power = (spectrum.real**2 + spectrum.imag**2).T  # [n_bins, n_frames]
    mel_power = bank.weights @ power

    ref = max(float(mel_power.max()), 1e-10)
    floor = ref * 10.0 ** (-cfg.top_db / 10.0)
    db = 10.0 * np.log10(np.maximum(mel_power, floor) / ref)
    values = (db + cfg.top_db) / cfg.top_db
    return FeatureMap(values=values[None, :, :], clip_id=clip.id, fingerprint=cfg.fingerprint())


def featurize_clips(
    clips: Sequence[AudioClip],
    cfg: FeatureConfig,
    *,
    augment_seed: int | None = None,
) -> FeatureDataset:
    """Extract features for a labeled clip list, optionally with shift augmentation.

    When augment_seed is given, each clip is shifted by its own
    (augment_seed, index) random stream before feature extraction.
    """
    if not clips:
        raise ValueError("featurize_clips: empty clip list")
    bank = mel_filterbank(cfg.n_fft, cfg.n_mels, cfg.sample_rate, cfg.fmin, cfg.fmax)
    xs = np.empty((len(clips), 1, cfg.n_mels, cfg.n_frames), dtype=np.float64)
    ys = np.empty(len(clips), dtype=np.int64)
    ids = []
    for idx, clip in enumerate(clips):
        if clip.label is None:
            raise ValueError(f"featurize_clips: clip {clip.id or idx} has no label")
        if augment_seed is not None:
            rng = np.random.default_rng([augment_seed, idx])
            clip = shift_augment(clip, cfg.shift_fraction, rng, length=cfg.clip_samples)
        fm = mel_spectrogram(clip, cfg, bank)
        xs[idx] = fm.values
        ys[idx] = clip.label
        ids.append(clip.id)
    return FeatureDataset(x=xs, y=ys, ids=ids)
