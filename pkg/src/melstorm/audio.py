"""WAV ingestion, the synthetic desk corpus, and waveform-level transforms.

Clips are mono float64 waveforms in [-1, 1] at 48 kHz. The parser is a
strict RIFF/WAVE PCM16 reader with chunk-level diagnostics; anything not
at 48 kHz is linearly resampled on ingestion.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

TARGET_RATE = 48000


class WavFormatError(ValueError):
    """Raised when a WAV byte stream cannot be decoded."""


@dataclass
class AudioClip:
    """Mono waveform with sample rate, optional digit label, and provenance id."""

    samples: np.ndarray
    sample_rate: int
    label: int | None = None
    id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"AudioClip: samples must be 1-d, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"AudioClip: sample rate must be positive, got {self.sample_rate}")
        if self.label is not None and not 0 <= self.label <= 9:
            raise ValueError(f"AudioClip: label must be a digit 0-9, got {self.label}")
        if self.samples.size and np.abs(self.samples).max() > 1.0 + 1e-12:
            raise ValueError("AudioClip: samples exceed [-1, 1]")

    def __len__(self) -> int:
        return self.samples.size


def resample_linear(samples: np.ndarray, rate_in: int, rate_out: int) -> np.ndarray:
    """Linear-interpolation resampling (desk-scale fidelity, not band-limited)."""
    if rate_in == rate_out:
        return samples
    n_out = int(round(samples.size * rate_out / rate_in))
    positions = np.arange(n_out) * (rate_in / rate_out)
    return np.interp(positions, np.arange(samples.size), samples)


def parse_wav(raw: bytes, *, label: int | None = None, clip_id: str = "") -> AudioClip:
    """Decode a RIFF/WAVE PCM16 byte stream into an AudioClip at 48 kHz.

    Multichannel audio is averaged to mono; samples are scaled by 1/32768;
    non-48 kHz material is linearly resampled. Malformed containers are
    rejected with a diagnostic naming the offending chunk.
    """
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError("not a RIFF/WAVE container (missing RIFF....WAVE header)")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (csize,) = struct.unpack_from("<I", raw, pos + 4)
        body_start = pos + 8
        if body_start + csize > len(raw):
            raise WavFormatError(f"chunk {cid!r} claims {csize} bytes but the file is truncated")
        body = raw[body_start : body_start + csize]
        if cid == b"fmt ":
            if csize < 16:
                raise WavFormatError(f"fmt chunk too short ({csize} bytes, need >= 16)")
            codec, channels, rate, _byte_rate, _block_align, bits = struct.unpack_from("<HHIIHH", body, 0)
            if codec != 1:
                raise WavFormatError(f"fmt chunk: unsupported codec tag {codec} (only PCM=1)")
            if channels < 1:
                raise WavFormatError("fmt chunk: zero channels")
            if bits != 16:
                raise WavFormatError(f"fmt chunk: unsupported bit depth {bits} (only 16-bit PCM)")
            fmt = (channels, rate)
        elif cid == b"data":
            data = body
        pos = body_start + csize + (csize & 1)  # chunks are word aligned

    if fmt is None:
        raise WavFormatError("missing fmt chunk")
    if data is None:
        raise WavFormatError("missing data chunk")
    if len(data) == 0:
        raise WavFormatError("data chunk is empty")

    channels, rate = fmt
    frame_bytes = 2 * channels
    usable = len(data) // frame_bytes * frame_bytes
    if usable == 0:
        raise WavFormatError(f"data chunk holds less than one {channels}-channel frame")
    ints = np.frombuffer(data[:usable], dtype="<i2").astype(np.float64)
    samples = ints.reshape(-1, channels).mean(axis=1) / 32768.0
    samples = resample_linear(samples, rate, TARGET_RATE)
    return AudioClip(samples=samples, sample_rate=TARGET_RATE, label=label, id=clip_id)


def write_wav(path: str | Path, samples: np.ndarray, sample_rate: int = TARGET_RATE) -> None:
    """Write mono 16-bit PCM; exact round-trip partner of :func:`parse_wav`."""
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    ints = np.clip(np.rint(clipped * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(ints.tobytes())


def canonical_length(samples: np.ndarray, length: int) -> np.ndarray:
    """Zero-pad at the end or truncate so the waveform has exactly `length` samples."""
    if samples.size == length:
        return samples
    if samples.size > length:
        return samples[:length]
    out = np.zeros(length, dtype=np.float64)
    out[: samples.size] = samples
    return out


def shift_augment(
    clip: AudioClip,
    max_shift_fraction: float,
    rng: np.random.Generator,
    length: int | None = None,
) -> AudioClip:
    """Prepend a random run of zeros, then pad/truncate to the canonical length.

    The shift k is a uniform integer in [0, max_shift_fraction * len(clip)].
    """
    if not 0.0 <= max_shift_fraction <= 0.5:
        raise ValueError(f"shift_augment: max_shift_fraction must be in [0, 0.5], got {max_shift_fraction}")
    if length is None:
        length = len(clip)
    k = int(rng.integers(0, int(max_shift_fraction * len(clip)) + 1))
    shifted = np.concatenate([np.zeros(k, dtype=np.float64), clip.samples])
    return replace(clip, samples=canonical_length(shifted, length))


def synth_corpus(
    n_per_class: int,
    seed: int,
    *,
    sample_rate: int = TARGET_RATE,
    length: int = TARGET_RATE,
    amp_range: tuple[float, float] = (3e-4, 0.6),
) -> list[AudioClip]:
    """Deterministic pseudo-voiced digit clips for desk-scale experiments.

    Digit d is a two-tone chord (fundamental 200 + 60*d Hz plus its first
    harmonic at half amplitude) under a randomized amplitude envelope
    (attack ramp, exponential decay, tremolo), with onset jitter and
    additive noise at 30 dB SNR. Clip peak amplitude is log-uniform over
    `amp_range`, a ~65 dB spread: like field recordings, the corpus mixes
    loud takes with takes quiet enough that any fixed-level interference
    can bury them. The same seed reproduces the corpus bit for bit; each
    clip draws from its own (seed, label, index) stream.
    """
    if n_per_class < 1:
        raise ValueError(f"synth_corpus: n_per_class must be >= 1, got {n_per_class}")
    t = np.arange(length) / sample_rate
    clips: list[AudioClip] = []
    for label in range(10):
        f0 = 200.0 + 60.0 * label
        for i in range(n_per_class):
            rng = np.random.default_rng([seed, label, i])
            onset = int(rng.integers(0, length // 4 + 1))
            lo, hi = amp_range
            amp = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
            decay = float(rng.uniform(0.3, 2.5))
            tremolo_hz = float(rng.uniform(3.0, 9.0))
            tremolo_depth = float(rng.uniform(0.2, 0.6))
            phase1, phase2, phase3 = rng.uniform(0.0, 2.0 * np.pi, size=3)

            tone = np.sin(2.0 * np.pi * f0 * t + phase1) + 0.5 * np.sin(4.0 * np.pi * f0 * t + phase2)
            attack = np.minimum(t / 0.02, 1.0)
            tremolo = 1.0 - tremolo_depth * (0.5 + 0.5 * np.sin(2.0 * np.pi * tremolo_hz * t + phase3))
            envelope = attack * np.exp(-decay * t) * tremolo
            signal = np.zeros(length, dtype=np.float64)
            active = length - onset
            signal[onset:] = amp * (envelope * tone)[:active]

            rms = float(np.sqrt(np.mean(signal**2)))
            noise = rng.normal(0.0, rms / 10 ** (30.0 / 20.0), size=length)
            samples = np.clip(signal + noise, -1.0, 1.0)
            clips.append(
                AudioClip(samples=samples, sample_rate=sample_rate, label=label, id=f"synth/{label}/{i:04d}")
            )
    return clips


def load_corpus(root: str | Path) -> list[AudioClip]:
    """Read a WAV corpus from `<root>/<label>/<file>.wav` or a manifest.tsv.

    The manifest format is tab-separated columns: path, label, speaker.
    Clips are returned in a deterministic (sorted) order.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus root {root} is not a directory")
    manifest = root / "manifest.tsv"
    entries: list[tuple[Path, int, str]] = []
    if manifest.is_file():
        for lineno, line in enumerate(manifest.read_text().splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise ValueError(f"{manifest}:{lineno}: expected at least 'path<TAB>label'")
            rel, label = parts[0], int(parts[1])
            entries.append((root / rel, label, rel))
    else:
        for label_dir in sorted(p for p in root.iterdir() if p.is_dir() and p.name.isdigit()):
            label = int(label_dir.name)
            for path in sorted(label_dir.glob("*.wav")):
                entries.append((path, label, str(path.relative_to(root))))
    if not entries:
        raise ValueError(f"no WAV files found under {root}")
    clips = []
    for path, label, rel in entries:
        clips.append(parse_wav(path.read_bytes(), label=label, clip_id=rel))
    return clips


def export_corpus(clips: list[AudioClip], root: str | Path) -> list[Path]:
    """Write clips as `<root>/<label>/<basename>.wav`, mirroring load_corpus layout."""
    root = Path(root)
    paths = []
    for idx, clip in enumerate(clips):
        if clip.label is None:
            raise ValueError(f"export_corpus: clip {clip.id or idx} has no label")
        base = Path(clip.id).name if clip.id else f"{idx:05d}"
        if not base.endswith(".wav"):
            base += ".wav"
        out = root / str(clip.label) / base
        out.parent.mkdir(parents=True, exist_ok=True)
        write_wav(out, clip.samples, clip.sample_rate)
        paths.append(out)
    return paths
