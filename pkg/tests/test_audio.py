import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from melstorm.audio import (
    AudioClip,
    WavFormatError,
    canonical_length,
    export_corpus,
    load_corpus,
    parse_wav,
    resample_linear,
    shift_augment,
    synth_corpus,
    write_wav,
)
from melstorm.features import featurize_clips

from conftest import TINY_FEATURES, tiny_clips
from oracles import centroid_accuracy


def wav_bytes(samples_int16, rate=48000, channels=1, codec=1, bits=16):
    """Assemble a minimal RIFF/WAVE file by hand."""
    data = np.asarray(samples_int16, dtype="<i2").tobytes()
    fmt = struct.pack("<HHIIHH", codec, channels, rate, rate * channels * bits // 8, channels * bits // 8, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(data)) + data
    return b"RIFF" + struct.pack("<I", len(body)) + body


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def test_parse_scaling():
    clip = parse_wav(wav_bytes([0, 16384, -32768]))
    assert np.array_equal(clip.samples, [0.0, 0.5, -1.0])


def test_parse_48k_passthrough():
    clip = parse_wav(wav_bytes(np.zeros(24000, dtype=np.int16)))
    assert len(clip) == 24000 and clip.sample_rate == 48000


def test_parse_resamples_8k_sine_to_48k():
    t = np.arange(8000) / 8000.0
    sine = np.rint(0.8 * 32768 * np.sin(2 * np.pi * 400 * t)).clip(-32768, 32767)
    clip = parse_wav(wav_bytes(sine.astype(np.int16), rate=8000))
    assert len(clip) == 48000
    # amplitude at mid-band survives linear resampling within 1%
    interior = clip.samples[4800:-4800]
    amplitude = np.sqrt(2.0) * np.sqrt(np.mean(interior**2))
    assert abs(amplitude - 0.8) < 0.008


def test_parse_averages_channels_to_mono():
    stereo = np.zeros((4, 2), dtype=np.int16)
    stereo[:, 0] = [100, -100, 200, -200]
    stereo[:, 1] = [-100, 100, -200, 200]
    clip = parse_wav(wav_bytes(stereo.ravel(), channels=2))
    assert np.array_equal(clip.samples, np.zeros(4))


@pytest.mark.parametrize(
    "raw,message",
    [
        (b"RIFX" + b"\x00" * 40, "RIFF/WAVE"),
        (wav_bytes([1], codec=3), "codec"),
        (wav_bytes([1], bits=8), "bit depth"),
        (wav_bytes([]), "empty"),
        (wav_bytes([1, 2, 3])[:-4], "truncated"),
    ],
)
def test_parse_rejects_malformed(raw, message):
    with pytest.raises(WavFormatError, match=message):
        parse_wav(raw)


def test_parse_missing_chunks():
    no_data = b"RIFF" + struct.pack("<I", 4) + b"WAVE"
    with pytest.raises(WavFormatError, match="missing fmt"):
        parse_wav(no_data)


def test_write_parse_roundtrip_is_exact(tmp_path):
    ints = np.array([-32768, -1, 0, 1, 12345, 32767], dtype=np.int16)
    path = tmp_path / "clip.wav"
    write_wav(path, ints.astype(np.float64) / 32768.0)
    clip = parse_wav(path.read_bytes())
    assert np.array_equal(np.rint(clip.samples * 32768.0).astype(np.int16), ints)


def test_resample_identity_when_rates_match():
    x = np.linspace(-1, 1, 100)
    assert resample_linear(x, 48000, 48000) is x


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------


class _FixedShift:
    def __init__(self, k):
        self.k = k

    def integers(self, lo, hi):
        return self.k


def test_shift_zero_fraction_is_identity():
    clip = AudioClip(np.array([0.1, 0.2, 0.3, 0.4]), 48000, label=1)
    out = shift_augment(clip, 0.0, np.random.default_rng(0))
    assert np.array_equal(out.samples, clip.samples)


def test_shift_prepends_zeros():
    clip = AudioClip(np.array([0.1, 0.2, 0.3, 0.4]), 48000)
    out = shift_augment(clip, 0.5, _FixedShift(3), length=7)
    assert np.array_equal(out.samples, [0.0, 0.0, 0.0, 0.1, 0.2, 0.3, 0.4])


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1))
def test_shift_preserves_nonzero_multiset_without_truncation(seed):
    rng = np.random.default_rng(seed)
    samples = rng.uniform(-1, 1, size=50)
    clip = AudioClip(samples, 48000)
    out = shift_augment(clip, 0.5, rng, length=100)  # always room, no truncation
    assert sorted(out.samples[np.abs(out.samples) > 0]) == sorted(samples[np.abs(samples) > 0])


def test_shift_rejects_bad_fraction():
    clip = AudioClip(np.zeros(4), 48000)
    with pytest.raises(ValueError):
        shift_augment(clip, 0.7, np.random.default_rng(0))


def test_canonical_length_pads_and_truncates():
    assert np.array_equal(canonical_length(np.array([1.0, 2.0]), 4), [1.0, 2.0, 0.0, 0.0])
    assert np.array_equal(canonical_length(np.arange(5.0), 3), [0.0, 1.0, 2.0])


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------


def test_synth_counts_and_labels():
    clips = synth_corpus(1, seed=0)
    assert len(clips) == 10
    assert [c.label for c in clips] == list(range(10))


def test_synth_is_deterministic():
    a = synth_corpus(2, seed=42, sample_rate=8000, length=2000)
    b = synth_corpus(2, seed=42, sample_rate=8000, length=2000)
    for ca, cb in zip(a, b):
        assert np.array_equal(ca.samples, cb.samples)


def test_synth_amplitude_bounds():
    for clip in tiny_clips(3, seed=9):
        assert np.abs(clip.samples).max() <= 1.0


def test_synth_classes_separable_by_centroids():
    clips = tiny_clips(15, seed=123)
    train = [c for c in clips if int(c.id.rsplit("/", 1)[1]) < 12]
    held_out = [c for c in clips if int(c.id.rsplit("/", 1)[1]) >= 12]
    train_feats = featurize_clips(train, TINY_FEATURES)
    test_feats = featurize_clips(held_out, TINY_FEATURES)
    assert centroid_accuracy(train_feats.x, train_feats.y, test_feats.x, test_feats.y) >= 0.9


# ---------------------------------------------------------------------------
# corpus I/O
# ---------------------------------------------------------------------------


def test_export_load_roundtrip(tmp_path):
    # 48 kHz clips so ingestion does not resample
    clips = synth_corpus(2, seed=4, length=4800)
    export_corpus(clips, tmp_path)
    loaded = load_corpus(tmp_path)
    assert len(loaded) == len(clips)
    assert sorted(c.label for c in loaded) == sorted(c.label for c in clips)
    by_key = {(c.label, c.id.split("/")[-1]): c for c in clips}
    for lc in loaded:
        original = by_key[(lc.label, lc.id.split("/")[-1].removesuffix(".wav"))]
        assert np.abs(lc.samples - original.samples).max() < 1.0 / 32768.0


def test_load_corpus_manifest(tmp_path):
    clip = tiny_clips(1, seed=4)[3]
    write_wav(tmp_path / "a.wav", clip.samples, clip.sample_rate)
    (tmp_path / "manifest.tsv").write_text("a.wav\t3\tspeaker0\n")
    loaded = load_corpus(tmp_path)
    assert len(loaded) == 1 and loaded[0].label == 3 and loaded[0].id == "a.wav"


def test_load_corpus_missing_root(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_corpus(tmp_path / "nope")


def test_audio_clip_validation():
    with pytest.raises(ValueError, match="label"):
        AudioClip(np.zeros(4), 48000, label=11)
    with pytest.raises(ValueError, match="exceed"):
        AudioClip(np.array([1.5]), 48000)
