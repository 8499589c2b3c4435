from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from melstorm.audio import AudioClip
from melstorm.harness import (
    DEFAULT_EPS_GRID,
    SplitSpec,
    SweepSpec,
    read_report_csv,
    run_sweep,
    split_dataset,
    write_report,
)
from melstorm.model import evaluate


def label_multiset(n_per_class=100):
    clips = []
    for label in range(10):
        for i in range(n_per_class):
            clips.append(AudioClip(np.zeros(8), 48000, label=label, id=f"{label}/{i}"))
    return clips


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------


def test_split_1000_is_800_120_80():
    tr, va, te = split_dataset(label_multiset(100), SplitSpec(seed=0))
    assert (len(tr), len(va), len(te)) == (800, 120, 80)


def test_split_disjoint_and_complete():
    clips = label_multiset(17)
    tr, va, te = split_dataset(clips, SplitSpec(seed=1))
    ids = [c.id for c in tr] + [c.id for c in va] + [c.id for c in te]
    assert sorted(ids) == sorted(c.id for c in clips)
    assert len(set(ids)) == len(ids)


def test_split_stratified_within_one():
    clips = label_multiset(37)
    tr, _, _ = split_dataset(clips, SplitSpec(seed=2))
    counts = Counter(c.label for c in tr)
    for label in range(10):
        assert abs(counts[label] - 0.8 * 37) <= 1.0


def test_split_deterministic():
    clips = label_multiset(13)
    a = split_dataset(clips, SplitSpec(seed=3))
    b = split_dataset(clips, SplitSpec(seed=3))
    for pa, pb in zip(a, b):
        assert [c.id for c in pa] == [c.id for c in pb]


def test_split_rejects_small_or_empty():
    with pytest.raises(ValueError, match="at least 10"):
        split_dataset(label_multiset(100)[:5], SplitSpec(seed=0))
    tiny = [AudioClip(np.zeros(4), 48000, label=i % 10, id=str(i)) for i in range(10)]
    with pytest.raises(ValueError, match="empty"):
        split_dataset(tiny, SplitSpec(seed=0))  # 10 clips cannot fill 0.12/0.08 splits


def test_split_spec_validation():
    with pytest.raises(ValueError, match="sum to 1"):
        SplitSpec(train=0.8, val=0.3, test=0.08)
    with pytest.raises(ValueError, match="positive"):
        SplitSpec(train=0.8, val=-0.1, test=0.3)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(0, 9), min_size=40, max_size=120), st.integers(0, 2**31 - 1))
def test_split_partition_property(labels, seed):
    clips = [AudioClip(np.zeros(4), 48000, label=lab, id=str(i)) for i, lab in enumerate(labels)]
    try:
        tr, va, te = split_dataset(clips, SplitSpec(seed=seed))
    except ValueError:
        return  # a class too small to populate every split is a legal rejection
    ids = [c.id for c in tr] + [c.id for c in va] + [c.id for c in te]
    assert sorted(ids) == sorted(c.id for c in clips)


# ---------------------------------------------------------------------------
# sweeps and reports
# ---------------------------------------------------------------------------


def test_default_grid_is_twenty_points():
    assert len(DEFAULT_EPS_GRID) == 20
    assert DEFAULT_EPS_GRID[0] == 0.05
    assert DEFAULT_EPS_GRID[-1] == 1.0


def test_sweep_spec_validation():
    with pytest.raises(ValueError, match="increasing"):
        SweepSpec(kind="fgsm", eps_grid=(0.2, 0.1))
    with pytest.raises(ValueError, match=">= 0"):
        SweepSpec(kind="fgsm", eps_grid=(-0.1, 0.2))
    with pytest.raises(ValueError, match="kind"):
        SweepSpec(kind="boundary")


def test_sweep_rows_and_metrics(tiny_setup):
    spec = SweepSpec(kind="fgsm", eps_grid=(0.1, 0.5), sample_cap=10, seed=1)
    report = run_sweep(tiny_setup["model"], tiny_setup["test"], spec)
    assert len(report.rows) == 2
    for row in report.rows:
        assert row.n_samples == 10
        assert 0.0 <= row.accuracy <= 1.0
        assert row.accuracy + row.success_rate == pytest.approx(1.0)
        assert row.mean_linf <= row.eps + 1e-9
        assert row.max_linf <= row.eps + 1e-9


def test_sweep_zero_eps_equals_clean_accuracy(tiny_setup):
    spec = SweepSpec(kind="fgsm", eps_grid=(0.0,), sample_cap=1000, seed=1)
    report = run_sweep(tiny_setup["model"], tiny_setup["test"], spec)
    assert report.rows[0].accuracy == evaluate(tiny_setup["model"], tiny_setup["test"])


def test_sweep_deterministic_and_thread_invariant(tiny_setup):
    spec = SweepSpec(kind="pgd", eps_grid=(0.2,), eps_iter=0.1, nb_iter=2, sample_cap=6, seed=3)
    a = run_sweep(tiny_setup["model"], tiny_setup["test"], spec, jobs=1)
    b = run_sweep(tiny_setup["model"], tiny_setup["test"], spec, jobs=4)
    assert [vars(r) for r in a.rows] == [vars(r) for r in b.rows]


def test_sweep_sample_cap_subsets_consistently(tiny_setup):
    spec_a = SweepSpec(kind="fgsm", eps_grid=(0.3,), sample_cap=5, seed=11)
    spec_b = SweepSpec(kind="pgd", eps_grid=(0.3,), eps_iter=0.3, nb_iter=1, sample_cap=5, seed=11)
    ra = run_sweep(tiny_setup["model"], tiny_setup["test"], spec_a)
    rb = run_sweep(tiny_setup["model"], tiny_setup["test"], spec_b)
    # same seed, same cap: the two attacks see the same samples, and one-step
    # PGD with a full-size step is exactly FGSM
    assert ra.metadata["sample_indices"] == rb.metadata["sample_indices"]
    assert ra.rows[0].accuracy == rb.rows[0].accuracy


def test_write_report_roundtrip(tmp_path, tiny_setup):
    spec = SweepSpec(kind="fgsm", eps_grid=tuple(round(0.05 * k, 2) for k in range(1, 21)), sample_cap=4, seed=5)
    report = run_sweep(tiny_setup["model"], tiny_setup["test"], spec)
    path = write_report(report, tmp_path / "fgsm_sweep.csv")
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 21  # header + 20 rows
    parsed = read_report_csv(path)
    for row, original in zip(parsed, report.rows):
        assert row["attack"] == "fgsm"
        assert abs(row["accuracy"] - original.accuracy) <= 5e-7
        assert abs(row["mean_l2"] - original.mean_l2) <= 5e-7
        assert 0.0 <= row["accuracy"] <= 1.0
    sidecar = (tmp_path / "fgsm_sweep.json")
    assert sidecar.exists()


def test_read_report_rejects_other_csv(tmp_path):
    bad = tmp_path / "x.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="header"):
        read_report_csv(bad)


def test_run_sweep_rejects_empty_and_unknown(tiny_setup):
    from melstorm.features import FeatureDataset

    empty = FeatureDataset(x=np.zeros((0, 1, 4, 4)), y=np.zeros(0, dtype=int), ids=[])
    with pytest.raises(ValueError, match="empty"):
        run_sweep(tiny_setup["model"], empty, SweepSpec(kind="fgsm"))
