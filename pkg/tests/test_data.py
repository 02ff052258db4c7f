import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from recurrct.data import (AtlasSpec, Dataset, Label, NetworkSpec, RoiTimeSeries, SubjectRecord,
                           default_atlas, generate_synthetic_cohort, load_dataset, reduced_atlas,
                           split_train_test, write_dataset, zscore_normalize)
from recurrct.embedding import autocorrelation
from recurrct.errors import DegenerateSeriesError, ValidationError


def small_atlas(n_rois=3):
    return AtlasSpec((NetworkSpec("net", tuple(range(1, n_rois + 1))),))


def small_dataset(n_subjects=2, n_rois=3, n=10, seed=0):
    rng = np.random.default_rng(seed)
    subjects = []
    for k in range(n_subjects):
        series = {r: RoiTimeSeries(r, rng.normal(size=n)) for r in range(1, n_rois + 1)}
        subjects.append(SubjectRecord(f"s{k}", Label(k % 2), series))
    return Dataset(small_atlas(n_rois), tuple(subjects), seed)


# ------------------------------------------------------------------ atlas

def test_default_atlas_shape():
    atlas = default_atlas()
    sizes = [len(n.roi_ids) for n in atlas.networks]
    assert len(sizes) == 6
    assert sum(sizes) == 160
    assert all(25 <= s <= 30 for s in sizes)
    assert len(set(atlas.roi_ids)) == 160


def test_reduced_atlas_keeps_names():
    atlas = reduced_atlas(2)
    assert [n.name for n in atlas.networks] == [n.name for n in default_atlas().networks]
    assert all(len(n.roi_ids) == 2 for n in atlas.networks)


def test_atlas_rejects_duplicate_rois():
    with pytest.raises(ValidationError):
        AtlasSpec((NetworkSpec("a", (1, 2)), NetworkSpec("b", (2, 3))))


def test_atlas_rejects_empty_network_and_too_many_rois():
    with pytest.raises(ValidationError):
        NetworkSpec("a", ())
    with pytest.raises(ValidationError):
        AtlasSpec((NetworkSpec("a", tuple(range(161))),))


def test_network_lookup_by_slug():
    atlas = default_atlas()
    assert atlas.network("default_mode").name == "default mode"
    with pytest.raises(ValidationError):
        atlas.network("nope")


# ----------------------------------------------------------- data model

def test_series_invariants():
    with pytest.raises(ValidationError):
        RoiTimeSeries(1, [1.0])
    with pytest.raises(ValidationError):
        RoiTimeSeries(1, [1.0, np.nan])
    s = RoiTimeSeries(1, [1, 2, 3])
    assert s.N == 3
    with pytest.raises(ValueError):
        s.values[0] = 5.0


def test_subject_requires_equal_lengths():
    with pytest.raises(ValidationError, match="unequal"):
        SubjectRecord("x", Label.MCI, {1: RoiTimeSeries(1, [1, 2, 3]), 2: RoiTimeSeries(2, [1, 2])})


def test_dataset_rejects_duplicate_ids_and_unknown_rois():
    ds = small_dataset()
    with pytest.raises(ValidationError, match="unique"):
        Dataset(ds.atlas, ds.subjects + ds.subjects[:1])
    rogue = SubjectRecord("r", Label.HEALTHY, {1: RoiTimeSeries(1, [1, 2]), 2: RoiTimeSeries(2, [1, 2]),
                                                3: RoiTimeSeries(3, [1, 2]), 99: RoiTimeSeries(99, [1, 2])})
    with pytest.raises(ValidationError, match="unknown roi_id"):
        Dataset(ds.atlas, (rogue,))


# ------------------------------------------------------------------- IO

def test_round_trip_two_subjects(tmp_path):
    ds = small_dataset(2, 3, 10)
    manifest = write_dataset(ds, tmp_path)
    back = load_dataset(manifest)
    assert len(back.subjects) == 2
    assert all(s.N == 10 for s in back.subjects)
    for a, b in zip(ds.subjects, back.subjects):
        assert a.label == b.label
        for r in a.series:
            assert np.array_equal(a.series[r].values, b.series[r].values)


def test_round_trip_to_nine_digits(tmp_path):
    ds = small_dataset(2, 3, 10)
    man = write_dataset(ds, tmp_path / "a")
    again = write_dataset(load_dataset(man), tmp_path / "b")
    for sid in ("s0", "s1"):
        a = np.loadtxt(tmp_path / "a" / "subjects" / f"{sid}.csv", delimiter=",", skiprows=1)
        b = np.loadtxt(again.parent / "subjects" / f"{sid}.csv", delimiter=",", skiprows=1)
        assert np.allclose(a, b, rtol=1e-9, atol=0)


def test_ragged_rows(tmp_path):
    manifest = write_dataset(small_dataset(), tmp_path)
    csv_path = tmp_path / "subjects" / "s0.csv"
    lines = csv_path.read_text().splitlines()
    lines[3] = lines[3] + ",1.0"
    csv_path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValidationError, match="ragged rows"):
        load_dataset(manifest)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "absent.json")
    manifest = write_dataset(small_dataset(), tmp_path)
    (tmp_path / "subjects" / "s1.csv").unlink()
    with pytest.raises(FileNotFoundError):
        load_dataset(manifest)


def test_bad_label_unknown_roi_and_short_series(tmp_path):
    manifest = write_dataset(small_dataset(), tmp_path)
    man = json.loads(manifest.read_text())
    man["subjects"][0]["label"] = "AD"
    manifest.write_text(json.dumps(man))
    with pytest.raises(ValidationError, match="label"):
        load_dataset(manifest)

    manifest = write_dataset(small_dataset(), tmp_path / "b")
    csv_path = tmp_path / "b" / "subjects" / "s0.csv"
    text = csv_path.read_text().replace("roi_3", "roi_42", 1)
    csv_path.write_text(text)
    with pytest.raises(ValidationError, match="unknown roi_id"):
        load_dataset(manifest)

    manifest = write_dataset(small_dataset(), tmp_path / "c")
    csv_path = tmp_path / "c" / "subjects" / "s0.csv"
    csv_path.write_text("\n".join(csv_path.read_text().splitlines()[:2]) + "\n")
    with pytest.raises(ValidationError, match="N >= 2"):
        load_dataset(manifest)


def test_synthetic_cohort_reloads_balanced(tmp_path):
    ds = generate_synthetic_cohort(50, reduced_atlas(2), 200, seed=1)
    back = load_dataset(write_dataset(ds, tmp_path))
    assert back.class_counts() == {"Healthy": 50, "MCI": 50}


# ------------------------------------------------------------- synthetic

def test_synthetic_deterministic():
    atlas = AtlasSpec((NetworkSpec("n", (1, 2)),))
    a = generate_synthetic_cohort(1, atlas, 128, seed=7)
    b = generate_synthetic_cohort(1, atlas, 128, seed=7)
    for sa, sb in zip(a.subjects, b.subjects):
        for r in sa.series:
            assert sa.series[r].values.tobytes() == sb.series[r].values.tobytes()
    c = generate_synthetic_cohort(1, atlas, 128, seed=8)
    assert c.subjects[0].series[1].values.tobytes() != a.subjects[0].series[1].values.tobytes()


def test_synthetic_full_atlas_counts():
    ds = generate_synthetic_cohort(50, default_atlas(), 200, seed=1)
    assert len(ds.subjects) == 100
    assert ds.class_counts() == {"Healthy": 50, "MCI": 50}


def test_synthetic_regimes_autocorrelation():
    ds = generate_synthetic_cohort(5, reduced_atlas(2), 200, seed=3)
    for s in ds.subjects:
        for ts in s.series.values():
            v = ts.values
            acf = autocorrelation(v, 40)
            if s.label is Label.HEALTHY:
                # dominant period from the spectrum, then the ACF one period on
                spec = np.abs(np.fft.rfft(v - v.mean()))
                period = round(v.size / (np.argmax(spec[1:]) + 1))
                assert acf[period] > 0.5
            else:
                assert acf[1] < 0.5


def test_synthetic_rejects_short_series():
    with pytest.raises(ValidationError):
        generate_synthetic_cohort(1, reduced_atlas(1), 63)


# ----------------------------------------------------------------- split

def test_split_paper_ratio():
    ds = generate_synthetic_cohort(50, reduced_atlas(1), 64, seed=0)
    train, test = split_train_test(ds, 0.2, seed=4)
    assert len(train.subjects) == 80 and len(test.subjects) == 20
    assert test.class_counts() == {"Healthy": 10, "MCI": 10}
    assert not {s.subject_id for s in train.subjects} & {s.subject_id for s in test.subjects}


def test_split_smallest_case_has_no_training_subject():
    # 1 + 1 subjects at 0.5: each class rounds 0.5 up to one test subject,
    # leaving neither class a training subject
    ds = small_dataset(2, 3, 10)
    with pytest.raises(ValidationError, match="no training subjects"):
        split_train_test(ds, 0.5, seed=0)


def test_split_smallest_workable_case():
    ds = small_dataset(4, 3, 10)
    train, test = split_train_test(ds, 0.5, seed=0)
    assert len(train.subjects) == 2 and len(test.subjects) == 2
    assert train.class_counts() == test.class_counts() == {"Healthy": 1, "MCI": 1}


def test_split_deterministic_and_seed_sensitive():
    ds = generate_synthetic_cohort(20, reduced_atlas(1), 64, seed=0)
    ids = lambda part: [s.subject_id for s in part.subjects]
    a, b = split_train_test(ds, 0.2, 9), split_train_test(ds, 0.2, 9)
    assert ids(a[1]) == ids(b[1])
    assert any(ids(split_train_test(ds, 0.2, k)[1]) != ids(a[1]) for k in range(10, 14))


def test_split_errors():
    ds = small_dataset(2, 3, 10)
    with pytest.raises(ValidationError, match="no training"):
        split_train_test(ds, 0.9, 0)
    one_class = Dataset(ds.atlas, ds.subjects[:1])
    with pytest.raises(ValidationError, match="absent"):
        split_train_test(one_class, 0.5, 0)
    with pytest.raises(ValidationError):
        split_train_test(ds, 1.0, 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.integers(2, 30), st.floats(0.05, 0.45), st.integers(0, 1000))
def test_split_proportions(n_h, n_m, frac, seed):
    subjects = []
    for k in range(n_h + n_m):
        series = {1: RoiTimeSeries(1, [0.0, float(k + 1)])}
        subjects.append(SubjectRecord(f"s{k:02d}", Label.HEALTHY if k < n_h else Label.MCI, series))
    ds = Dataset(small_atlas(1), tuple(subjects))
    train, test = split_train_test(ds, frac, seed)
    counts = test.class_counts()
    for label, n in (("Healthy", n_h), ("MCI", n_m)):
        assert abs(counts[label] - frac * n) <= 1
    assert len(train.subjects) + len(test.subjects) == n_h + n_m


# ---------------------------------------------------------------- z-score

def test_zscore_hand_example():
    out = zscore_normalize(RoiTimeSeries(1, [1, 2, 3])).values
    assert np.allclose(out, [-1.2247, 0.0, 1.2247], atol=1e-3)


def test_zscore_degenerate():
    with pytest.raises(DegenerateSeriesError, match="degenerate series"):
        zscore_normalize(RoiTimeSeries(1, [5, 5, 5]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=60))
def test_zscore_moments_and_idempotence(values):
    v = np.array(values)
    if np.ptp(v) < 1e-6:
        return
    once = zscore_normalize(RoiTimeSeries(1, v))
    assert abs(once.values.mean()) < 1e-9
    assert abs(once.values.std() - 1.0) < 1e-9
    twice = zscore_normalize(once)
    assert np.allclose(twice.values, once.values, atol=1e-9, rtol=0)
