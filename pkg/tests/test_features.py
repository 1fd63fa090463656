import datetime as dt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ctoutcomes.errors import EmptyInputError, UndefinedMetricError, ValidationError
from ctoutcomes.features import (FEATURE_NAMES, MF_RATIO_CAP, FeatureTable, ImageFeatures,
                                 LesionOutsideLungWarning, assemble_features, dice,
                                 extract_image_features, lesion_metrics, lung_metrics,
                                 muscle_fat_metrics, read_feature_table, rve, select_scan,
                                 write_feature_table)
from ctoutcomes.phantom import make_scan
from ctoutcomes.volume_io import FAT, MUSCLE, LabelMask, PatientRecord, VoxelGrid

D = dt.date


def lung_case(n_normal=400, n_other=600, hu_normal=-800, hu_other=-300, spacing=(1, 1, 1)):
    values = np.r_[np.full(n_normal, hu_normal), np.full(n_other, hu_other)].astype(np.int16)
    shape = (10, 10, (n_normal + n_other) // 100)
    grid = VoxelGrid(values.reshape(shape), spacing)
    return grid, LabelMask(np.ones(shape, np.uint8), "binary")


def binary(a):
    return LabelMask(np.asarray(a, dtype=np.uint8), "binary")


def test_lung_metrics_worked_example():
    nl, mct, perc = lung_metrics(*lung_case())
    assert nl == pytest.approx(4.0e-4, rel=1e-12)
    assert mct == pytest.approx(-500.0, rel=1e-12)
    assert perc == pytest.approx(0.4, rel=1e-12)


def test_lung_metrics_all_normal_and_none():
    assert lung_metrics(*lung_case(1000, 0))[2] == 1.0
    nl, _, perc = lung_metrics(*lung_case(0, 1000))
    assert nl == 0 and perc == 0


def test_lung_metrics_band_edges_and_outside_voxels():
    values = np.array([[[-900, -700, -901, -699, -800, 500]]], dtype=np.int16)
    lung = binary([[[1, 1, 1, 1, 0, 0]]])
    nl, mct, perc = lung_metrics(VoxelGrid(values, (1, 1, 1)), lung)
    assert nl == pytest.approx(2e-6)
    assert mct == pytest.approx((-900 - 700 - 901 - 699) / 4)
    assert perc == 0.5


def test_lung_metrics_empty():
    grid, _ = lung_case()
    with pytest.raises(EmptyInputError):
        lung_metrics(grid, binary(np.zeros(grid.values.shape)))


def test_muscle_fat_worked_example():
    labels = np.zeros(1000, np.uint8)
    labels[:300] = MUSCLE
    labels[300:400] = FAT
    m, f, r = muscle_fat_metrics(LabelMask(labels.reshape(10, 10, 10), "muscle_fat"), (1, 1, 1))
    assert (m, f, r) == pytest.approx((3.0e-4, 1.0e-4, 3.0), rel=1e-12)


def test_muscle_fat_equal_and_zero_fat():
    labels = np.array([[[1, 2, 1, 2]]], np.uint8)
    assert muscle_fat_metrics(LabelMask(labels, "muscle_fat"), (1, 1, 1))[2] == 1.0
    with pytest.raises(UndefinedMetricError):
        muscle_fat_metrics(LabelMask(np.array([[[1, 0]]], np.uint8), "muscle_fat"), (1, 1, 1))


def test_muscle_fat_needs_muscle_fat_semantics():
    with pytest.raises(ValidationError):
        muscle_fat_metrics(binary([[[1]]]), (1, 1, 1))


def test_lesion_worked_example():
    grid_values = np.full(1000, -800, np.int16)
    grid_values[:50] = -100
    grid = VoxelGrid(grid_values.reshape(10, 10, 10), (1, 1, 1))
    lesion = np.zeros(1000, np.uint8)
    lesion[:50] = 1
    out = lesion_metrics(grid, binary(lesion.reshape(10, 10, 10)), binary(np.ones((10, 10, 10))))
    assert out == pytest.approx((5.0e-5, 0.05, -100.0), rel=1e-12)


def test_lesion_empty_and_full():
    grid, lung = lung_case()
    vol, frac, mhu = lesion_metrics(grid, binary(np.zeros(grid.values.shape)), lung)
    assert (vol, frac, mhu) == (0.0, 0.0, None)
    assert lesion_metrics(grid, lung, lung)[1] == 1.0


def test_lesion_outside_lung_warns():
    grid, _ = lung_case()
    lung = np.ones(grid.values.shape, np.uint8)
    lung[0, 0, :3] = 0
    with pytest.warns(LesionOutsideLungWarning, match="3 lesion voxels"):
        lesion_metrics(grid, binary(np.ones(grid.values.shape)), binary(lung))


def test_dice_examples():
    a = binary([[[1, 1, 0, 0]]])
    assert dice(a, a) == 1.0
    assert dice(a, binary([[[0, 0, 1, 1]]])) == 0.0
    assert dice(a, binary([[[0, 1, 1, 0]]])) == 0.5
    with pytest.raises(UndefinedMetricError):
        dice(binary([[[0]]]), binary([[[0]]]))


def test_rve_examples():
    b = binary([[[1, 1, 0, 0]]])
    assert rve(binary([[[0, 0, 1, 1]]]), b) == 0.0
    assert rve(binary([[[1, 1, 1, 0]]]), b) == 0.5
    assert rve(binary([[[0, 0, 0, 0]]]), binary([[[1, 1, 1, 1]]])) == 1.0
    with pytest.raises(UndefinedMetricError):
        rve(b, binary([[[0, 0, 0, 0]]]))


pair = st.integers(1, 40).flatmap(lambda n: st.tuples(
    arrays(np.bool_, (1, 1, n)), arrays(np.bool_, (1, 1, n))))


@given(pair)
def test_dice_symmetric(ab):
    a, b = ab
    if not (a.any() or b.any()):
        return
    assert dice(a, b) == dice(b, a)
    assert 0.0 <= dice(a, b) <= 1.0
    if a.any():
        assert dice(a, a) == 1.0


def rec(scans, pos=None):
    return PatientRecord("p", 50, "male", pos, tuple(scans))


def test_select_scan_examples():
    assert select_scan(rec([("a", D(2020, 1, 1)), ("b", D(2020, 1, 10))], D(2020, 1, 8))) == "b"
    assert select_scan(rec([("a", D(2020, 1, 6)), ("b", D(2020, 1, 10))], D(2020, 1, 8))) == "a"
    assert select_scan(rec([("a", D(2020, 3, 3)), ("b", D(2020, 5, 5))])) == "b"


def test_select_scan_no_scans():
    with pytest.raises(EmptyInputError):
        select_scan(rec([]))


@given(st.lists(st.dates(D(2020, 1, 1), D(2020, 12, 31)), min_size=1, max_size=6, unique=True),
       st.one_of(st.none(), st.dates(D(2020, 1, 1), D(2020, 12, 31))), st.randoms(use_true_random=False))
def test_select_scan_order_invariant(dates, pos, rnd):
    scans = [(f"s{i}", d) for i, d in enumerate(dates)]
    shuffled = scans[:]
    rnd.shuffle(shuffled)
    assert select_scan(rec(scans, pos)) == select_scan(rec(shuffled, pos))


def _img(**kw):
    base = dict(nl_litres=1.0, mct_hu=-700.0, nl_perc=0.5, muscle_litres=2.0, fat_litres=1.0,
                mf_ratio=2.0, gg_volume_litres=0.1, gg_frac=0.05, gg_mhu=-400.0)
    base.update(kw)
    return ImageFeatures(**base)


def test_assemble_order_and_encoding():
    v = assemble_features(_img(), 66, "male")
    assert len(v) == 11
    assert v[6] == 66 and v[7] == 1
    assert list(v) == [1.0, -700.0, 0.5, 2.0, 1.0, 2.0, 66, 1.0, 0.05, 0.1, -400.0]
    assert assemble_features(_img(), 40, "female")[7] == 0
    assert assemble_features(_img(gg_volume_litres=0.0, gg_frac=0.0, gg_mhu=None), 40, "female")[10] == 0.0
    assert FEATURE_NAMES[6:8] == ("Age", "Sex")


def test_extract_imputes_ratio_without_fat():
    rng = np.random.default_rng(0)
    scan = make_scan(rng)
    labels = np.array(scan.muscle_fat.labels)
    labels[labels == FAT] = 0
    img = extract_image_features(scan.grid, scan.lung, LabelMask(labels, "muscle_fat"), scan.lesion)
    assert img.mf_ratio_imputed and img.fat_litres == 0.0
    n_muscle_in_slices = img.muscle_litres / (np.prod(scan.grid.spacing_mm) / 1e6)
    assert img.mf_ratio == pytest.approx(min(n_muscle_in_slices, MF_RATIO_CAP))


def test_extract_matches_phantom_truth():
    rng = np.random.default_rng(5)
    for i in range(5):
        scan = make_scan(rng, lesion=i != 0)
        img = extract_image_features(scan.grid, scan.lung, scan.muscle_fat, scan.lesion)
        for name in ("nl_litres", "mct_hu", "nl_perc", "muscle_litres", "fat_litres",
                     "mf_ratio", "gg_volume_litres", "gg_frac"):
            assert getattr(img, name) == pytest.approx(getattr(scan.truth, name), rel=1e-9)
        assert (img.gg_mhu is None) == (scan.truth.gg_mhu is None)


@given(st.floats(0.25, 4.0))
def test_spacing_scaling(s):
    scan = make_scan(np.random.default_rng(6), dims=(24, 24, 8))
    base = extract_image_features(scan.grid, scan.lung, scan.muscle_fat, scan.lesion)
    grid = VoxelGrid(scan.grid.values, tuple(s * v for v in scan.grid.spacing_mm))
    scaled = extract_image_features(grid, scan.lung, scan.muscle_fat, scan.lesion)
    for name in ("nl_litres", "muscle_litres", "fat_litres", "gg_volume_litres"):
        assert getattr(scaled, name) == pytest.approx(s ** 3 * getattr(base, name), rel=1e-9)
    for name in ("nl_perc", "gg_frac", "mf_ratio", "mct_hu", "gg_mhu"):
        assert getattr(scaled, name) == pytest.approx(getattr(base, name), rel=1e-12)


def test_nl_perc_consistent_with_voxel_count():
    scan = make_scan(np.random.default_rng(8))
    img = extract_image_features(scan.grid, scan.lung, scan.muscle_fat, scan.lesion)
    whole = scan.lung.count(1) * np.prod(scan.grid.spacing_mm) / 1e6
    assert img.nl_perc * whole == pytest.approx(img.nl_litres, rel=1e-12)


def test_feature_table_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    X = rng.normal(size=(5, 11)) * 10.0 ** rng.integers(-8, 8, size=(5, 11))
    t = FeatureTable([f"p{i}" for i in range(5)], X, rng.random(5) < 0.5, rng.random(5) < 0.5)
    write_feature_table(tmp_path / "f.csv", t)
    back = read_feature_table(tmp_path / "f.csv")
    assert back.patient_ids == t.patient_ids
    assert np.array_equal(back.X, X)
    assert np.array_equal(back.outcome_icu, t.outcome_icu)
    assert np.array_equal(back.outcome("death"), t.outcome_death)


def test_feature_table_rejects_bad_header(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValidationError):
        read_feature_table(p)
