import csv
import json
import re

import numpy as np
import pytest

from ctoutcomes import __version__
from ctoutcomes.cli import EXIT_FAILURE, EXIT_INVALID, EXIT_OK, format_mean_std, main
from ctoutcomes.features import FEATURE_NAMES, read_feature_table, write_feature_table
from ctoutcomes.phantom import generate_cohort, read_ground_truth, synthetic_feature_table
from ctoutcomes.volume_io import LabelMask, read_ehr_table, write_ehr_table, write_mask

SMALL = ["--dims", "24,24,8", "--spacing", "12,12,30"]
IMAGE_FEATURES = ("NL", "MCT", "NLperc", "Muscle", "Fat", "MFratio", "GG_frac", "GG_volume",
                  "GG_MHU")


@pytest.fixture(scope="module")
def cohort(tmp_path_factory):
    root = tmp_path_factory.mktemp("cohort")
    assert main(["phantom", "--output", str(root), "--n-patients", "5", "--seed", "2"]) == EXIT_OK
    return root


@pytest.fixture(scope="module")
def small_table(tmp_path_factory):
    path = tmp_path_factory.mktemp("table") / "features.csv"
    write_feature_table(path, synthetic_feature_table(n=24, seed=3))
    return path


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == EXIT_INVALID


@pytest.mark.parametrize("argv", [
    ["extract", "--input", "x", "--output", "y", "--nl-band", "-700:-900"],
    ["extract", "--input", "x", "--output", "y", "--nl-band", "low:high"],
    ["extract", "--input", "x", "--output", "y", "--connectivity", "8"],
    ["phantom", "--output", "x", "--dims", "24,24"],
    ["experiment", "--input", "x", "--output", "y", "--family", "knn"],
    ["experiment", "--input", "x", "--output", "y", "--repeats", "0"],
])
def test_bad_flags_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == EXIT_INVALID


# -- phantom ---------------------------------------------------------------------

def test_phantom_writes_cohort_and_manifest(cohort):
    assert (cohort / "ehr.csv").exists() and (cohort / "ground_truth.csv").exists()
    manifest = json.loads((cohort / "manifest.json").read_text())
    assert manifest["command"] == "phantom"
    assert manifest["config"]["seed"] == 2 and manifest["config"]["n_patients"] == 5
    assert manifest["version"] == __version__


def test_phantom_small_dims_exit_2(tmp_path):
    assert main(["phantom", "--output", str(tmp_path / "c"), "--dims", "10,10,4"]) == EXIT_INVALID


def test_phantom_rerun_is_byte_identical(tmp_path):
    for name in "ab":
        assert main(["phantom", "--output", str(tmp_path / name), "--n-patients", "3",
                     "--seed", "7", *SMALL]) == EXIT_OK
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*")
                   if p.is_file() and p.name != "manifest.json")
    assert files
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_phantom_features_only(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["phantom", "--features-only", "--output", str(out), "--n-patients", "30"]) == 0
    assert len(read_feature_table(out)) == 30


# -- extract ---------------------------------------------------------------------

def test_extract_matches_ground_truth(cohort, tmp_path):
    out = tmp_path / "features.csv"
    assert main(["extract", "--input", str(cohort), "--output", str(out)]) == EXIT_OK
    table = read_feature_table(out)
    truth = read_ground_truth(cohort / "ground_truth.csv")
    assert table.patient_ids == sorted(truth)
    for pid, row in zip(table.patient_ids, table.X):
        for name in IMAGE_FEATURES:
            expected = truth[pid][name]
            got = row[FEATURE_NAMES.index(name)]
            if expected is None:
                assert got == 0.0
            else:
                assert got == pytest.approx(expected, rel=1e-9, abs=1e-300)
    records = {r.patient_id: r for r in read_ehr_table(cohort / "ehr.csv")}
    for pid, row, icu in zip(table.patient_ids, table.X, table.outcome_icu):
        assert row[FEATURE_NAMES.index("Age")] == records[pid].age
        assert icu == records[pid].outcome_icu
    manifest = json.loads(out.with_name("features.csv.manifest.json").read_text())
    assert manifest["patients"] == 5 and manifest["config"]["nl_band"] == [-900, -700]


def test_extract_skips_patient_without_scans(tmp_path, caplog):
    root = tmp_path / "c"
    records = generate_cohort(root, n_patients=3, seed=1, dims=(24, 24, 8),
                              spacing=(12.0, 12.0, 30.0))
    bare = records[1].__class__(records[1].patient_id, records[1].age, records[1].sex,
                                records[1].covid_positive_date, ())
    write_ehr_table(root / "ehr.csv", [records[0], bare, records[2]])
    out = tmp_path / "f.csv"
    assert main(["extract", "--input", str(root), "--output", str(out)]) == EXIT_OK
    assert read_feature_table(out).patient_ids == [records[0].patient_id, records[2].patient_id]
    assert f"{bare.patient_id}: no scans, skipped" in caplog.text


# the threshold segmenter can clip a lesion voxel at the lung edge
@pytest.mark.filterwarnings("ignore::ctoutcomes.features.LesionOutsideLungWarning")
def test_extract_without_lung_masks_uses_segmenter(tmp_path):
    root = tmp_path / "c"
    generate_cohort(root, n_patients=2, seed=6, dims=(24, 24, 8), spacing=(12.0, 12.0, 30.0))
    for p in (root / "masks").glob("*_lung.json"):
        p.unlink()
    out = tmp_path / "f.csv"
    assert main(["extract", "--input", str(root), "--output", str(out)]) == EXIT_OK
    truth = read_ground_truth(root / "ground_truth.csv")
    table = read_feature_table(out)
    for pid, row in zip(table.patient_ids, table.X):
        assert row[0] == pytest.approx(truth[pid]["NL"], rel=0.1)


def test_extract_all_failing_exits_1(tmp_path):
    root = tmp_path / "c"
    generate_cohort(root, n_patients=2, seed=0, dims=(24, 24, 8), spacing=(12.0, 12.0, 30.0))
    for p in (root / "volumes").glob("*.raw"):
        p.unlink()
    out = tmp_path / "f.csv"
    assert main(["extract", "--input", str(root), "--output", str(out)]) == EXIT_FAILURE
    assert not out.exists()


def test_extract_empty_directory_exits_2(tmp_path):
    out = tmp_path / "f.csv"
    assert main(["extract", "--input", str(tmp_path), "--output", str(out)]) == EXIT_INVALID
    assert not out.exists()


# -- experiment -------------------------------------------------------------------

def test_experiment_writes_artifacts(small_table, tmp_path, capsys):
    out = tmp_path / "run"
    argv = ["experiment", "--input", str(small_table), "--output", str(out), "--repeats", "2",
            "--family", "logistic_l1", "--family", "random_forest"]
    assert main(argv) == EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    assert names == sorted(["manifest.json"] + [
        f"{kind}_{o}_{f}.{ext}" for o in ("icu", "death") for f in ("logistic_l1", "random_forest")
        for kind, ext in (("summary", "json"), ("roc", "csv"))] + [
        f"importance_{o}_random_forest.csv" for o in ("icu", "death")])
    summary = json.loads((out / "summary_icu_random_forest.json").read_text())
    assert set(summary) >= {"outcome", "family", "auc_mean", "ci", "auc_runs", "importance",
                            "correlations"}
    assert summary["seeds"] == [0, 1]
    assert summary["ci"][0] <= summary["auc_mean"] <= summary["ci"][1]
    with open(out / "roc_icu_logistic_l1.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["fpr", "tpr"] and rows[1] == ["0.0", "0.0"] and rows[-1] == ["1.0", "1.0"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["families"] == ["logistic_l1", "random_forest"]
    assert manifest["grids"]["random_forest"] == {"n_trees": [100]}
    printed = capsys.readouterr().out
    assert re.search(r"icu\s+logistic_l1\s+AUC \d\.\d{3} 95% CI \[", printed)


def test_experiment_single_repeat_notes_degenerate_ci(small_table, tmp_path):
    out = tmp_path / "run"
    assert main(["experiment", "--input", str(small_table), "--output", str(out),
                 "--repeats", "1", "--outcome", "death", "--family", "logistic_l1"]) == 0
    summary = json.loads((out / "summary_death_logistic_l1.json").read_text())
    assert summary["ci"] == [summary["auc_mean"]] * 2
    assert any("single repeat" in n for n in summary["notes"])


def test_experiment_rerun_is_byte_identical(small_table, tmp_path):
    for name in "ab":
        assert main(["experiment", "--input", str(small_table), "--output", str(tmp_path / name),
                     "--repeats", "2", "--seed", "5", "--outcome", "icu",
                     "--family", "svm_rbf", "--family", "adaboost"]) == EXIT_OK
    for f in ("summary_icu_svm_rbf.json", "summary_icu_adaboost.json", "roc_icu_adaboost.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_experiment_single_class_outcome_exits_2(tmp_path, capsys):
    t = synthetic_feature_table(n=10, seed=0)
    t.outcome_death[:] = False
    path = tmp_path / "t.csv"
    write_feature_table(path, t)
    assert main(["experiment", "--input", str(path), "--output", str(tmp_path / "o"),
                 "--outcome", "death"]) == EXIT_INVALID
    assert "single class" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_experiment_missing_table_exits_2(tmp_path):
    assert main(["experiment", "--input", str(tmp_path / "nope.csv"),
                 "--output", str(tmp_path / "o")]) == EXIT_INVALID


@pytest.mark.slow
def test_experiment_full_cohort_emits_ten_summaries(tmp_path):
    table = tmp_path / "t.csv"
    assert main(["phantom", "--features-only", "--output", str(table),
                 "--n-patients", "244"]) == EXIT_OK
    out = tmp_path / "run"
    assert main(["experiment", "--input", str(table), "--output", str(out),
                 "--repeats", "1"]) == EXIT_OK
    assert len(list(out.glob("summary_*.json"))) == 10
    assert len(list(out.glob("roc_*.csv"))) == 10
    assert len(list(out.glob("importance_*.csv"))) == 2


@pytest.mark.slow
def test_phantom_extract_experiment_recovers_signal(tmp_path):
    cohort, table, out = tmp_path / "c", tmp_path / "f.csv", tmp_path / "run"
    assert main(["phantom", "--output", str(cohort), "--n-patients", "120", "--seed", "3",
                 *SMALL]) == EXIT_OK
    assert main(["extract", "--input", str(cohort), "--output", str(table)]) == EXIT_OK
    assert main(["experiment", "--input", str(table), "--output", str(out), "--repeats", "2",
                 "--family", "logistic_l1", "--family", "svm_rbf"]) == EXIT_OK
    aucs = [json.loads(p.read_text())["auc_mean"] for p in out.glob("summary_*.json")]
    assert max(aucs) > 0.8


# -- segquality -------------------------------------------------------------------

def write_binary(path, arr):
    write_mask(path, LabelMask(np.asarray(arr, np.uint8).reshape(1, 1, -1), "binary"),
               (1.0, 1.0, 1.0))


def test_segquality_identical_directories(cohort, capsys):
    masks = str(cohort / "masks")
    assert main(["segquality", "--input", masks, "--reference", masks]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[-2] == "Dice 1.000 ± 0.000"
    assert lines[-1] == "RVE 0.000 ± 0.000"


def test_segquality_known_pair_and_csv(tmp_path, capsys, caplog):
    (tmp_path / "p").mkdir()
    (tmp_path / "r").mkdir()
    write_binary(tmp_path / "p" / "a.json", [1, 1, 0])
    write_binary(tmp_path / "r" / "a.json", [0, 1, 1])
    write_binary(tmp_path / "p" / "orphan.json", [1, 0, 0])
    out = tmp_path / "q.csv"
    assert main(["segquality", "--input", str(tmp_path / "p"), "--reference",
                 str(tmp_path / "r"), "--output", str(out)]) == EXIT_OK
    assert "orphan.json: no partner" in caplog.text
    assert out.read_text().splitlines() == ["mask,dice,rve", "a.json,0.5,0.0"]
    assert "a.json: Dice 0.5000  RVE 0.0000" in capsys.readouterr().out


def test_segquality_no_pairs_exits_2(tmp_path):
    (tmp_path / "p").mkdir()
    (tmp_path / "r").mkdir()
    assert main(["segquality", "--input", str(tmp_path / "p"),
                 "--reference", str(tmp_path / "r")]) == EXIT_INVALID


def test_mean_std_format_mirrors_published_style():
    assert format_mean_std([0.95, 0.97, 0.99]) == "0.970 ± 0.020"
    assert re.fullmatch(r"\d\.\d{3} ± \d\.\d{3}", format_mean_std([0.5]))


def test_segquality_two_empty_masks_are_skipped(tmp_path, capsys, caplog):
    for d in "pr":
        (tmp_path / d).mkdir()
        write_binary(tmp_path / d / "empty.json", [0, 0, 0])
        write_binary(tmp_path / d / "full.json", [1, 1, 0])
    out = tmp_path / "q.csv"
    assert main(["segquality", "--input", str(tmp_path / "p"), "--reference",
                 str(tmp_path / "r"), "--output", str(out)]) == EXIT_OK
    assert "empty.json" in caplog.text
    assert out.read_text().splitlines()[1] == "empty.json,,"
    assert capsys.readouterr().out.splitlines()[-2] == "Dice 1.000 ± 0.000"
