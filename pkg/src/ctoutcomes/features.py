"""Image features, segmentation quality scores and the 11-feature vector."""

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyInputError, UndefinedMetricError, ValidationError
from .segment import restrict_to_lung_slices
from .volume_io import (FAT, MUSCLE, LabelMask, PatientRecord, VoxelGrid,
                        atomic_write_text, check_same_dims, voxel_volume_litres)

NORMAL_LUNG_BAND = (-900, -700)
FEATURE_NAMES = ("NL", "MCT", "NLperc", "Muscle", "Fat", "MFratio",
                 "Age", "Sex", "GG_frac", "GG_volume", "GG_MHU")
N_FEATURES = len(FEATURE_NAMES)
GG_MHU_ABSENT = 0.0
MF_RATIO_CAP = 1e3
FEATURE_TABLE_HEADER = ("patient_id",) + FEATURE_NAMES + ("outcome_icu", "outcome_death")


class LesionOutsideLungWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ImageFeatures:
    nl_litres: float
    mct_hu: float
    nl_perc: float
    muscle_litres: float
    fat_litres: float
    mf_ratio: float
    gg_volume_litres: float
    gg_frac: float
    gg_mhu: Optional[float]
    mf_ratio_imputed: bool = False


def _fg(mask) -> np.ndarray:
    if isinstance(mask, LabelMask):
        return mask.labels > 0
    return np.asarray(mask, dtype=bool)


def lung_metrics(grid: VoxelGrid, lung_mask: LabelMask, band=NORMAL_LUNG_BAND):
    """Return ``(NL, MCT, NLperc)``: normal-lung litres, mean lung HU, normal fraction."""
    check_same_dims(grid, lung_mask)
    lung = _fg(lung_mask)
    n_lung = int(lung.sum())
    if n_lung == 0:
        raise EmptyInputError("lung mask is empty")
    hu = grid.values[lung].astype(np.int64)
    lo, hi = band
    n_normal = int(np.count_nonzero((hu >= lo) & (hu <= hi)))
    vox = voxel_volume_litres(grid)
    return n_normal * vox, float(hu.sum()) / n_lung, (n_normal * vox) / (n_lung * vox)


def muscle_fat_metrics(mask: LabelMask, spacing):
    """Return ``(Muscle, Fat, MFratio)`` in litres; raises if there is no fat."""
    if mask.semantics != "muscle_fat":
        raise ValidationError(f"expected a muscle_fat mask, got {mask.semantics}")
    vox = voxel_volume_litres(spacing)
    muscle = mask.count(MUSCLE) * vox
    fat = mask.count(FAT) * vox
    if fat == 0:
        raise UndefinedMetricError("muscle/fat ratio undefined: no fat voxels")
    return muscle, fat, muscle / fat


def lesion_metrics(grid: VoxelGrid, lesion_mask: LabelMask, lung_mask: LabelMask):
    """Return ``(GG_volume, GG_frac, GG_MHU)``; GG_MHU is None without lesion voxels."""
    check_same_dims(grid, lesion_mask, lung_mask)
    lesion, lung = _fg(lesion_mask), _fg(lung_mask)
    n_lung = int(lung.sum())
    if n_lung == 0:
        raise EmptyInputError("lung mask is empty")
    outside = int(np.count_nonzero(lesion & ~lung))
    if outside:
        warnings.warn(f"{outside} lesion voxels lie outside the lung mask",
                      LesionOutsideLungWarning, stacklevel=2)
    n_lesion = int(lesion.sum())
    volume = n_lesion * voxel_volume_litres(grid)
    if n_lesion == 0:
        return volume, 0.0, None
    mhu = float(grid.values[lesion].astype(np.int64).sum()) / n_lesion
    return volume, n_lesion / n_lung, mhu


def dice(a, b) -> float:
    a, b = _fg(a), _fg(b)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        raise UndefinedMetricError("Dice undefined for two empty masks")
    return 2.0 * int(np.count_nonzero(a & b)) / total


def rve(a, b) -> float:
    """Relative volume error of prediction ``a`` against reference ``b``."""
    a, b = _fg(a), _fg(b)
    nb = int(b.sum())
    if nb == 0:
        raise UndefinedMetricError("RVE undefined for an empty reference mask")
    return abs(int(a.sum()) - nb) / nb


def select_scan(record: PatientRecord) -> str:
    """Scan closest to the COVID-positive date (earlier wins ties), else the latest."""
    if not record.scans:
        raise EmptyInputError(f"patient {record.patient_id} has no scans")
    pos = record.covid_positive_date
    if pos is None:
        return max(record.scans, key=lambda s: (s[1], s[0]))[0]
    return min(record.scans, key=lambda s: (abs((s[1] - pos).days), s[1], s[0]))[0]


def extract_image_features(grid: VoxelGrid, lung_mask: LabelMask,
                           muscle_fat_mask: LabelMask, lesion_mask: LabelMask,
                           restrict_muscle_fat: bool = True, connectivity: int = 26,
                           nl_band=NORMAL_LUNG_BAND) -> ImageFeatures:
    """All nine image features for one scan.

    With ``restrict_muscle_fat`` the muscle/fat mask is first limited to the
    axial slices spanned by the largest lung component.
    """
    check_same_dims(grid, lung_mask, muscle_fat_mask, lesion_mask)
    nl, mct, nl_perc = lung_metrics(grid, lung_mask, nl_band)
    if restrict_muscle_fat:
        muscle_fat_mask = restrict_to_lung_slices(muscle_fat_mask, lung_mask, connectivity)
    imputed = False
    try:
        muscle, fat, mf = muscle_fat_metrics(muscle_fat_mask, grid.spacing_mm)
    except UndefinedMetricError:
        vox = voxel_volume_litres(grid)
        muscle, fat = muscle_fat_mask.count(MUSCLE) * vox, 0.0
        mf, imputed = min(muscle / vox, MF_RATIO_CAP), True
    gg_volume, gg_frac, gg_mhu = lesion_metrics(grid, lesion_mask, lung_mask)
    return ImageFeatures(nl, mct, nl_perc, muscle, fat, mf, gg_volume, gg_frac, gg_mhu, imputed)


def assemble_features(img: ImageFeatures, age, sex) -> np.ndarray:
    """Order: NL, MCT, NLperc, Muscle, Fat, MFratio, Age, Sex, GG_frac, GG_volume, GG_MHU."""
    if sex not in ("male", "female"):
        raise ValidationError(f"sex must be male or female, got {sex!r}")
    gg_mhu = GG_MHU_ABSENT if img.gg_mhu is None else img.gg_mhu
    return np.array([
        img.nl_litres, img.mct_hu, img.nl_perc, img.muscle_litres, img.fat_litres,
        img.mf_ratio, float(age), 1.0 if sex == "male" else 0.0,
        img.gg_frac, img.gg_volume_litres, gg_mhu,
    ], dtype=float)


@dataclass
class FeatureTable:
    patient_ids: list
    X: np.ndarray
    outcome_icu: np.ndarray
    outcome_death: np.ndarray

    def outcome(self, name: str) -> np.ndarray:
        if name not in ("icu", "death"):
            raise ValueError(f"unknown outcome {name!r}")
        return self.outcome_icu if name == "icu" else self.outcome_death

    def __len__(self):
        return len(self.patient_ids)


def write_feature_table(path, table: FeatureTable) -> None:
    lines = [",".join(FEATURE_TABLE_HEADER)]
    for pid, row, icu, death in zip(table.patient_ids, table.X,
                                    table.outcome_icu, table.outcome_death):
        lines.append(",".join([pid, *(repr(float(v)) for v in row),
                               str(int(icu)), str(int(death))]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_feature_table(path) -> FeatureTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != FEATURE_TABLE_HEADER:
            raise ValidationError(f"{path}: header must be {','.join(FEATURE_TABLE_HEADER)}")
        ids, rows, icu, death = [], [], [], []
        for row in reader:
            if not row:
                continue
            if len(row) != len(FEATURE_TABLE_HEADER):
                raise ValidationError(f"line {reader.line_num}: wrong field count")
            try:
                values = [float(v) for v in row[1:1 + N_FEATURES]]
            except ValueError as exc:
                raise ValidationError(f"line {reader.line_num}: {exc}") from None
            if not all(math.isfinite(v) for v in values):
                raise ValidationError(f"line {reader.line_num}: non-finite feature")
            ids.append(row[0])
            rows.append(values)
            icu.append(row[-2].strip() == "1")
            death.append(row[-1].strip() == "1")
    return FeatureTable(ids, np.array(rows, dtype=float).reshape(-1, N_FEATURES),
                        np.array(icu, dtype=bool), np.array(death, dtype=bool))
