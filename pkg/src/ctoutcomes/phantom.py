"""Synthetic cohorts with known ground truth.

Two generators live here. ``generate_cohort`` builds CT phantoms (body, fat
and muscle rings, two lungs, an optional lesion) with matching masks, an EHR
table and the exact values of the nine image features. ``synthetic_feature_table``
skips the images and draws an 11-column feature table directly, which is what
the classifier sanity checks need.

Outcome model
-------------
Both generators label patients through the same latent logistic model. With
``z`` the cohort-standardized features and ``beta`` a fixed coefficient
vector, each patient gets a latent score ``s = beta @ z + e`` where ``e`` is a
standard logistic draw. The ``round(prevalence * n)`` patients with the
largest ``s`` are positive. This is logistic regression with its intercept
set to the empirical quantile, so the base rate equals the configured
prevalence up to rounding.
"""

import csv
import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .errors import ValidationError
from .features import (FEATURE_NAMES, GG_MHU_ABSENT, NORMAL_LUNG_BAND, FeatureTable,
                       ImageFeatures, select_scan)
from .volume_io import (FAT, MUSCLE, LabelMask, PatientRecord, VoxelGrid,
                        atomic_write_text, voxel_volume_litres, write_ehr_table,
                        write_mask, write_volume)

MIN_DIMS = (24, 24, 8)
DEFAULT_DIMS = (48, 40, 20)
DEFAULT_SPACING = (8.0, 8.0, 16.0)

AIR_HU = -1000
TISSUE_HU = (20, 60)
FAT_HU = (-120, -80)
MUSCLE_HU = (30, 70)
HYPERLUCENT_HU = (-1000, -901)
DENSE_HU = (-699, -450)
LESION_HU = (-650, -250)

# coefficients of the latent outcome model, keyed by feature name
OUTCOME_MODELS = {
    "icu": {"GG_frac": 3.2, "NLperc": -2.0, "Age": 1.6, "MFratio": -1.2},
    "death": {"Age": 3.2, "GG_frac": 2.0, "MCT": 1.0, "Sex": 0.8},
}
DEFAULT_PREVALENCE = {"icu": 0.25, "death": 0.3}

GROUND_TRUTH_HEADER = ("patient_id", "scan_id", "selected") + tuple(
    n for n in FEATURE_NAMES if n not in ("Age", "Sex"))


@dataclass
class PhantomScan:
    grid: VoxelGrid
    lung: LabelMask
    muscle_fat: LabelMask
    lesion: LabelMask
    truth: ImageFeatures


def _ellipse(shape_yx, cx, cy, ax, ay) -> np.ndarray:
    ny, nx = shape_yx
    y, x = np.mgrid[0:ny, 0:nx]
    return ((x - cx) / ax) ** 2 + ((y - cy) / ay) ** 2 <= 1.0


def _ellipsoid(shape, c, r) -> np.ndarray:
    nz, ny, nx = shape
    z, y, x = np.ogrid[0:nz, 0:ny, 0:nx]
    return (((x - c[0]) / r[0]) ** 2 + ((y - c[1]) / r[1]) ** 2
            + ((z - c[2]) / r[2]) ** 2) <= 1.0


def _uniform_hu(rng, band, size) -> np.ndarray:
    return rng.integers(band[0], band[1] + 1, size=size)


def check_dims(dims) -> tuple:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < m for d, m in zip(dims, MIN_DIMS)):
        raise ValidationError(f"phantom dims {dims} too small; need at least {MIN_DIMS} (nx, ny, nz)")
    return dims


def make_scan(rng: np.random.Generator, dims=DEFAULT_DIMS, spacing=DEFAULT_SPACING,
              lesion: bool = True) -> PhantomScan:
    """Draw one phantom scan and compute its nine features by direct counting.

    Muscle and fat rings cover every slice while the lungs cover only a
    middle band, so the lung-slice restriction changes the muscle and fat
    volumes. The left lung is always the larger one.
    """
    nx, ny, nz = check_dims(dims)
    shape = (nz, ny, nx)
    cx, cy = (nx - 1) / 2.0, (ny - 1) / 2.0

    body_scale = rng.uniform(0.88, 1.0)
    ax, ay = 0.46 * nx * body_scale, 0.44 * ny * body_scale
    t_fat = rng.uniform(1.0, 2.5)
    t_muscle = rng.uniform(1.0, 2.5)
    outer = _ellipse(shape[1:], cx, cy, ax, ay)
    inner_fat = _ellipse(shape[1:], cx, cy, ax - t_fat, ay - t_fat)
    inner_muscle = _ellipse(shape[1:], cx, cy, ax - t_fat - t_muscle, ay - t_fat - t_muscle)
    fat2d = outer & ~inner_fat
    muscle2d = inner_fat & ~inner_muscle

    hu = np.full(shape, AIR_HU, dtype=np.int64)
    body = np.broadcast_to(outer, shape)
    hu[body] = _uniform_hu(rng, TISSUE_HU, int(body.sum()))
    fat3 = np.broadcast_to(fat2d, shape)
    muscle3 = np.broadcast_to(muscle2d, shape)
    hu[fat3] = _uniform_hu(rng, FAT_HU, int(fat3.sum()))
    hu[muscle3] = _uniform_hu(rng, MUSCLE_HU, int(muscle3.sum()))
    mf = np.zeros(shape, dtype=np.uint8)
    mf[muscle3] = MUSCLE
    mf[fat3] = FAT

    # lungs sit strictly inside the muscle ring with a one-voxel margin
    cavity = _ellipse(shape[1:], cx, cy, ax - t_fat - t_muscle - 1.5, ay - t_fat - t_muscle - 1.5)
    lung_scale = rng.uniform(0.8, 1.0)
    off = 0.2 * nx
    rx, ry = 0.14 * nx * lung_scale, 0.3 * ny * lung_scale
    z_lo, z_hi = 0.15 * nz, 0.85 * nz
    zc, rz = (z_lo + z_hi - 1) / 2.0, (z_hi - z_lo) / 2.0
    left = _ellipsoid(shape, (cx - off, cy, zc), (rx, ry, rz)) & cavity
    right = _ellipsoid(shape, (cx + off, cy, zc), (0.85 * rx, 0.85 * ry, 0.8 * rz)) & cavity
    lung = left | right

    q_normal = rng.uniform(0.35, 0.9)
    n_lung = int(lung.sum())
    kind = rng.random(n_lung)
    lung_hu = np.where(kind < q_normal, _uniform_hu(rng, NORMAL_LUNG_BAND, n_lung),
                       np.where(kind < q_normal + 0.3 * (1 - q_normal),
                                _uniform_hu(rng, HYPERLUCENT_HU, n_lung),
                                _uniform_hu(rng, DENSE_HU, n_lung)))
    hu[lung] = lung_hu

    les = np.zeros(shape, dtype=bool)
    if lesion:
        zs, ys, xs = np.nonzero(left)
        k = rng.integers(len(zs))
        frac = rng.uniform(0.15, 0.7)
        les = _ellipsoid(shape, (xs[k], ys[k], zs[k]),
                         (frac * rx, frac * ry, max(frac * rz, 1.0))) & left
        hu[les] = _uniform_hu(rng, LESION_HU, int(les.sum()))

    grid = VoxelGrid(hu.astype(np.int16), tuple(float(s) for s in spacing))
    truth = _ground_truth(hu, lung, left, mf, les, voxel_volume_litres(spacing))
    return PhantomScan(grid, LabelMask(lung.astype(np.uint8), "binary"),
                       LabelMask(mf, "muscle_fat"), LabelMask(les.astype(np.uint8), "binary"),
                       truth)


def _ground_truth(hu, lung, left, mf, les, vox) -> ImageFeatures:
    lo, hi = NORMAL_LUNG_BAND
    lung_hu = hu[lung]
    n_lung = lung_hu.size
    n_normal = int(((lung_hu >= lo) & (lung_hu <= hi)).sum())
    # left lung is the largest component by construction
    slices = np.flatnonzero(left.any(axis=(1, 2)))
    band = mf[slices.min():slices.max() + 1]
    n_muscle = int((band == MUSCLE).sum())
    n_fat = int((band == FAT).sum())
    n_les = int(les.sum())
    return ImageFeatures(
        nl_litres=n_normal * vox,
        mct_hu=float(lung_hu.sum()) / n_lung,
        nl_perc=n_normal / n_lung,
        muscle_litres=n_muscle * vox,
        fat_litres=n_fat * vox,
        mf_ratio=n_muscle / n_fat,
        gg_volume_litres=n_les * vox,
        gg_frac=n_les / n_lung,
        gg_mhu=float(hu[les].sum()) / n_les if n_les else None,
    )


def latent_outcomes(X: np.ndarray, beta: np.ndarray, prevalence: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Top ``round(prevalence*n)`` patients by ``beta @ z + logistic noise``."""
    n = X.shape[0]
    if not 0.0 < prevalence < 1.0:
        raise ValidationError(f"prevalence must be in (0, 1), got {prevalence}")
    sd = X.std(axis=0)
    z = (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    u = np.clip(rng.random(n), 1e-12, 1.0 - 1e-12)
    s = z @ beta + np.log(u / (1.0 - u))
    k = min(max(int(round(prevalence * n)), 1), n - 1)
    y = np.zeros(n, dtype=bool)
    y[np.argsort(-s, kind="stable")[:k]] = True
    return y


def _beta(model: dict) -> np.ndarray:
    beta = np.zeros(len(FEATURE_NAMES))
    for name, b in model.items():
        beta[FEATURE_NAMES.index(name)] = b
    return beta


def _truth_row(t: ImageFeatures, age, sex) -> list:
    return [t.nl_litres, t.mct_hu, t.nl_perc, t.muscle_litres, t.fat_litres, t.mf_ratio,
            float(age), 1.0 if sex == "male" else 0.0, t.gg_frac, t.gg_volume_litres,
            GG_MHU_ABSENT if t.gg_mhu is None else t.gg_mhu]


def generate_cohort(out_dir, n_patients: int = 10, seed: int = 0, dims=DEFAULT_DIMS,
                    spacing=DEFAULT_SPACING, prevalence=None, extra_scan_prob: float = 0.3,
                    lesion_prob: float = 0.85) -> list:
    """Write a phantom cohort to ``out_dir`` and return its PatientRecords.

    Layout::

        ehr.csv                       one row per scan
        ground_truth.csv              nine features per scan, ``selected`` flags
                                      the scan the scan-selection rule picks
        volumes/<scan_id>.json/.raw   CT volume
        masks/<scan_id>_lung.json     binary lung mask
        masks/<scan_id>_muscle_fat.json
        masks/<scan_id>_lesion.json

    Some patients get a second, decoy scan further from the positive date.
    """
    dims = check_dims(dims)
    if n_patients < 1:
        raise ValidationError("n_patients must be at least 1")
    prevalence = {**DEFAULT_PREVALENCE, **(prevalence or {})}
    out = Path(out_dir)
    base_date = dt.date(2020, 3, 1)
    people = []
    for i in range(n_patients):
        pid = f"P{i:04d}"
        rng = rngmod.stream(seed, f"phantom/{pid}")
        age = int(rng.integers(20, 91))
        sex = "male" if rng.random() < 0.5 else "female"
        pos = base_date + dt.timedelta(days=int(rng.integers(0, 300)))
        has_pos = rng.random() < 0.8
        main_date = pos + dt.timedelta(days=int(rng.integers(-2, 3)))
        scans = [(f"{pid}_S0", main_date)]
        if rng.random() < extra_scan_prob:
            # farther from the positive date (and later) than the main scan
            scans.append((f"{pid}_S1", main_date + dt.timedelta(days=int(rng.integers(6, 30)))))
        has_lesion = rng.random() < lesion_prob
        drawn = {}
        for scan_id, _ in scans:
            scan = make_scan(rng, dims, spacing, lesion=has_lesion)
            write_volume(out / "volumes" / f"{scan_id}.json", scan.grid)
            write_mask(out / "masks" / f"{scan_id}_lung.json", scan.lung, spacing)
            write_mask(out / "masks" / f"{scan_id}_muscle_fat.json", scan.muscle_fat, spacing)
            write_mask(out / "masks" / f"{scan_id}_lesion.json", scan.lesion, spacing)
            drawn[scan_id] = scan.truth
        people.append((pid, age, sex, pos if has_pos else None, tuple(scans), drawn))

    probe = [PatientRecord(pid, age, sex, pos, scans) for pid, age, sex, pos, scans, _ in people]
    chosen = [select_scan(r) for r in probe]
    X = np.array([_truth_row(p[5][c], p[1], p[2]) for p, c in zip(people, chosen)])
    labels = {}
    for name in ("icu", "death"):
        labels[name] = latent_outcomes(X, _beta(OUTCOME_MODELS[name]), prevalence[name],
                                       rngmod.stream(seed, f"phantom/outcome/{name}"))
    records = [PatientRecord(r.patient_id, r.age, r.sex, r.covid_positive_date, r.scans,
                             bool(labels["icu"][i]), bool(labels["death"][i]))
               for i, r in enumerate(probe)]
    write_ehr_table(out / "ehr.csv", records)

    lines = [",".join(GROUND_TRUTH_HEADER)]
    for p, c in zip(people, chosen):
        for scan_id, _ in p[4]:
            t = p[5][scan_id]
            vals = [t.nl_litres, t.mct_hu, t.nl_perc, t.muscle_litres, t.fat_litres,
                    t.mf_ratio, t.gg_frac, t.gg_volume_litres]
            mhu = "" if t.gg_mhu is None else repr(float(t.gg_mhu))
            lines.append(",".join([p[0], scan_id, str(int(scan_id == c)),
                                   *(repr(float(v)) for v in vals), mhu]))
    atomic_write_text(out / "ground_truth.csv", "\n".join(lines) + "\n")
    return records


def read_ground_truth(path, selected_only: bool = True) -> dict:
    """``{patient_id: {feature: value}}``; absent GG_MHU maps to None."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if selected_only and row["selected"] != "1":
                continue
            vals = {k: (float(v) if v != "" else None)
                    for k, v in row.items() if k not in ("patient_id", "scan_id", "selected")}
            key = row["patient_id"] if selected_only else row["scan_id"]
            out[key] = vals
    return out


PLANTED_MODEL = {"GG_frac": 3.0, "NLperc": -2.4, "Age": 2.4, "MFratio": -1.6, "Sex": 1.2}


def synthetic_feature_table(n: int = 244, seed: int = 0, prevalence: float = 0.5,
                            model=None, permute: bool = False) -> FeatureTable:
    """Draw an 11-feature cohort with a planted latent logistic outcome.

    Both outcome columns share the planted model, with independent noise.
    ``permute`` shuffles each label column, destroying the relationship while
    keeping the base rate.
    """
    rng = rngmod.stream(seed, "synthetic/features")
    total = rng.normal(4.5, 0.9, n).clip(1.5, None)
    nl_perc = rng.beta(6, 3, n)
    muscle = rng.normal(1.3, 0.3, n).clip(0.3, None)
    fat = rng.normal(1.6, 0.5, n).clip(0.3, None)
    age = rng.integers(20, 91, n).astype(float)
    sex = (rng.random(n) < 0.5).astype(float)
    gg_frac = rng.beta(1.2, 6, n) * (rng.random(n) < 0.9)
    gg_mhu = np.where(gg_frac > 0, rng.normal(-480, 70, n), GG_MHU_ABSENT)
    mct = -820 + 180 * (1 - nl_perc) + 150 * gg_frac + rng.normal(0, 20, n)
    X = np.column_stack([total * nl_perc, mct, nl_perc, muscle, fat, muscle / fat, age, sex,
                         gg_frac, gg_frac * total, gg_mhu])
    beta = _beta(model or PLANTED_MODEL)
    ys = []
    for name in ("icu", "death"):
        y = latent_outcomes(X, beta, prevalence, rngmod.stream(seed, f"synthetic/{name}"))
        if permute:
            y = rngmod.stream(seed, f"synthetic/permute/{name}").permutation(y)
        ys.append(y)
    width = max(3, int(math.ceil(math.log10(n + 1))))
    return FeatureTable([f"S{i:0{width}d}" for i in range(n)], X, ys[0], ys[1])
