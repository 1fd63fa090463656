"""On-disk formats: raw CT volumes with a JSON sidecar, label masks, EHR tables.

Volumes are stored as a JSON sidecar::

    {"dims": [nx, ny, nz], "spacing_mm": [sx, sy, sz], "raw": "scan.raw"}

next to a headerless little-endian int16 file holding ``nx*ny*nz`` samples,
x fastest and z slowest.  In memory the samples live in an array of shape
``(nz, ny, nx)`` so that ``values[k]`` is axial slice ``k``.

Masks use the same sidecar with ``"dtype": "uint8"``.
"""

import csv
import datetime as dt
import json
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import IntegrityError, ValidationError, VolumeFormatError

HU_MIN, HU_MAX = -1024, 3071

SEMANTICS = {
    "binary": frozenset({0, 1}),
    "muscle_fat": frozenset({0, 1, 2}),
}
MUSCLE, FAT = 1, 2

EHR_HEADER = [
    "patient_id", "age", "sex", "covid_positive_date", "scan_id",
    "scan_date", "outcome_icu", "outcome_death",
]


class HURangeWarning(UserWarning):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """HU samples of shape ``(nz, ny, nx)`` with spacing ``(sx, sy, sz)`` in mm."""

    values: np.ndarray
    spacing_mm: tuple

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 3:
            raise ValidationError(f"expected a 3D array, got shape {values.shape}")
        if not np.issubdtype(values.dtype, np.integer):
            raise ValidationError(f"HU samples must be integers, got {values.dtype}")
        if values.size and (values.min() < np.iinfo(np.int16).min
                            or values.max() > np.iinfo(np.int16).max):
            raise ValidationError("HU samples do not fit in int16")
        spacing = tuple(float(s) for s in self.spacing_mm)
        if len(spacing) != 3 or not all(np.isfinite(s) and s > 0 for s in spacing):
            raise ValidationError(f"spacing must be three positive reals, got {self.spacing_mm}")
        values = values.astype(np.int16, copy=False)
        n_out = int(np.count_nonzero((values < HU_MIN) | (values > HU_MAX)))
        if n_out:
            warnings.warn(f"{n_out} voxels outside [{HU_MIN}, {HU_MAX}] HU", HURangeWarning,
                          stacklevel=3)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "spacing_mm", spacing)

    @property
    def dims(self) -> tuple:
        nz, ny, nx = self.values.shape
        return (nx, ny, nz)

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return (self.spacing_mm == other.spacing_mm
                and self.values.shape == other.values.shape
                and np.array_equal(self.values, other.values))


@dataclass(frozen=True, eq=False)
class LabelMask:
    """Integer labels of shape ``(nz, ny, nx)`` drawn from ``SEMANTICS[semantics]``."""

    labels: np.ndarray
    semantics: str = "binary"

    def __post_init__(self):
        if self.semantics not in SEMANTICS:
            raise ValidationError(f"unknown mask semantics {self.semantics!r}")
        labels = np.asarray(self.labels)
        if labels.ndim != 3:
            raise ValidationError(f"expected a 3D array, got shape {labels.shape}")
        if labels.dtype == bool:
            labels = labels.astype(np.uint8)
        allowed = SEMANTICS[self.semantics]
        bad = ~np.isin(labels, list(allowed))
        if bad.any():
            z, y, x = (int(i) for i in np.argwhere(bad)[0])
            raise ValidationError(
                f"label {int(labels[z, y, x])} at voxel (x={x}, y={y}, z={z}) is not in "
                f"{self.semantics} set {sorted(allowed)} ({int(bad.sum())} offending voxels)")
        object.__setattr__(self, "labels", _frozen(labels.astype(np.uint8, copy=False)))

    @property
    def dims(self) -> tuple:
        nz, ny, nx = self.labels.shape
        return (nx, ny, nz)

    @property
    def foreground(self) -> np.ndarray:
        return self.labels > 0

    def count(self, label: int = 1) -> int:
        return int(np.count_nonzero(self.labels == label))

    @classmethod
    def from_bool(cls, mask) -> "LabelMask":
        return cls(np.asarray(mask, dtype=np.uint8), "binary")

    def __eq__(self, other):
        if not isinstance(other, LabelMask):
            return NotImplemented
        return (self.semantics == other.semantics
                and self.labels.shape == other.labels.shape
                and np.array_equal(self.labels, other.labels))


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    age: int
    sex: str
    covid_positive_date: Optional[dt.date]
    scans: tuple = field(default_factory=tuple)  # ((scan_id, date), ...)
    outcome_icu: bool = False
    outcome_death: bool = False

    def __post_init__(self):
        if not 0 <= self.age <= 130:
            raise ValidationError(f"{self.patient_id}: age {self.age} outside [0, 130]")
        if self.sex not in ("male", "female"):
            raise ValidationError(f"{self.patient_id}: sex must be male or female, got {self.sex!r}")
        ids = [s for s, _ in self.scans]
        if len(set(ids)) != len(ids):
            raise IntegrityError(f"{self.patient_id}: duplicate scan ids")


def check_same_dims(*items) -> None:
    dims = {item.dims for item in items}
    if len(dims) > 1:
        raise IntegrityError(f"dimension mismatch: {sorted(dims)}")


def voxel_volume_litres(grid) -> float:
    """Litres per voxel; accepts a VoxelGrid or a spacing triple in mm."""
    spacing = grid.spacing_mm if isinstance(grid, VoxelGrid) else tuple(grid)
    sx, sy, sz = (float(s) for s in spacing)
    return sx * sy * sz / 1e6


# -- atomic writes -----------------------------------------------------------

def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# -- volumes and masks ---------------------------------------------------------

def _read_sidecar(path: Path) -> dict:
    try:
        meta = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise
    except (OSError, ValueError) as exc:
        raise VolumeFormatError(f"{path}: unreadable sidecar ({exc})") from exc
    if not isinstance(meta, dict):
        raise VolumeFormatError(f"{path}: sidecar must be a JSON object")
    try:
        dims = [int(d) for d in meta["dims"]]
        raw = str(meta["raw"])
    except (KeyError, TypeError, ValueError) as exc:
        raise VolumeFormatError(f"{path}: sidecar needs 'dims' and 'raw' ({exc})") from exc
    if len(dims) != 3 or min(dims) <= 0:
        raise VolumeFormatError(f"{path}: dims must be three positive integers, got {dims}")
    meta["dims"] = dims
    meta["raw"] = raw
    return meta


def _read_raw(sidecar: Path, meta: dict, dtype: str) -> np.ndarray:
    nx, ny, nz = meta["dims"]
    raw_path = Path(sidecar).parent / meta["raw"]
    data = raw_path.read_bytes()
    itemsize = np.dtype(dtype).itemsize
    expected = nx * ny * nz * itemsize
    if len(data) != expected:
        raise IntegrityError(
            f"{raw_path}: {len(data)} bytes but dims {meta['dims']} need {expected}")
    return np.frombuffer(data, dtype=dtype).reshape(nz, ny, nx)


def _write_pair(path, array: np.ndarray, dtype: str, spacing=None, extra=None) -> Path:
    path = Path(path)
    raw_name = path.with_suffix(".raw").name
    nz, ny, nx = array.shape
    meta = {"dims": [nx, ny, nz]}
    if spacing is not None:
        meta["spacing_mm"] = [float(s) for s in spacing]
    meta["raw"] = raw_name
    if dtype != "<i2":
        meta["dtype"] = "uint8"
    if extra:
        meta.update(extra)
    atomic_write_bytes(path.parent / raw_name, np.ascontiguousarray(array, dtype=dtype).tobytes())
    atomic_write_text(path, json.dumps(meta, indent=2) + "\n")
    return path


def read_volume(path) -> VoxelGrid:
    """Load a CT volume from its JSON sidecar."""
    meta = _read_sidecar(path)
    try:
        spacing = [float(s) for s in meta["spacing_mm"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise VolumeFormatError(f"{path}: sidecar needs 'spacing_mm' ({exc})") from exc
    if len(spacing) != 3:
        raise VolumeFormatError(f"{path}: spacing_mm must have three entries")
    values = _read_raw(path, meta, "<i2")
    return VoxelGrid(values.astype(np.int16), tuple(spacing))


def write_volume(path, grid: VoxelGrid) -> Path:
    """Write ``grid`` as ``path`` (sidecar) plus a sibling ``.raw`` file."""
    return _write_pair(path, grid.values, "<i2", grid.spacing_mm)


def read_mask(path, semantics: str = "binary") -> LabelMask:
    meta = _read_sidecar(path)
    if meta.get("dtype", "uint8") != "uint8":
        raise VolumeFormatError(f"{path}: masks must be uint8, got {meta['dtype']}")
    return LabelMask(_read_raw(path, meta, "u1").copy(), semantics)


def write_mask(path, mask: LabelMask, spacing=None) -> Path:
    return _write_pair(path, mask.labels, "u1", spacing, {"semantics": mask.semantics})


# -- EHR table -----------------------------------------------------------------

def _parse_date(text: str, line: int, column: str) -> Optional[dt.date]:
    text = text.strip()
    if not text:
        return None
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise ValidationError(f"line {line}: cannot parse {column} {text!r} as YYYY-MM-DD") from None


def _parse_bool(text: str, line: int, column: str) -> bool:
    text = text.strip()
    if text not in ("0", "1"):
        raise ValidationError(f"line {line}: {column} must be 0 or 1, got {text!r}")
    return text == "1"


def read_ehr_table(path) -> list:
    """Read the one-row-per-scan EHR CSV and group rows into PatientRecords.

    Records come back sorted by patient id and scans sorted by date, so the
    result does not depend on row order.
    """
    patients: dict = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise VolumeFormatError(f"{path}: empty EHR table") from None
        if [h.strip() for h in header] != EHR_HEADER:
            raise VolumeFormatError(f"{path}: header must be {','.join(EHR_HEADER)}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(EHR_HEADER):
                raise ValidationError(f"line {line}: expected {len(EHR_HEADER)} fields, got {len(row)}")
            pid, age, sex, pos, scan_id, scan_date, icu, death = (c.strip() for c in row)
            try:
                age = int(age)
            except ValueError:
                raise ValidationError(f"line {line}: age {age!r} is not an integer") from None
            if not 0 <= age <= 130:
                raise ValidationError(f"line {line}: age {age} outside [0, 130]")
            if sex not in ("male", "female"):
                raise ValidationError(f"line {line}: sex must be male or female, got {sex!r}")
            fields = (age, sex, _parse_date(pos, line, "covid_positive_date"),
                      _parse_bool(icu, line, "outcome_icu"),
                      _parse_bool(death, line, "outcome_death"))
            date = _parse_date(scan_date, line, "scan_date")
            entry = patients.setdefault(pid, {"fields": fields, "scans": []})
            if entry["fields"] != fields:
                raise IntegrityError(
                    f"line {line}: patient {pid} has conflicting patient-level fields "
                    f"(age/sex/positive date/outcomes)")
            if scan_id:
                if date is None:
                    raise ValidationError(f"line {line}: scan {scan_id} has no scan_date")
                entry["scans"].append((scan_id, date))
    records = []
    for pid in sorted(patients):
        age, sex, pos, icu, death = patients[pid]["fields"]
        scans = tuple(sorted(patients[pid]["scans"], key=lambda s: (s[1], s[0])))
        records.append(PatientRecord(pid, age, sex, pos, scans, icu, death))
    return records


def write_ehr_table(path, records: Iterable[PatientRecord]) -> None:
    rows = [EHR_HEADER]
    for rec in records:
        pos = rec.covid_positive_date.isoformat() if rec.covid_positive_date else ""
        common = [str(rec.age), rec.sex, pos]
        outcome = [str(int(rec.outcome_icu)), str(int(rec.outcome_death))]
        scans = rec.scans or (("", None),)
        for scan_id, date in scans:
            rows.append([rec.patient_id, *common, scan_id,
                         date.isoformat() if date else "", *outcome])
    atomic_write_text(path, "".join(",".join(r) + "\n" for r in rows))


def records_by_id(records: Sequence[PatientRecord]) -> dict:
    return {r.patient_id: r for r in records}
