"""Command-line entry points: extract, experiment, phantom, segquality.

Exit codes are 0 on success, 1 on a runtime failure and 2 on invalid input.
"""

import argparse
import datetime as dt
import json
import logging
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .classifiers import DEFAULT_GRIDS, FAMILIES, Dataset, ModelSpec
from .errors import EmptyInputError, UndefinedMetricError, ValidationError
from .evaluation import repeated_experiment
from .features import (FEATURE_NAMES, NORMAL_LUNG_BAND, FeatureTable, assemble_features, dice,
                       extract_image_features, read_feature_table, rve, select_scan,
                       write_feature_table)
from .phantom import (DEFAULT_DIMS, DEFAULT_PREVALENCE, DEFAULT_SPACING, check_dims,
                      generate_cohort, synthetic_feature_table)
from .segment import baseline_lung_segment
from .volume_io import (LabelMask, atomic_write_text, read_ehr_table, read_mask,
                        read_volume)

log = logging.getLogger("ctoutcomes")

EXIT_OK, EXIT_FAILURE, EXIT_INVALID = 0, 1, 2
OUTCOMES = ("icu", "death")


class InvalidInput(Exception):
    """Raised for problems with the caller's inputs (exit code 2)."""


@dataclass
class RunConfig:
    command: str
    input: Optional[str] = None
    output: Optional[str] = None
    reference: Optional[str] = None
    outcome: str = "both"
    families: list = field(default_factory=lambda: list(FAMILIES))
    repeats: int = 10
    seed: int = 0
    connectivity: int = 26
    nl_band: tuple = NORMAL_LUNG_BAND
    n_patients: int = 10
    dims: tuple = DEFAULT_DIMS
    spacing: tuple = DEFAULT_SPACING
    features_only: bool = False

    @property
    def outcomes(self) -> tuple:
        return OUTCOMES if self.outcome == "both" else (self.outcome,)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


CONFIG_FIELDS = {
    "extract": ("input", "output", "connectivity", "nl_band"),
    "experiment": ("input", "output", "outcome", "families", "repeats", "seed"),
    "phantom": ("output", "n_patients", "dims", "spacing", "seed", "features_only"),
    "segquality": ("input", "reference", "output"),
}


def _manifest(config: RunConfig, **extra) -> str:
    fields = asdict(config)
    doc = {
        "tool": "ctoutcomes",
        "version": __version__,
        "created": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        "command": config.command,
        "config": {k: fields[k] for k in CONFIG_FIELDS[config.command]},
    }
    doc.update(extra)
    return _dump(doc)


# -- extract -----------------------------------------------------------------------

def _mask_path(root: Path, scan_id: str, kind: str) -> Path:
    return root / "masks" / f"{scan_id}_{kind}.json"


def _extract_patient(root: Path, rec, config: RunConfig) -> np.ndarray:
    scan_id = select_scan(rec)
    grid = read_volume(root / "volumes" / f"{scan_id}.json")
    lung_path = _mask_path(root, scan_id, "lung")
    if lung_path.exists():
        lung = read_mask(lung_path, "binary")
    else:
        log.info("%s: no lung mask for %s, using the threshold segmenter", rec.patient_id, scan_id)
        lung = baseline_lung_segment(grid, connectivity=config.connectivity)
    mf = read_mask(_mask_path(root, scan_id, "muscle_fat"), "muscle_fat")
    lesion_path = _mask_path(root, scan_id, "lesion")
    if lesion_path.exists():
        lesion = read_mask(lesion_path, "binary")
    else:
        lesion = LabelMask(np.zeros_like(lung.labels), "binary")
    img = extract_image_features(grid, lung, mf, lesion, connectivity=config.connectivity,
                                 nl_band=config.nl_band)
    if img.mf_ratio_imputed:
        log.warning("%s: no fat voxels in lung slices; MFratio imputed", rec.patient_id)
    return assemble_features(img, rec.age, rec.sex)


def cmd_extract(config: RunConfig) -> int:
    root = Path(config.input)
    ehr = root / "ehr.csv"
    if not root.is_dir() or not ehr.exists():
        raise InvalidInput(f"{root}: expected a directory containing ehr.csv")
    records = read_ehr_table(ehr)
    if not records:
        raise InvalidInput(f"{ehr}: no patients")
    ids, rows, icu, death, failed = [], [], [], [], []
    for rec in records:
        if not rec.scans:
            log.warning("%s: no scans, skipped", rec.patient_id)
            failed.append(rec.patient_id)
            continue
        try:
            rows.append(_extract_patient(root, rec, config))
        except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
            log.warning("%s: extraction failed (%s), skipped", rec.patient_id, exc)
            failed.append(rec.patient_id)
            continue
        ids.append(rec.patient_id)
        icu.append(rec.outcome_icu)
        death.append(rec.outcome_death)
    if not ids:
        log.error("every patient failed; no table written")
        return EXIT_FAILURE
    table = FeatureTable(ids, np.array(rows), np.array(icu), np.array(death))
    out = Path(config.output)
    write_feature_table(out, table)
    atomic_write_text(out.with_name(out.name + ".manifest.json"),
                      _manifest(config, inputs=[str(ehr)], patients=len(ids), skipped=failed))
    log.info("wrote %d patients to %s (%d skipped)", len(ids), out, len(failed))
    return EXIT_OK


# -- experiment --------------------------------------------------------------------

def _roc_csv(result) -> str:
    lines = ["fpr,tpr"] + [f"{f!r},{t!r}" for f, t in result.roc.points]
    return "\n".join(lines) + "\n"


def cmd_experiment(config: RunConfig) -> int:
    try:
        table = read_feature_table(config.input)
    except FileNotFoundError:
        raise InvalidInput(f"{config.input}: no such feature table") from None
    if len(table) < 3:
        raise InvalidInput(f"{config.input}: need at least 3 patients, found {len(table)}")
    for outcome in config.outcomes:
        y = table.outcome(outcome)
        if y.all() or not y.any():
            raise InvalidInput(f"outcome {outcome!r} has a single class "
                               f"({int(y.sum())} positive of {len(y)}); nothing to learn")
    out = Path(config.output)
    written = []
    for outcome in config.outcomes:
        data = Dataset(table.X, table.outcome(outcome).astype(int), table.patient_ids)
        for family in config.families:
            log.info("running %s / %s with %d repeats", outcome, family, config.repeats)
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                result = repeated_experiment(data, ModelSpec(family, seed=config.seed),
                                             repeats=config.repeats, base_seed=config.seed,
                                             outcome=outcome)
            for msg in sorted({str(w.message) for w in caught}):
                log.warning("%s/%s: %s", outcome, family, msg)
            stem = f"{outcome}_{family}"
            atomic_write_text(out / f"summary_{stem}.json", _dump(result.summary()))
            atomic_write_text(out / f"roc_{stem}.csv", _roc_csv(result))
            written += [f"summary_{stem}.json", f"roc_{stem}.csv"]
            if result.importance is not None:
                lines = ["feature,importance"] + [
                    f"{n},{v!r}" for n, v in zip(FEATURE_NAMES, result.importance.tolist())]
                atomic_write_text(out / f"importance_{stem}.csv", "\n".join(lines) + "\n")
                written.append(f"importance_{stem}.csv")
            ci = f"[{result.auc_ci_low:.3f}, {result.auc_ci_high:.3f}]"
            print(f"{outcome:6} {family:14} AUC {result.auc_mean:.3f} 95% CI {ci}")
    grids = {f: DEFAULT_GRIDS[f] for f in config.families}
    atomic_write_text(out / "manifest.json",
                      _manifest(config, inputs=[str(config.input)], grids=grids, outputs=written))
    return EXIT_OK


# -- phantom -----------------------------------------------------------------------

def cmd_phantom(config: RunConfig) -> int:
    if config.n_patients < 1:
        raise InvalidInput("--n-patients must be at least 1")
    out = Path(config.output)
    if config.features_only:
        if config.n_patients < 3:
            raise InvalidInput("--features-only needs at least 3 patients")
        table = synthetic_feature_table(config.n_patients, seed=config.seed)
        write_feature_table(out, table)
        return EXIT_OK
    try:
        check_dims(config.dims)
    except ValidationError as exc:
        raise InvalidInput(str(exc)) from None
    records = generate_cohort(out, config.n_patients, seed=config.seed, dims=config.dims,
                              spacing=config.spacing)
    atomic_write_text(out / "manifest.json",
                      _manifest(config, patients=len(records), prevalence=DEFAULT_PREVALENCE))
    log.info("wrote %d phantom patients to %s", len(records), out)
    return EXIT_OK


# -- segquality --------------------------------------------------------------------

def _foreground(path: Path) -> np.ndarray:
    try:
        return read_mask(path, "binary").foreground
    except ValidationError:
        return read_mask(path, "muscle_fat").foreground


def format_mean_std(values, digits: int = 3) -> str:
    v = np.asarray(values, dtype=float)
    sd = float(v.std(ddof=1)) if len(v) > 1 else 0.0
    return f"{float(v.mean()):.{digits}f} ± {sd:.{digits}f}"


def cmd_segquality(config: RunConfig) -> int:
    pred_dir, ref_dir = Path(config.input), Path(config.reference or "")
    for d in (pred_dir, ref_dir):
        if not d.is_dir():
            raise InvalidInput(f"{d}: not a directory")
    pred = {p.name for p in pred_dir.glob("*.json")}
    ref = {p.name for p in ref_dir.glob("*.json")}
    for name in sorted(pred ^ ref):
        log.warning("%s: no partner in the other directory, skipped", name)
    pairs = sorted(pred & ref)
    if not pairs:
        raise InvalidInput("no paired masks")
    lines = ["mask,dice,rve"]
    dices, rves = [], []
    for name in pairs:
        a, b = _foreground(pred_dir / name), _foreground(ref_dir / name)
        try:
            d, r = dice(a, b), rve(a, b)
        except UndefinedMetricError as exc:
            # e.g. two empty lesion masks; left out of the summary
            log.warning("%s: %s, skipped", name, exc)
            lines.append(f"{name},,")
            continue
        dices.append(d)
        rves.append(r)
        lines.append(f"{name},{d!r},{r!r}")
        print(f"{name}: Dice {d:.4f}  RVE {r:.4f}")
    if not dices:
        raise InvalidInput("no pair has a defined Dice score")
    print(f"Dice {format_mean_std(dices)}")
    print(f"RVE {format_mean_std(rves)}")
    if config.output:
        atomic_write_text(config.output, "\n".join(lines) + "\n")
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------------

def _band(text: str) -> tuple:
    try:
        lo, hi = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI integers, got {text!r}") from None
    if lo > hi:
        raise argparse.ArgumentTypeError(f"band {text!r} has LO > HI")
    return lo, hi


def _triple(kind):
    def parse(text: str) -> tuple:
        try:
            vals = tuple(kind(v) for v in text.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected three comma-separated values, got {text!r}") from None
        if len(vals) != 3 or any(not math.isfinite(v) or v <= 0 for v in vals):
            raise argparse.ArgumentTypeError(f"expected three positive values, got {text!r}")
        return vals
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctoutcomes",
                                     description="CT image features and outcome prediction.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="image features for every patient in a cohort directory")
    p.add_argument("--input", required=True, help="directory with ehr.csv, volumes/ and masks/")
    p.add_argument("--output", required=True, help="feature table CSV")
    p.add_argument("--connectivity", type=int, choices=(6, 26), default=26)
    p.add_argument("--nl-band", type=_band, default=NORMAL_LUNG_BAND, metavar="LO:HI")

    p = sub.add_parser("experiment", help="repeated LOPO experiments on a feature table")
    p.add_argument("--input", required=True, help="feature table CSV")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--outcome", choices=("icu", "death", "both"), default="both")
    p.add_argument("--family", action="append", choices=FAMILIES, dest="families")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("phantom", help="generate a synthetic cohort with ground truth")
    p.add_argument("--output", required=True, help="cohort directory (or CSV with --features-only)")
    p.add_argument("--n-patients", type=int, default=10)
    p.add_argument("--dims", type=_triple(int), default=DEFAULT_DIMS, metavar="NX,NY,NZ")
    p.add_argument("--spacing", type=_triple(float), default=DEFAULT_SPACING, metavar="SX,SY,SZ")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--features-only", action="store_true",
                   help="write an 11-feature table with a planted outcome instead of images")

    p = sub.add_parser("segquality", help="Dice and RVE between paired mask directories")
    p.add_argument("--input", required=True, help="directory of predicted masks")
    p.add_argument("--reference", required=True, help="directory of reference masks")
    p.add_argument("--output", help="optional per-pair CSV")
    return parser


COMMANDS = {"extract": cmd_extract, "experiment": cmd_experiment,
            "phantom": cmd_phantom, "segquality": cmd_segquality}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    opts = {k: v for k, v in vars(args).items() if k not in ("verbose",) and v is not None}
    if opts.get("repeats", 1) < 1:
        parser.error("--repeats must be at least 1")
    config = RunConfig(**opts)
    try:
        return COMMANDS[config.command](config)
    except (InvalidInput, EmptyInputError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
