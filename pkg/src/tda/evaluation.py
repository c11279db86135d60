"""One-pass evaluation: center-error precision, normalized precision, and
IoU success curves, pooled over frames, with attribute filtering and report
emission.

Conventions (stated in every report header): precision counts frames whose
center location error is strictly less than the threshold; normalized
precision scales the center offset by the ground-truth box width/height;
success counts frames whose IoU is strictly greater than the threshold, and
its AUC is the mean of the 21 curve samples. Missing or invalid prediction
frames score CLE = +inf and IoU = 0.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import BoundingBox
from .errors import ContractError
from .synthetic import ATTRIBUTE_NAMES

logger = logging.getLogger(__name__)

PRECISION_THRESHOLDS = np.arange(51, dtype=np.float64)  # 0..50 px, step 1
NORM_PRECISION_THRESHOLDS = np.arange(51, dtype=np.float64) * 0.01  # 0..0.5
SUCCESS_THRESHOLDS = np.arange(21, dtype=np.float64) * 0.05  # 0..1

CONVENTION_NOTE = (
    "normalized precision = fraction of frames with "
    "||(dcx/gt_w, dcy/gt_h)|| strictly below the threshold; "
    "precision uses strict CLE < threshold; success uses strict IoU > threshold; "
    "success AUC is the mean of the 21 curve samples"
)


@dataclass
class AnnotatedSequence:
    """Ground truth for one sequence: per-frame boxes plus attribute flags."""

    name: str
    ground_truth: np.ndarray  # (T, 4) as x, y, w, h
    attributes: frozenset[str] = frozenset()

    def __post_init__(self):
        gt = np.asarray(self.ground_truth, dtype=np.float64)
        if gt.ndim != 2 or gt.shape[1] != 4:
            raise ContractError(f"ground truth must be (T, 4), got {gt.shape}")
        unknown = set(self.attributes) - set(ATTRIBUTE_NAMES)
        if unknown:
            raise ContractError(f"unknown attributes {sorted(unknown)}")
        object.__setattr__(self, "ground_truth", gt)

    def __len__(self) -> int:
        return self.ground_truth.shape[0]


@dataclass
class PredictionRun:
    """Per-frame predicted boxes for one sequence; NaN rows mark failures."""

    name: str
    boxes: np.ndarray  # (T, 4)

    def __post_init__(self):
        boxes = np.asarray(self.boxes, dtype=np.float64)
        if boxes.ndim != 2 or boxes.shape[1] != 4:
            raise ContractError(f"predictions must be (T, 4), got {boxes.shape}")
        object.__setattr__(self, "boxes", boxes)

    def __len__(self) -> int:
        return self.boxes.shape[0]


@dataclass
class OPECurves:
    precision: np.ndarray  # (51,)
    norm_precision: np.ndarray  # (51,)
    success: np.ndarray  # (21,)
    precision_at_20px: float
    norm_precision_at_0_2: float
    success_auc: float
    frame_count: int


def cle(pred: BoundingBox, gt: BoundingBox) -> float:
    """Euclidean distance between box centers."""
    return math.hypot(pred.cx - gt.cx, pred.cy - gt.cy)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area, in [0, 1]."""
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    return inter / union


def _pred_valid(rows: np.ndarray) -> np.ndarray:
    return np.isfinite(rows).all(axis=1) & (rows[:, 2] > 0) & (rows[:, 3] > 0)


def _centers(rows: np.ndarray) -> np.ndarray:
    return rows[:, :2] + rows[:, 2:] / 2.0


def frame_cle(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Per-frame CLE; invalid predictions score +inf."""
    out = np.full(len(gt), np.inf)
    ok = _pred_valid(pred)
    d = _centers(pred[ok]) - _centers(gt[ok])
    out[ok] = np.hypot(d[:, 0], d[:, 1])
    return out


def frame_norm_error(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame normalized center error plus an inclusion mask.

    Frames with degenerate ground-truth boxes are excluded (mask False)
    with a warning; invalid predictions score +inf but stay included.
    """
    included = (gt[:, 2] > 0) & (gt[:, 3] > 0) & np.isfinite(gt).all(axis=1)
    n_bad = int((~included).sum())
    if n_bad:
        logger.warning("excluding %d frames with degenerate ground-truth boxes", n_bad)
    out = np.full(len(gt), np.inf)
    ok = _pred_valid(pred) & included
    d = _centers(pred[ok]) - _centers(gt[ok])
    out[ok] = np.hypot(d[:, 0] / gt[ok, 2], d[:, 1] / gt[ok, 3])
    return out, included


def frame_iou(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Per-frame IoU; invalid predictions score 0."""
    out = np.zeros(len(gt))
    ok = _pred_valid(pred) & (gt[:, 2] > 0) & (gt[:, 3] > 0) & np.isfinite(gt).all(axis=1)
    p, g = pred[ok], gt[ok]
    ix = np.minimum(p[:, 0] + p[:, 2], g[:, 0] + g[:, 2]) - np.maximum(p[:, 0], g[:, 0])
    iy = np.minimum(p[:, 1] + p[:, 3], g[:, 1] + g[:, 3]) - np.maximum(p[:, 1], g[:, 1])
    inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
    union = p[:, 2] * p[:, 3] + g[:, 2] * g[:, 3] - inter
    out[ok] = inter / union
    return out


def _check_aligned(run: PredictionRun, annotated: AnnotatedSequence):
    if len(run) != len(annotated):
        raise ContractError(
            f"{run.name}: {len(run)} predictions vs {len(annotated)} ground-truth frames"
        )


def precision_curve(run: PredictionRun, annotated: AnnotatedSequence) -> np.ndarray:
    """Fraction of frames with CLE strictly below each threshold."""
    _check_aligned(run, annotated)
    errors = frame_cle(run.boxes, annotated.ground_truth)
    return curve_from_errors(errors, PRECISION_THRESHOLDS)


def norm_precision_curve(run: PredictionRun, annotated: AnnotatedSequence) -> np.ndarray:
    _check_aligned(run, annotated)
    errors, included = frame_norm_error(run.boxes, annotated.ground_truth)
    return curve_from_errors(errors[included], NORM_PRECISION_THRESHOLDS)


def success_curve(run: PredictionRun, annotated: AnnotatedSequence) -> tuple[np.ndarray, float]:
    """Fraction of frames with IoU strictly above each threshold, plus AUC."""
    _check_aligned(run, annotated)
    overlaps = frame_iou(run.boxes, annotated.ground_truth)
    curve = curve_from_overlaps(overlaps, SUCCESS_THRESHOLDS)
    return curve, float(curve.mean())


def curve_from_errors(errors: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    if len(errors) == 0:
        raise ContractError("empty comparison set")
    return np.array([np.count_nonzero(errors < t) / len(errors) for t in thresholds])


def curve_from_overlaps(overlaps: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    if len(overlaps) == 0:
        raise ContractError("empty comparison set")
    return np.array([np.count_nonzero(overlaps > t) / len(overlaps) for t in thresholds])


def evaluate_pooled(
    runs: dict[str, PredictionRun], annotated: dict[str, AnnotatedSequence]
) -> OPECurves:
    """Pool frames across all sequences and compute the three curves."""
    missing = sorted(set(annotated) - set(runs))
    if missing:
        raise ContractError(f"missing prediction runs for sequences: {missing}")
    if not annotated:
        raise ContractError("empty comparison set")
    cles, nerrs, ious = [], [], []
    for name in sorted(annotated):
        run, anno = runs[name], annotated[name]
        _check_aligned(run, anno)
        cles.append(frame_cle(run.boxes, anno.ground_truth))
        errs, included = frame_norm_error(run.boxes, anno.ground_truth)
        nerrs.append(errs[included])
        ious.append(frame_iou(run.boxes, anno.ground_truth))
    cles = np.concatenate(cles)
    nerrs = np.concatenate(nerrs)
    ious = np.concatenate(ious)
    precision = curve_from_errors(cles, PRECISION_THRESHOLDS)
    norm_precision = curve_from_errors(nerrs, NORM_PRECISION_THRESHOLDS)
    success = curve_from_overlaps(ious, SUCCESS_THRESHOLDS)
    return OPECurves(
        precision=precision,
        norm_precision=norm_precision,
        success=success,
        precision_at_20px=float(precision[20]),
        norm_precision_at_0_2=float(norm_precision[20]),
        success_auc=float(success.mean()),
        frame_count=len(cles),
    )


def attribute_report(
    runs: dict[str, PredictionRun],
    annotated: dict[str, AnnotatedSequence],
    attribute: str,
) -> OPECurves | None:
    """Curves pooled over sequences carrying ``attribute``; None if none do."""
    if attribute not in ATTRIBUTE_NAMES:
        raise ContractError(f"unknown attribute {attribute!r}; expected one of {ATTRIBUTE_NAMES}")
    selected = {name: anno for name, anno in annotated.items() if attribute in anno.attributes}
    if not selected:
        return None
    return evaluate_pooled({n: runs[n] for n in selected}, selected)


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


def _read_box_file(path: Path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.replace("\t", ",").split(",")
            if len(parts) != 4:
                raise ContractError(f"{path}: expected 4 values per line, got {line!r}")
            rows.append([float(v) for v in parts])
    if not rows:
        raise ContractError(f"{path}: no box rows found")
    return np.asarray(rows, dtype=np.float64)


def load_annotated_dir(gt_root: str | Path) -> dict[str, AnnotatedSequence]:
    """Read ``anno/<seq>.txt`` box files and optional ``att/<seq>.txt`` flags."""
    gt_root = Path(gt_root)
    anno_dir = gt_root / "anno"
    if not anno_dir.is_dir():
        raise ContractError(f"no anno/ directory under {gt_root}")
    out = {}
    for path in sorted(anno_dir.glob("*.txt")):
        name = path.stem
        attrs: frozenset[str] = frozenset()
        att_path = gt_root / "att" / f"{name}.txt"
        if att_path.is_file():
            flags = [int(v) for v in att_path.read_text().strip().split(",")]
            attrs = frozenset(a for a, f in zip(ATTRIBUTE_NAMES, flags) if f)
        out[name] = AnnotatedSequence(name, _read_box_file(path), attrs)
    if not out:
        raise ContractError(f"no annotation files under {anno_dir}")
    return out


def load_prediction_dir(results_root: str | Path) -> dict[str, dict[str, PredictionRun]]:
    """Map tracker name -> sequence name -> predictions.

    A directory containing ``*.txt`` files is a single tracker named after
    the directory; a directory of subdirectories holds one tracker each.
    """
    results_root = Path(results_root)
    if not results_root.is_dir():
        raise ContractError(f"results directory not found: {results_root}")
    txts = sorted(results_root.glob("*.txt"))
    if txts:
        return {results_root.name: {p.stem: PredictionRun(p.stem, _read_box_file(p)) for p in txts}}
    trackers = {}
    for sub in sorted(p for p in results_root.iterdir() if p.is_dir()):
        files = sorted(sub.glob("*.txt"))
        if files:
            trackers[sub.name] = {p.stem: PredictionRun(p.stem, _read_box_file(p)) for p in files}
    if not trackers:
        raise ContractError(f"no prediction files under {results_root}")
    return trackers


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------


def write_curves_csv(path: Path, curves: OPECurves):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {CONVENTION_NOTE}\n")
        writer = csv.writer(fh)
        writer.writerow(["metric", "threshold", "value"])
        for t, v in zip(PRECISION_THRESHOLDS, curves.precision):
            writer.writerow(["precision", repr(float(t)), repr(float(v))])
        for t, v in zip(NORM_PRECISION_THRESHOLDS, curves.norm_precision):
            writer.writerow(["norm_precision", repr(float(t)), repr(float(v))])
        for t, v in zip(SUCCESS_THRESHOLDS, curves.success):
            writer.writerow(["success", repr(float(t)), repr(float(v))])


def read_curves_csv(path: str | Path) -> OPECurves:
    metric_rows: dict[str, list[tuple[float, float]]] = {}
    with open(path) as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader)
        if header != ["metric", "threshold", "value"]:
            raise ContractError(f"unexpected curves header in {path}: {header}")
        for metric, t, v in reader:
            metric_rows.setdefault(metric, []).append((float(t), float(v)))
    precision = np.array([v for _, v in metric_rows["precision"]])
    norm_precision = np.array([v for _, v in metric_rows["norm_precision"]])
    success = np.array([v for _, v in metric_rows["success"]])
    return OPECurves(
        precision=precision,
        norm_precision=norm_precision,
        success=success,
        precision_at_20px=float(precision[20]),
        norm_precision_at_0_2=float(norm_precision[20]),
        success_auc=float(success.mean()),
        frame_count=-1,
    )


def _plot_curves(per_tracker: dict[str, OPECurves], out_dir: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    panels = [
        ("precision", PRECISION_THRESHOLDS, "CLE threshold (px)", lambda c: c.precision),
        (
            "norm_precision",
            NORM_PRECISION_THRESHOLDS,
            "normalized CLE threshold",
            lambda c: c.norm_precision,
        ),
        ("success", SUCCESS_THRESHOLDS, "IoU threshold", lambda c: c.success),
    ]
    for kind, xs, xlabel, pick in panels:
        fig, ax = plt.subplots(figsize=(5, 4))
        for tracker in sorted(per_tracker):
            ax.plot(xs, pick(per_tracker[tracker]), label=tracker)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("fraction of frames")
        ax.set_ylim(0, 1.02)
        ax.set_title(f"{kind} (one-pass evaluation)")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(out_dir / f"{kind}.png", dpi=110)
        plt.close(fig)


def emit_report(per_tracker: dict[str, OPECurves], out_dir: str | Path) -> list[Path]:
    """Write per-tracker curve CSVs, a summary table, and curve plots."""
    if not per_tracker:
        raise ContractError("emit_report needs at least one tracker result")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for tracker in sorted(per_tracker):
        path = out_dir / f"curves_{tracker}.csv"
        write_curves_csv(path, per_tracker[tracker])
        written.append(path)
    summary = out_dir / "summary.csv"
    with open(summary, "w", newline="") as fh:
        fh.write(f"# {CONVENTION_NOTE}\n")
        writer = csv.writer(fh)
        writer.writerow(["tracker", "precision_at_20px", "norm_precision_at_0_2", "success_auc"])
        for tracker in sorted(per_tracker):
            c = per_tracker[tracker]
            writer.writerow(
                [
                    tracker,
                    repr(c.precision_at_20px),
                    repr(c.norm_precision_at_0_2),
                    repr(c.success_auc),
                ]
            )
    written.append(summary)
    _plot_curves(per_tracker, out_dir)
    written.extend(out_dir / f"{k}.png" for k in ("precision", "norm_precision", "success"))
    return written
