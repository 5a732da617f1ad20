"""Confusion matrices and IoU/accuracy aggregation over mask pairs.

Accuracy here is GT-conditioned recall (TP / GT pixels of the class); a
predicted ignore label (255) against valid GT counts as a false negative
for the GT class, tracked in a separate abstention tally so it never
inflates any class's false positives.
"""

from dataclasses import dataclass, field

import numpy as np

from .catalog import IGNORE_ID, VOC_CLASSES
from .errors import InvalidLabel, NoDefinedClasses, ShapeMismatch

N_CLASSES = len(VOC_CLASSES)


@dataclass
class ConfusionMatrix:
    counts: np.ndarray = field(
        default_factory=lambda: np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64))
    abstained: np.ndarray = field(
        default_factory=lambda: np.zeros(N_CLASSES, dtype=np.int64))
    ignored: int = 0

    @property
    def total_pixels(self):
        return int(self.counts.sum() + self.abstained.sum() + self.ignored)


def accumulate(conf: ConfusionMatrix, pred, gt) -> ConfusionMatrix:
    """Add one (prediction, ground truth) mask pair to the tallies.

    GT pixels labeled 255 are excluded (counted in `ignored`).
    """
    pred = np.asarray(pred).ravel()
    gt = np.asarray(gt).ravel()
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    for name, arr in (("pred", pred), ("gt", gt)):
        bad = ~(((arr >= 0) & (arr < N_CLASSES)) | (arr == IGNORE_ID))
        if bad.any():
            raise InvalidLabel(f"{name} labels {np.unique(arr[bad]).tolist()}")

    valid = gt != IGNORE_ID
    conf.ignored += int((~valid).sum())
    gt_v = gt[valid].astype(np.int64)
    pred_v = pred[valid].astype(np.int64)
    abstain = pred_v == IGNORE_ID
    conf.abstained += np.bincount(gt_v[abstain], minlength=N_CLASSES)
    conf.counts += np.bincount(
        N_CLASSES * gt_v[~abstain] + pred_v[~abstain],
        minlength=N_CLASSES * N_CLASSES).reshape(N_CLASSES, N_CLASSES)
    return conf


def per_class_iou(conf: ConfusionMatrix) -> np.ndarray:
    """21 IoU percentages; nan where the class has an empty union."""
    tp = np.diag(conf.counts).astype(np.float64)
    fp = conf.counts.sum(axis=0) - tp
    fn = conf.counts.sum(axis=1) - tp + conf.abstained
    union = tp + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, 100.0 * tp / union, np.nan)


def per_class_accuracy(conf: ConfusionMatrix) -> np.ndarray:
    """21 recall percentages; nan where the class never occurs in GT."""
    tp = np.diag(conf.counts).astype(np.float64)
    gt_total = conf.counts.sum(axis=1) + conf.abstained
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(gt_total > 0, 100.0 * tp / gt_total, np.nan)


def miou(per_class) -> float:
    """Mean of the defined per-class IoUs, reported to 2 decimals."""
    per_class = np.asarray(per_class, dtype=np.float64)
    defined = per_class[~np.isnan(per_class)]
    if defined.size == 0:
        raise NoDefinedClasses("no class has a defined IoU")
    return round(float(defined.mean()), 2)


def evaluation_report(conf: ConfusionMatrix) -> dict:
    iou = per_class_iou(conf)
    acc = per_class_accuracy(conf)
    per_class = {
        name: {
            "iou": None if np.isnan(iou[c]) else round(float(iou[c]), 2),
            "acc": None if np.isnan(acc[c]) else round(float(acc[c]), 2),
        }
        for c, name in enumerate(VOC_CLASSES)
    }
    return {
        "acc_definition": "recall (TP / GT pixels); predicted 255 counts as FN",
        "per_class": per_class,
        "miou": miou(iou),
        "ignored_pixels": conf.ignored,
        "abstained_pixels": int(conf.abstained.sum()),
    }


def format_report_table(report: dict) -> str:
    """Fixed-width per-class IoU/Acc table with an mIoU footer row."""
    lines = [f"{'Class':<12} {'IoU':>7} {'Acc':>7}", "-" * 28]
    for name, vals in report["per_class"].items():
        iou = "-" if vals["iou"] is None else f"{vals['iou']:.2f}"
        acc = "-" if vals["acc"] is None else f"{vals['acc']:.2f}"
        lines.append(f"{name:<12} {iou:>7} {acc:>7}")
    lines.append("-" * 28)
    lines.append(f"{'mIoU':<12} {report['miou']:>7.2f}")
    return "\n".join(lines)
