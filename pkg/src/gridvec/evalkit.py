"""Detection-quality metrics: IoU, greedy matching, confusion matrix, F1 curves."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class EmptyCurve(ValueError):
    pass


@dataclass(frozen=True)
class LabeledBox:
    class_id: int
    cx: float
    cy: float
    w: float
    h: float
    confidence: float | None = None

    @classmethod
    def from_detection(cls, det) -> "LabeledBox":
        return cls(det.class_id, det.cx, det.cy, det.w, det.h, det.confidence)


def iou(a: LabeledBox, b: LabeledBox) -> float:
    ax0, ax1 = a.cx - a.w / 2, a.cx + a.w / 2
    ay0, ay1 = a.cy - a.h / 2, a.cy + a.h / 2
    bx0, bx1 = b.cx - b.w / 2, b.cx + b.w / 2
    by0, by1 = b.cy - b.h / 2, b.cy + b.h / 2
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # areas from the same rounded edges, so identical boxes give exactly 1
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return min(1.0, inter / union)


@dataclass
class MatchResult:
    gt: list[LabeledBox]
    preds: list[LabeledBox]
    pairs: list[tuple[int, int, float]] = field(default_factory=list)  # (gt, pred, iou)
    missed: list[int] = field(default_factory=list)
    unmatched: list[int] = field(default_factory=list)


def _conf(box: LabeledBox) -> float:
    return 1.0 if box.confidence is None else box.confidence


def greedy_order(preds: list[LabeledBox]) -> list[int]:
    """Prediction indices by descending confidence, ties in input order."""
    return sorted(range(len(preds)), key=lambda i: -_conf(preds[i]))


def match_detections(gt: list[LabeledBox], preds: list[LabeledBox],
                     iou_min: float = 0.5) -> MatchResult:
    """Greedy one-to-one matching irrespective of class.

    Each prediction, most confident first, claims the unmatched ground-truth
    box with the highest IoU (lowest index on ties) if it reaches ``iou_min``.
    """
    if not 0.0 < iou_min <= 1.0:
        raise ValueError(f"iou_min must be in (0, 1], got {iou_min}")
    taken = [False] * len(gt)
    result = MatchResult(list(gt), list(preds))
    for p in greedy_order(preds):
        best, best_iou = -1, -1.0
        for g, box in enumerate(gt):
            if taken[g]:
                continue
            v = iou(preds[p], box)
            if v >= iou_min and v > best_iou:
                best, best_iou = g, v
        if best >= 0:
            taken[best] = True
            result.pairs.append((best, p, best_iou))
        else:
            result.unmatched.append(p)
    result.missed = [g for g in range(len(gt)) if not taken[g]]
    result.unmatched.sort()
    return result


def confusion_matrix(m: MatchResult, nc: int) -> np.ndarray:
    """Rows are predicted class, columns true class; index ``nc`` is background."""
    cm = np.zeros((nc + 1, nc + 1), dtype=np.int64)
    for g, p, _ in m.pairs:
        cm[m.preds[p].class_id, m.gt[g].class_id] += 1
    for g in m.missed:
        cm[nc, m.gt[g].class_id] += 1
    for p in m.unmatched:
        cm[m.preds[p].class_id, nc] += 1
    return cm


@dataclass
class F1Curve:
    thresholds: np.ndarray     # (T,)
    per_class: np.ndarray      # (T, nc)
    overall: np.ndarray        # (T,)
    precision: np.ndarray      # (T,) micro-pooled
    recall: np.ndarray         # (T,) micro-pooled

    @property
    def points(self):
        return list(zip(self.thresholds.tolist(), self.per_class, self.overall.tolist()))


def default_thresholds() -> np.ndarray:
    return np.round(np.linspace(0.0, 1.0, 1001), 3)


def _f1(tp, fp, fn):
    tp, fp, fn = (np.asarray(x, dtype=np.float64) for x in (tp, fp, fn))
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        r = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        f = np.where(p + r > 0, 2 * p * r / (p + r), 0.0)
    return p, r, f


def tallies_at(gt_by_image: dict, preds_by_image: dict, nc: int, iou_min: float,
               threshold: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class (TP, FP, FN) after dropping predictions below ``threshold``."""
    tp = np.zeros(nc, dtype=np.int64)
    fp = np.zeros(nc, dtype=np.int64)
    fn = np.zeros(nc, dtype=np.int64)
    for image in sorted(set(gt_by_image) | set(preds_by_image)):
        gt = gt_by_image.get(image, [])
        preds = [p for p in preds_by_image.get(image, []) if _conf(p) >= threshold]
        cm = confusion_matrix(match_detections(gt, preds, iou_min), nc)
        diag = np.diag(cm)[:nc]
        tp += diag
        fp += cm[:nc, :].sum(axis=1) - diag
        fn += cm[:, :nc].sum(axis=0) - diag
    return tp, fp, fn


def f1_confidence_curve(gt_by_image: dict, preds_by_image: dict, nc: int,
                        iou_min: float = 0.5, thresholds=None) -> F1Curve:
    """F1 against confidence threshold, per class and micro-pooled.

    Raising the threshold only removes the tail of the greedy order, so the
    matches at any threshold are the full-set matches restricted to the
    surviving predictions; one matching pass per image therefore serves
    every threshold.
    """
    thresholds = default_thresholds() if thresholds is None else np.asarray(thresholds, float)
    if thresholds.size and np.any(np.diff(thresholds) <= 0):
        raise ValueError("thresholds must be strictly ascending")
    n_t = thresholds.size
    # events: (confidence, class, kind) where kind 0 = TP, 1 = FP
    confs, classes, kinds = [], [], []
    n_gt = np.zeros(nc, dtype=np.int64)
    for image in sorted(set(gt_by_image) | set(preds_by_image)):
        gt = gt_by_image.get(image, [])
        preds = preds_by_image.get(image, [])
        for box in gt:
            n_gt[box.class_id] += 1
        m = match_detections(gt, preds, iou_min)
        correct = {p for g, p, _ in m.pairs if gt[g].class_id == preds[p].class_id}
        for i, box in enumerate(preds):
            confs.append(_conf(box))
            classes.append(box.class_id)
            kinds.append(0 if i in correct else 1)
    confs = np.asarray(confs, dtype=np.float64)
    classes = np.asarray(classes, dtype=np.int64)
    kinds = np.asarray(kinds, dtype=np.int64)

    tp = np.zeros((n_t, nc), dtype=np.int64)
    fp = np.zeros((n_t, nc), dtype=np.int64)
    for c in range(nc):
        for kind, target in ((0, tp), (1, fp)):
            sel = np.sort(confs[(classes == c) & (kinds == kind)])
            # number of confidences >= t
            target[:, c] = sel.size - np.searchsorted(sel, thresholds, side="left")
    fn = n_gt[None, :] - tp
    _, _, per_class = _f1(tp, fp, fn)
    p_all, r_all, overall = _f1(tp.sum(axis=1), fp.sum(axis=1), fn.sum(axis=1))
    return F1Curve(thresholds, per_class, overall, p_all, r_all)


def peak_f1(curve: F1Curve) -> tuple[float, float]:
    """(threshold, F1) at the maximum overall F1, lowest threshold on ties."""
    if curve.thresholds.size == 0:
        raise EmptyCurve("curve has no points")
    i = int(np.argmax(curve.overall))
    return float(curve.thresholds[i]), float(curve.overall[i])
