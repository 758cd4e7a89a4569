"""Evaluation: risk-based metrics and pixel metrics against reference masks.

Cluster labels are unsupervised, so scoring against reference classes first
requires an assignment. We build the cluster-by-class pixel co-occurrence
matrix (unknown and ignore pixels excluded) and take the one-to-one
assignment that maximizes matched pixels; clusters left unmatched map to
void. Unknown and void pixels count as missed detections for the reference
class (recall/IoU suffer) but never as false positives (precision does
not), since an abstaining model asserts nothing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dataset import IGNORE_VALUE
from .errors import EmptySequence, NoReferenceMasks, ShapeMismatch
from .risk import sequence_risk
from .segmenter import UNKNOWN_LABEL

VOID_CLASS = -1


def mflr(frame_risks: Sequence[float]) -> float:
    """Mean frame-level risk over a sequence."""
    values = list(frame_risks)
    if not values:
        raise EmptySequence("mean frame risk needs at least one frame")
    return float(np.mean(values))


def scene_coverage(frame_risks: Sequence[float], risk_level: float) -> float:
    """Complement of the sequence risk: the share of non-risky frames."""
    return 1.0 - sequence_risk(frame_risks, risk_level)


def map_clusters_to_reference(
    predictions: Sequence[np.ndarray], references: Sequence[np.ndarray]
) -> Dict[int, int]:
    """Optimal one-to-one cluster-to-class assignment by matched pixels.

    `predictions` holds raw label maps (0 unknown, k cluster k) and
    `references` class masks (255 ignore). Unmatched clusters are absent
    from the returned mapping (treated as void downstream).
    """
    if len(predictions) == 0 or len(predictions) != len(references):
        raise NoReferenceMasks("need equally many prediction and reference masks")
    clusters: set = set()
    classes: set = set()
    for pred, ref in zip(predictions, references):
        if pred.shape != ref.shape:
            raise ShapeMismatch(f"prediction {pred.shape} vs reference {ref.shape}")
        valid = (ref != IGNORE_VALUE) & (pred != UNKNOWN_LABEL)
        clusters.update(np.unique(pred[valid]).tolist())
        classes.update(np.unique(ref[ref != IGNORE_VALUE]).tolist())
    if not classes:
        raise NoReferenceMasks("reference masks contain only ignore pixels")
    cluster_ids = sorted(clusters)
    class_ids = sorted(classes)
    counts = np.zeros((len(cluster_ids), len(class_ids)), dtype=np.int64)
    cl_index = {c: i for i, c in enumerate(cluster_ids)}
    cls_index = {c: j for j, c in enumerate(class_ids)}
    for pred, ref in zip(predictions, references):
        valid = (ref != IGNORE_VALUE) & (pred != UNKNOWN_LABEL)
        pairs, pair_counts = np.unique(
            np.stack([pred[valid], ref[valid]]), axis=1, return_counts=True
        )
        for (cl, cls), cnt in zip(pairs.T, pair_counts):
            counts[cl_index[int(cl)], cls_index[int(cls)]] += int(cnt)
    rows, cols = linear_sum_assignment(counts, maximize=True)
    return {cluster_ids[r]: class_ids[c] for r, c in zip(rows, cols)}


def apply_mapping(pred: np.ndarray, mapping: Dict[int, int]) -> np.ndarray:
    """Raw cluster labels to reference classes; unknown/unmatched become void."""
    out = np.full(pred.shape, VOID_CLASS, dtype=np.int64)
    for cluster, cls in mapping.items():
        out[pred == cluster] = cls
    out[pred == UNKNOWN_LABEL] = VOID_CLASS
    return out


@dataclass
class EvalReport:
    pixel_accuracy: float
    miou: float
    precision: float
    recall: float
    fpr: float
    per_class: Dict[int, Dict[str, float]]
    label_mapping: Dict[int, int]
    counts: List[List[int]]
    evaluated_pixels: int
    mflr: Optional[float] = None
    scene_coverage: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "pixel_accuracy": self.pixel_accuracy,
            "miou": self.miou,
            "precision": self.precision,
            "recall": self.recall,
            "fpr": self.fpr,
            "per_class": {str(k): v for k, v in self.per_class.items()},
            "label_mapping": {str(k): v for k, v in self.label_mapping.items()},
            "counts": self.counts,
            "evaluated_pixels": self.evaluated_pixels,
            "mflr": self.mflr,
            "scene_coverage": self.scene_coverage,
        }


def pixel_metrics(predictions: Sequence[np.ndarray],
                  references: Sequence[np.ndarray],
                  mapping: Dict[int, int]) -> EvalReport:
    """Confusion-based metrics on mapped predictions.

    Macro-averaged precision/recall/FPR over the reference classes present;
    ignore pixels are excluded everywhere.
    """
    if len(predictions) != len(references) or not predictions:
        raise ShapeMismatch("need equally many (and at least one) masks")
    class_ids = sorted({
        int(v) for ref in references for v in np.unique(ref[ref != IGNORE_VALUE])
    })
    idx = {c: i for i, c in enumerate(class_ids)}
    k = len(class_ids)
    # rows: predicted class (k = void/unknown), cols: reference class
    counts = np.zeros((k + 1, k), dtype=np.int64)
    for pred, ref in zip(predictions, references):
        if pred.shape != ref.shape:
            raise ShapeMismatch(f"prediction {pred.shape} vs reference {ref.shape}")
        mapped = apply_mapping(pred, mapping)
        valid = ref != IGNORE_VALUE
        mapped = mapped[valid]
        refv = ref[valid].astype(np.int64)
        pred_rows = np.full(mapped.shape, k, dtype=np.int64)
        ref_cols = np.empty(refv.shape, dtype=np.int64)
        for c, i in idx.items():
            pred_rows[mapped == c] = i
            ref_cols[refv == c] = i
        np.add.at(counts, (pred_rows, ref_cols), 1)
    total = int(counts.sum())
    per_class = {}
    ious, precs, recs, fprs = [], [], [], []
    for c, i in idx.items():
        tp = int(counts[i, i])
        fp = int(counts[i].sum() - tp)
        fn = int(counts[:, i].sum() - tp)
        tn = total - tp - fp - fn
        iou = tp / (tp + fp + fn) if tp + fp + fn else 0.0
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        fpr = fp / (fp + tn) if fp + tn else 0.0
        per_class[c] = {"iou": iou, "precision": prec, "recall": rec, "fpr": fpr,
                        "tp": tp, "fp": fp, "fn": fn, "tn": tn}
        ious.append(iou)
        precs.append(prec)
        recs.append(rec)
        fprs.append(fpr)
    pa = float(np.trace(counts[:k])) / total if total else 0.0
    return EvalReport(
        pixel_accuracy=pa,
        miou=float(np.mean(ious)),
        precision=float(np.mean(precs)),
        recall=float(np.mean(recs)),
        fpr=float(np.mean(fprs)),
        per_class=per_class,
        label_mapping=dict(mapping),
        counts=counts.tolist(),
        evaluated_pixels=total,
    )


def evaluate_segmentations(predictions: Sequence[np.ndarray],
                           references: Sequence[np.ndarray],
                           frame_risks: Optional[Sequence[float]] = None,
                           risk_level: float = 0.5) -> EvalReport:
    """Mapping + pixel metrics in one call, with optional risk metrics."""
    mapping = map_clusters_to_reference(predictions, references)
    report = pixel_metrics(predictions, references, mapping)
    if frame_risks:
        report.mflr = mflr(frame_risks)
        report.scene_coverage = scene_coverage(frame_risks, risk_level)
    return report
