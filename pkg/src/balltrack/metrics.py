"""Frame-level detection metrics: outcome classification, F1/Accuracy, AP.

Each frame yields exactly one outcome from the four-way TP/TN/FP/FN scheme:
a prediction on a ground-truth frame is a TP when it lands within ``tau``
pixels of the annotation and an FP otherwise (the simultaneous miss is not
double counted). Distances are measured in original-resolution pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

Position = tuple[float, float]

OUTCOMES = ("tp", "tn", "fp", "fn")


@dataclass(frozen=True)
class EvalConfig:
    tau: float = 4.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")


@dataclass(frozen=True)
class FrameRecord:
    """One evaluated frame: optional GT position, optional scored prediction."""

    gt: Position | None
    pred: Position | None
    confidence: float | None = None

    def __post_init__(self):
        if self.pred is not None and self.confidence is None:
            raise ValueError("a prediction requires a confidence")


def classify_frame(gt: Position | None, pred: Position | None, tau: float) -> str:
    """Four-way outcome for a single frame; returns one of 'tp'/'tn'/'fp'/'fn'."""
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    if gt is None:
        return "tn" if pred is None else "fp"
    if pred is None:
        return "fn"
    dist = math.hypot(pred[0] - gt[0], pred[1] - gt[1])
    return "tp" if dist <= tau else "fp"


@dataclass(frozen=True)
class Summary:
    tp: int
    tn: int
    fp: int
    fn: int
    f1: float
    accuracy: float

    @property
    def frames(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def summarize(outcomes) -> Summary:
    """F1 and Accuracy over a sequence of outcome strings."""
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("cannot summarize zero outcomes")
    counts = {k: 0 for k in OUTCOMES}
    for o in outcomes:
        if o not in counts:
            raise ValueError(f"unknown outcome {o!r}")
        counts[o] += 1
    tp, tn, fp, fn = counts["tp"], counts["tn"], counts["fp"], counts["fn"]
    denom = 2 * tp + fp + fn
    f1 = 2 * tp / denom if denom > 0 else 0.0
    accuracy = (tp + tn) / len(outcomes)
    return Summary(tp=tp, tn=tn, fp=fp, fn=fn, f1=f1, accuracy=accuracy)


def average_precision(records, tau: float) -> float:
    """Area under the all-point interpolated precision-recall curve.

    Predictions are ranked by confidence (ties grouped); a prediction is
    correct iff its frame has a GT ball within ``tau`` pixels. The recall
    denominator is the number of GT-ball frames.
    """
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    records = list(records)
    n_gt = sum(1 for r in records if r.gt is not None)
    if n_gt == 0:
        raise ValueError("average precision needs at least one GT-ball frame")

    scored = [
        (r.confidence, classify_frame(r.gt, r.pred, tau) == "tp")
        for r in records
        if r.pred is not None
    ]
    if not scored:
        return 0.0

    scored.sort(key=lambda sc: -sc[0])
    # One PR point per distinct confidence value (tie groups enter together).
    recalls = []
    precisions = []
    tp = 0
    seen = 0
    i = 0
    while i < len(scored):
        j = i
        while j < len(scored) and scored[j][0] == scored[i][0]:
            tp += scored[j][1]
            seen += 1
            j += 1
        recalls.append(tp / n_gt)
        precisions.append(tp / seen)
        i = j

    # Monotone non-increasing precision envelope, then rectangle areas.
    for k in range(len(precisions) - 2, -1, -1):
        precisions[k] = max(precisions[k], precisions[k + 1])
    ap = 0.0
    prev_recall = 0.0
    for r, p in zip(recalls, precisions):
        ap += (r - prev_recall) * p
        prev_recall = r
    return ap


def evaluate(records, config: EvalConfig) -> dict:
    """Full metrics dict for a record set at one threshold."""
    records = list(records)
    outcomes = [classify_frame(r.gt, r.pred, config.tau) for r in records]
    s = summarize(outcomes)
    ap = average_precision(records, config.tau)
    return {
        "tau": config.tau,
        "tp": s.tp,
        "tn": s.tn,
        "fp": s.fp,
        "fn": s.fn,
        "f1": s.f1,
        "accuracy": s.accuracy,
        "ap": ap,
        "frames": s.frames,
    }


def evaluate_sweep(records, taus) -> list[dict]:
    """Metrics dicts over a grid of thresholds."""
    records = list(records)
    return [evaluate(records, EvalConfig(tau=t)) for t in taus]
