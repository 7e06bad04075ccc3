import math

import numpy as np
import pytest

from balltrack.metrics import (
    EvalConfig,
    FrameRecord,
    average_precision,
    classify_frame,
    evaluate,
    evaluate_sweep,
    summarize,
)


def brute_force_counts(records, tau):
    """Independent recount of the four outcomes straight from the definitions."""
    tp = tn = fp = fn = 0
    for r in records:
        if r.gt is None and r.pred is None:
            tn += 1
        elif r.gt is None:
            fp += 1
        elif r.pred is None:
            fn += 1
        elif math.hypot(r.pred[0] - r.gt[0], r.pred[1] - r.gt[1]) <= tau:
            tp += 1
        else:
            fp += 1
    return tp, tn, fp, fn


def brute_force_ap(records, tau):
    """Oracle AP: exhaustive sweep over every confidence threshold.

    For each distinct threshold, precision and recall are recounted from
    scratch over the whole record set; the all-point interpolated area uses a
    direct max over the remaining thresholds instead of a running envelope.
    """
    n_gt = sum(1 for r in records if r.gt is not None)
    preds = [r for r in records if r.pred is not None]
    if not preds:
        return 0.0
    thresholds = sorted({r.confidence for r in preds}, reverse=True)
    points = []
    for t in thresholds:
        kept = [r for r in preds if r.confidence >= t]
        correct = sum(
            1
            for r in kept
            if r.gt is not None
            and math.hypot(r.pred[0] - r.gt[0], r.pred[1] - r.gt[1]) <= tau
        )
        points.append((correct / n_gt, correct / len(kept)))
    ap = 0.0
    prev_r = 0.0
    for i, (r, _) in enumerate(points):
        p_interp = max(p for _, p in points[i:])
        ap += (r - prev_r) * p_interp
        prev_r = r
    return ap


def random_records(rng, n_frames=100):
    records = []
    for _ in range(n_frames):
        has_gt = rng.random() < 0.7
        gt = (rng.uniform(0, 200), rng.uniform(0, 200)) if has_gt else None
        has_pred = rng.random() < 0.7
        if has_pred:
            if gt is not None and rng.random() < 0.7:
                pred = (gt[0] + rng.normal(0, 4), gt[1] + rng.normal(0, 4))
            else:
                pred = (rng.uniform(0, 200), rng.uniform(0, 200))
            # Quantized confidences create tie groups on purpose.
            conf = round(rng.uniform(0.05, 1.0), 1)
            records.append(FrameRecord(gt=gt, pred=pred, confidence=conf))
        else:
            records.append(FrameRecord(gt=gt, pred=None))
    if not any(r.gt is not None for r in records):
        records[0] = FrameRecord(gt=(1.0, 1.0), pred=None)
    return records


def test_classify_frame_examples():
    assert classify_frame((100.0, 100.0), (103.0, 100.0), 4.0) == "tp"
    assert classify_frame(None, None, 4.0) == "tn"
    assert classify_frame((100.0, 100.0), (100.0, 105.0), 4.0) == "fp"
    assert classify_frame((100.0, 100.0), None, 4.0) == "fn"
    assert classify_frame(None, (3.0, 3.0), 4.0) == "fp"


def test_classify_frame_boundary_inclusive():
    assert classify_frame((0.0, 0.0), (4.0, 0.0), 4.0) == "tp"


def test_summarize_all_tp():
    s = summarize(["tp"] * 7)
    assert s.f1 == 1.0 and s.accuracy == 1.0


def test_summarize_mixed_counts():
    s = summarize(["tp"] * 3 + ["fp"] + ["fn"] + ["tn"] * 5)
    assert s.f1 == pytest.approx(0.75)
    assert s.accuracy == pytest.approx(0.8)
    assert (s.tp, s.fp, s.fn, s.tn) == (3, 1, 1, 5)


def test_summarize_degenerate_all_tn():
    s = summarize(["tn"] * 4)
    assert s.f1 == 0.0 and s.accuracy == 1.0


def test_summarize_rejects_empty():
    with pytest.raises(ValueError):
        summarize([])


def test_outcome_partition_sums_to_frames():
    rng = np.random.default_rng(3)
    records = random_records(rng)
    outcomes = [classify_frame(r.gt, r.pred, 4.0) for r in records]
    s = summarize(outcomes)
    assert s.frames == len(records)


def test_ap_perfect_predictions():
    rng = np.random.default_rng(4)
    records = []
    for i in range(20):
        gt = (float(i), float(i))
        records.append(FrameRecord(gt=gt, pred=gt, confidence=rng.uniform(0.1, 1.0)))
    assert average_precision(records, 4.0) == pytest.approx(1.0)


def test_ap_worked_example():
    # 2 GT frames; conf 0.9 correct, conf 0.8 wrong, conf 0.7 correct.
    records = [
        FrameRecord(gt=(10.0, 10.0), pred=(10.0, 10.0), confidence=0.9),
        FrameRecord(gt=None, pred=(90.0, 90.0), confidence=0.8),
        FrameRecord(gt=(70.0, 70.0), pred=(71.0, 70.0), confidence=0.7),
    ]
    ap = average_precision(records, 4.0)
    assert ap == pytest.approx(0.5 * 1.0 + 0.5 * (2.0 / 3.0), abs=1e-12)


def test_ap_no_predictions():
    records = [FrameRecord(gt=(1.0, 1.0), pred=None), FrameRecord(gt=None, pred=None)]
    assert average_precision(records, 4.0) == 0.0


def test_ap_requires_gt_frames():
    with pytest.raises(ValueError):
        average_precision([FrameRecord(gt=None, pred=None)], 4.0)


def test_ap_matches_brute_force_oracle():
    rng = np.random.default_rng(5)
    for _ in range(30):
        records = random_records(rng)
        got = average_precision(records, 4.0)
        want = brute_force_ap(records, 4.0)
        assert got == pytest.approx(want, abs=1e-9)


def test_summary_matches_brute_force_counts():
    rng = np.random.default_rng(6)
    for _ in range(30):
        records = random_records(rng)
        outcomes = [classify_frame(r.gt, r.pred, 4.0) for r in records]
        s = summarize(outcomes)
        tp, tn, fp, fn = brute_force_counts(records, 4.0)
        assert (s.tp, s.tn, s.fp, s.fn) == (tp, tn, fp, fn)
        denom = 2 * tp + fp + fn
        want_f1 = 2 * tp / denom if denom else 0.0
        assert s.f1 == pytest.approx(want_f1, abs=1e-12)
        assert s.accuracy == pytest.approx((tp + tn) / len(records), abs=1e-12)


def test_ap_invariant_under_confidence_scaling():
    rng = np.random.default_rng(7)
    records = random_records(rng)
    base = average_precision(records, 4.0)
    for scale in (0.5, 3.0, 1000.0):
        scaled = [
            FrameRecord(
                gt=r.gt,
                pred=r.pred,
                confidence=None if r.confidence is None else r.confidence * scale,
            )
            for r in records
        ]
        assert average_precision(scaled, 4.0) == pytest.approx(base, abs=1e-12)


def test_tp_monotone_in_tau():
    rng = np.random.default_rng(8)
    records = random_records(rng)
    prev_tp = -1
    for tau in range(1, 11):
        s = summarize(classify_frame(r.gt, r.pred, float(tau)) for r in records)
        assert s.tp >= prev_tp
        prev_tp = s.tp


def test_evaluate_dict_shape():
    records = [FrameRecord(gt=(5.0, 5.0), pred=(5.0, 5.0), confidence=1.0)]
    out = evaluate(records, EvalConfig(tau=4.0))
    assert set(out) == {"tau", "tp", "tn", "fp", "fn", "f1", "accuracy", "ap", "frames"}
    assert out["f1"] == 1.0 and out["ap"] == 1.0 and out["frames"] == 1


def test_evaluate_sweep_length_and_monotone_tp():
    rng = np.random.default_rng(9)
    records = random_records(rng)
    rows = evaluate_sweep(records, [float(t) for t in range(1, 11)])
    assert len(rows) == 10
    tps = [r["tp"] for r in rows]
    assert tps == sorted(tps)


def test_eval_config_rejects_bad_tau():
    with pytest.raises(ValueError):
        EvalConfig(tau=0.0)
