"""Single-label classification metrics."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass
class MetricsReport:
    f1_micro: float
    f1_macro: float
    accuracy: float
    precision: list[float]
    recall: list[float]
    support: list[int]
    split: str = ""
    checkpoint_id: str = ""
    n: int = field(default=0)

    def to_dict(self) -> dict:
        return asdict(self)


def argmax_predict(probs: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class index
    return np.argmax(probs, axis=1)


def classification_report(gold, pred, num_classes: int, split: str = "", checkpoint_id: str = "") -> MetricsReport:
    """Micro/macro F1 and accuracy.

    Macro-F1 averages over classes that occur in the gold labels or the
    predictions; a class with no true positives scores 0.
    """
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if gold.shape != pred.shape or gold.size == 0:
        raise ValueError("gold and predictions must be non-empty and of equal length")
    tp = np.bincount(gold[gold == pred], minlength=num_classes).astype(np.float64)
    n_pred = np.bincount(pred, minlength=num_classes).astype(np.float64)
    n_gold = np.bincount(gold, minlength=num_classes).astype(np.float64)

    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(n_pred > 0, tp / n_pred, 0.0)
        recall = np.where(n_gold > 0, tp / n_gold, 0.0)
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)
    active = (n_pred > 0) | (n_gold > 0)

    accuracy = float(tp.sum() / gold.size)
    # micro precision = micro recall = accuracy when every example gets exactly one label
    micro = float(2 * tp.sum() / (n_pred.sum() + n_gold.sum()))
    report = MetricsReport(
        f1_micro=micro,
        f1_macro=float(f1[active].mean()),
        accuracy=accuracy,
        precision=precision.tolist(),
        recall=recall.tolist(),
        support=n_gold.astype(int).tolist(),
        split=split,
        checkpoint_id=checkpoint_id,
        n=int(gold.size),
    )
    if abs(report.f1_micro - report.accuracy) > 1e-12:
        raise AssertionError("micro-F1 and accuracy disagree on single-label data")
    return report
