"""Supervised minibatch training with dev-based model selection."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .metrics import MetricsReport, argmax_predict, classification_report
from .mlp import AdamState, MlpClassifier, apply_step, ce_batch_grad, checkpoint_id, predict_proba


def evaluate_model(model: MlpClassifier, data: Dataset, split: str = "") -> MetricsReport:
    if len(data) == 0:
        raise ValueError(f"cannot evaluate on an empty {split or 'dataset'}")
    if data.dim != model.input_dim:
        raise ValueError(f"model expects {model.input_dim}-d inputs, {split or 'data'} has {data.dim}")
    pred = argmax_predict(predict_proba(model, data.features))
    return classification_report(data.labels, pred, model.num_classes, split, checkpoint_id(model))


@dataclass
class TrainResult:
    model: MlpClassifier
    opt_state: AdamState
    best_epoch: int
    best_dev_f1: float
    curve: list[dict] = field(default_factory=list)


def train_supervised(model: MlpClassifier, train: Dataset, dev: Dataset, epochs: int, opt_state: AdamState,
                     rng: np.random.Generator, batch_size: int = 64, audit: set | None = None) -> TrainResult:
    """Cross-entropy training; returns the epoch with the best dev micro-F1.

    ``model`` is updated in place; the returned model is a separate copy.
    An empty ``train`` set leaves the model untouched.
    """
    if len(train) == 0 or epochs < 1:
        f1 = evaluate_model(model, dev, "dev").f1_micro if len(dev) else float("nan")
        return TrainResult(model.copy(), opt_state, 0, f1, [])

    best, best_opt, best_epoch, best_f1 = None, None, 0, -1.0
    curve = []
    n = len(train)
    for epoch in range(1, epochs + 1):
        perm = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            grads, loss = ce_batch_grad(model, train.features[idx], train.labels[idx])
            apply_step(model, grads, opt_state)
            losses.append(loss * idx.size)
            if audit is not None:
                audit.update(train.ids[idx].tolist())
        dev_report = evaluate_model(model, dev, "dev")
        curve.append({
            "epoch": epoch,
            "examples_seen": epoch * n,
            "dev_f1_micro": dev_report.f1_micro,
            "dev_f1_macro": dev_report.f1_macro,
            "mean_ce_loss": float(np.sum(losses) / n),
        })
        if dev_report.f1_micro > best_f1:
            best, best_opt, best_epoch, best_f1 = model.copy(), opt_state.copy(), epoch, dev_report.f1_micro
    return TrainResult(best, best_opt, best_epoch, best_f1, curve)
