"""Simulated deployment: sample answers, collect binary feedback, update with FWL.

One FWL *epoch* is ``N * K`` feedback requests: every deployment example is
visited once and ``K`` answers are sampled for it from the mixed proposal.
Fresh answers are sampled on every visit.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data import Dataset, DeploymentSplit
from .estimator import FwlHyperparams
from .mlp import AdamState, MlpClassifier, apply_step, backward_from_logit_grad, forward_batch
from .train import evaluate_model

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ("epoch", "feedback_requests", "dev_f1_micro", "dev_f1_macro", "mean_fwl_loss",
                 "positive_feedback_rate")


def feedback_oracle(predicted_label: int, gold_label: int) -> int:
    """Simulated user: +1 when the answer matches the gold class, -1 otherwise."""
    return 1 if int(predicted_label) == int(gold_label) else -1


@dataclass
class EpochLedger:
    """Feedback accounting for one deployment run."""

    n_examples: int
    k_samples: int
    feedback_requests: int = 0
    positive_feedback_count: int = 0
    negative_feedback_count: int = 0
    clamped_logs: int = 0
    touched_ids: set = field(default_factory=set)
    last_mean_loss: float = float("nan")
    last_positive_rate: float = float("nan")

    @property
    def epochs_completed(self) -> int:
        per_epoch = self.n_examples * self.k_samples
        return self.feedback_requests // per_epoch if per_epoch else 0


def fwl_epoch(model: MlpClassifier, deployment: Dataset, hyper: FwlHyperparams, opt_state: AdamState,
              rng: np.random.Generator, ledger: EpochLedger, batch_size: int = 64):
    """One pass over the shuffled deployment set, updating ``model`` in place.

    Each minibatch step uses the mean over its examples of the per-example
    FWL loss. All K samples for an example come from one proposal computed
    at the start of its minibatch.
    """
    n = len(deployment)
    if n == 0:
        raise ValueError("deployment set is empty")
    k = hyper.k_samples
    perm = rng.permutation(n)
    loss_sum = 0.0
    pos = 0
    for start in range(0, n, batch_size):
        idx = perm[start:start + batch_size]
        X = deployment.features[idx]
        gold = deployment.labels[idx]
        probs, hidden = forward_batch(model, X)
        uniforms = rng.random((idx.size, k))
        dlogits, loss, _, feedback, _, _, n_clamped = kernels.fwl_logit_grad(
            probs, gold, float(hyper.lam), float(hyper.beta), uniforms)
        grads = backward_from_logit_grad(model, X, hidden, dlogits / idx.size)
        apply_step(model, grads, opt_state)

        n_pos = int((feedback > 0).sum())
        pos += n_pos
        loss_sum += float(loss.sum())
        ledger.feedback_requests += feedback.size
        ledger.positive_feedback_count += n_pos
        ledger.negative_feedback_count += feedback.size - n_pos
        ledger.touched_ids.update(deployment.ids[idx].tolist())
        if n_clamped:
            ledger.clamped_logs += n_clamped
            logger.warning("clamped %d log-probabilities of zero at sampled labels", n_clamped)
    ledger.last_mean_loss = loss_sum / n
    ledger.last_positive_rate = pos / (n * k)
    return model, opt_state, ledger


@dataclass
class FwlResult:
    model: MlpClassifier
    opt_state: AdamState
    ledger: EpochLedger
    best_epoch: int
    best_dev_f1: float
    curve: list[dict]


def run_fwl(model_s0: MlpClassifier, split: DeploymentSplit, hyper: FwlHyperparams, epochs: int,
            eval_every: int, rng: np.random.Generator, opt_state: AdamState | None = None,
            batch_size: int = 64) -> FwlResult:
    """Fine-tune a copy of ``model_s0`` with FWL; keep the dev-best evaluated epoch.

    An empty deployment set returns an unchanged copy of ``model_s0``.
    """
    if epochs < 1 or eval_every < 1:
        raise ValueError("epochs and eval_every must be >= 1")
    model = model_s0.copy()
    opt = opt_state if opt_state is not None else AdamState.for_model(model)
    ledger = EpochLedger(len(split.deployment), hyper.k_samples)
    if len(split.deployment) == 0:
        return FwlResult(model, opt, ledger, 0, evaluate_model(model, split.dev, "dev").f1_micro, [])

    best, best_opt, best_epoch, best_f1 = None, None, 0, -1.0
    curve = []
    for epoch in range(1, epochs + 1):
        fwl_epoch(model, split.deployment, hyper, opt, rng, ledger, batch_size)
        if epoch % eval_every and epoch != epochs:
            continue
        rep = evaluate_model(model, split.dev, "dev")
        curve.append({
            "epoch": epoch,
            "feedback_requests": ledger.feedback_requests,
            "dev_f1_micro": rep.f1_micro,
            "dev_f1_macro": rep.f1_macro,
            "mean_fwl_loss": ledger.last_mean_loss,
            "positive_feedback_rate": ledger.last_positive_rate,
        })
        if rep.f1_micro > best_f1:
            best, best_opt, best_epoch, best_f1 = model.copy(), opt.copy(), epoch, rep.f1_micro
    return FwlResult(best, best_opt, ledger, best_epoch, best_f1, curve)
