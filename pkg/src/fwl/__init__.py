"""Feedback-weighted learning: improve a deployed classifier from binary user feedback."""

__version__ = "0.1.0"

from .estimator import (  # noqa: E402
    CategoricalDistribution,
    FeedbackBatch,
    FwlHyperparams,
    collect_feedback,
    exact_weighted_kl_term,
    feedback_logits,
    fwl_loss,
    importance_weights,
    mix_proposal,
    sample_labels,
    snis_cross_entropy,
)
from .mlp import MlpClassifier, AdamState, apply_step, backward_ce, backward_fwl, forward, init_mlp  # noqa: E402
from .deploy import EpochLedger, feedback_oracle, fwl_epoch, run_fwl  # noqa: E402

__all__ = [
    "CategoricalDistribution",
    "FeedbackBatch",
    "FwlHyperparams",
    "collect_feedback",
    "exact_weighted_kl_term",
    "feedback_logits",
    "fwl_loss",
    "importance_weights",
    "mix_proposal",
    "sample_labels",
    "snis_cross_entropy",
    "MlpClassifier",
    "AdamState",
    "apply_step",
    "backward_ce",
    "backward_fwl",
    "forward",
    "init_mlp",
    "EpochLedger",
    "feedback_oracle",
    "fwl_epoch",
    "run_fwl",
]
