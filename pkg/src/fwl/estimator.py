"""Self-normalized importance sampling for learning from binary feedback.

The target distribution over classes puts unnormalized mass ``exp(+beta)`` on
the correct class and ``exp(-beta)`` on every other class. It can only be
queried pointwise (through user feedback), so the cross-entropy
``-sum_y p*(y|x) log q(y|x)`` is estimated with samples drawn from a proposal
that mixes the model's predictive distribution with a uniform one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

PROB_ATOL = 1e-9
LOG_PROB_FLOOR = float(np.log(1e-30))


class ClampCounter:
    """Counts log evaluations that hit a zero model probability."""

    def __init__(self):
        self.count = 0

    def reset(self):
        self.count = 0


clamp_counter = ClampCounter()


@dataclass(frozen=True)
class CategoricalDistribution:
    """A probability vector over ``C >= 2`` classes."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 2:
            raise ValueError(f"need a 1-d probability vector with C >= 2, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or np.any(p < 0.0):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(p.sum() - 1.0) > PROB_ATOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def num_classes(self) -> int:
        return self.probs.size

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    def __len__(self):
        return self.probs.size

    @classmethod
    def uniform(cls, num_classes: int) -> "CategoricalDistribution":
        return cls(np.full(num_classes, 1.0 / num_classes))


@dataclass(frozen=True)
class FwlHyperparams:
    """Feedback weight ``beta``, mixing coefficient ``lam`` and samples per example ``k_samples``.

    The defaults are the values selected on the document-classification
    development set (one epoch, three samples).
    """

    beta: float = 76.0
    lam: float = 0.97
    k_samples: int = 3

    def __post_init__(self):
        if not self.beta >= 0.0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        if int(self.k_samples) != self.k_samples or self.k_samples < 1:
            raise ValueError(f"k_samples must be a positive integer, got {self.k_samples}")


@dataclass(frozen=True)
class FeedbackBatch:
    """K sampled answers for one query with their feedback and normalized weights."""

    sampled_labels: np.ndarray
    feedback: np.ndarray
    proposal_probs: np.ndarray
    norm_weights: np.ndarray

    @property
    def k(self) -> int:
        return self.sampled_labels.size


def _as_dist(q) -> CategoricalDistribution:
    return q if isinstance(q, CategoricalDistribution) else CategoricalDistribution(q)


def mix_proposal(q, lam: float) -> CategoricalDistribution:
    """Smooth ``q`` towards uniform: ``lam * q + (1 - lam) / C``."""
    q = _as_dist(q)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lam must lie in [0, 1], got {lam}")
    c = q.num_classes
    return CategoricalDistribution(lam * q.probs + (1.0 - lam) / c)


def sample_labels(q_hat, k: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``k`` i.i.d. class indices from ``q_hat`` (with replacement).

    Sampling is by inverse CDF on ``rng.random(k)``, the same transform the
    training kernels use.
    """
    from .kernels import sample_inverse_cdf

    q_hat = _as_dist(q_hat)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    u = rng.random((1, k))
    return sample_inverse_cdf(q_hat.probs[None, :], u)[0]


def log_importance_weights(sampled_labels, feedback, q_hat, beta: float) -> np.ndarray:
    """Unnormalized log-weights ``beta * feedback - log q_hat[y]``."""
    q_hat = _as_dist(q_hat)
    labels = np.asarray(sampled_labels, dtype=np.int64)
    fb = np.asarray(feedback, dtype=np.float64)
    if labels.size == 0:
        raise ValueError("empty sample set")
    if labels.shape != fb.shape:
        raise ValueError(f"labels {labels.shape} and feedback {fb.shape} differ in shape")
    if np.any((fb != 1.0) & (fb != -1.0)):
        raise ValueError("feedback values must be +1 or -1")
    prop = q_hat.probs[labels]
    if np.any(prop <= 0.0):
        raise ValueError("a sampled label has zero proposal probability")
    return beta * fb - np.log(prop)


def normalize_log_weights(log_w) -> np.ndarray:
    """Self-normalize weights given in log space (log-sum-exp)."""
    log_w = np.asarray(log_w, dtype=np.float64)
    if log_w.size == 0:
        raise ValueError("empty sample set")
    shifted = log_w - log_w.max()
    w = np.exp(shifted)
    return w / w.sum()


def importance_weights(sampled_labels, feedback, q_hat, beta: float) -> np.ndarray:
    """Normalized importance weights for K feedback-labelled samples."""
    return normalize_log_weights(log_importance_weights(sampled_labels, feedback, q_hat, beta))


def _safe_log(p: np.ndarray) -> np.ndarray:
    zero = p <= 0.0
    if zero.any():
        clamp_counter.count += int(zero.sum())
        logger.warning("log of zero model probability clamped at log(1e-30) (%d times)", int(zero.sum()))
    return np.where(zero, LOG_PROB_FLOOR, np.log(np.where(zero, 1.0, p)))


def snis_cross_entropy(q, sampled_labels, norm_weights) -> float:
    """Self-normalized estimate of ``-sum_y p*(y) log q(y)``: ``-sum_k w_k log q[y_k]``."""
    q = _as_dist(q)
    labels = np.asarray(sampled_labels, dtype=np.int64)
    w = np.asarray(norm_weights, dtype=np.float64)
    if labels.size == 0 or labels.shape != w.shape:
        raise ValueError("labels and weights must be non-empty and of equal length")
    if labels.min() < 0 or labels.max() >= q.num_classes:
        raise ValueError("sampled label out of range")
    return float(-(w * _safe_log(q.probs[labels])).sum())


def fwl_loss(q, sampled_labels, norm_weights) -> float:
    """FWL objective for one example: ``-(1/K) sum_k w_k log q[y_k]``.

    The weights are constants here; no gradient flows through the proposal.
    """
    return snis_cross_entropy(q, sampled_labels, norm_weights) / np.asarray(sampled_labels).size


def feedback_logits(gold: int, num_classes: int, beta: float) -> np.ndarray:
    """Per-class log of the unnormalized target: ``+beta`` on ``gold``, ``-beta`` elsewhere."""
    z = np.full(num_classes, -float(beta))
    z[gold] = float(beta)
    return z


def exact_weighted_kl_term(p_star_logits, q) -> float:
    """Exact ``-sum_y p*(y) log q(y)`` with ``p*`` the softmax of ``p_star_logits``.

    Enumerates all classes; meant as an oracle for small ``C``.
    """
    q = _as_dist(q)
    z = np.asarray(p_star_logits, dtype=np.float64)
    if z.shape != q.probs.shape:
        raise ValueError(f"logits {z.shape} and q {q.probs.shape} differ in shape")
    p_star = np.exp(z - z.max())
    p_star /= p_star.sum()
    mask = p_star > 0.0
    return float(-(p_star[mask] * _safe_log(q.probs[mask])).sum())


def collect_feedback(q, gold: int, hyper: FwlHyperparams, rng: np.random.Generator) -> FeedbackBatch:
    """Run one simulated interaction: mix, sample K answers, get feedback, weight them."""
    from .deploy import feedback_oracle

    q_hat = mix_proposal(q, hyper.lam)
    labels = sample_labels(q_hat, hyper.k_samples, rng)
    fb = np.array([feedback_oracle(int(y), gold) for y in labels], dtype=np.float64)
    w = importance_weights(labels, fb, q_hat, hyper.beta)
    return FeedbackBatch(labels, fb, q_hat.probs[labels], w)
