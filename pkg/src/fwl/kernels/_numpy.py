"""Vectorised numpy kernels. These are the reference path; the numba twins must agree."""
import numpy as np

LOG_FLOOR = np.log(1e-30)


def softmax_rows(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def ce_logit_grad(probs, gold):
    """Per-row gradient of -log q[gold] w.r.t. the logits, and the per-row loss."""
    n = probs.shape[0]
    rows = np.arange(n)
    grad = probs.copy()
    grad[rows, gold] -= 1.0
    p_gold = probs[rows, gold]
    loss = -np.where(p_gold > 0.0, np.log(np.maximum(p_gold, 1e-300)), LOG_FLOOR)
    return grad, loss


def sample_inverse_cdf(q_hat, uniforms):
    """Map uniforms (n, K) to class indices through the row-wise CDF of q_hat (n, C)."""
    cdf = np.cumsum(q_hat, axis=1)
    labels = (uniforms[:, :, None] >= cdf[:, None, :]).sum(axis=2)
    # rounding can leave cdf[-1] < u; fall back to the last class with mass
    overflow = labels >= q_hat.shape[1]
    if overflow.any():
        last = q_hat.shape[1] - 1 - np.argmax(q_hat[:, ::-1] > 0.0, axis=1)
        labels = np.where(overflow, last[:, None], labels)
    return labels.astype(np.int64)


def fwl_logit_grad(probs, gold, lam, beta, uniforms):
    """Sample, query the feedback oracle, weight, and differentiate for a batch of rows.

    Returns ``(grad, loss, labels, feedback, weights, proposal, n_clamped)`` where
    ``grad`` is the per-row gradient of the FWL loss w.r.t. the logits.
    """
    n, c = probs.shape
    k = uniforms.shape[1]
    q_hat = lam * probs + (1.0 - lam) / c
    labels = sample_inverse_cdf(q_hat, uniforms)
    rows = np.arange(n)[:, None]
    feedback = np.where(labels == gold[:, None], 1.0, -1.0)
    proposal = q_hat[rows, labels]
    log_w = beta * feedback - np.log(proposal)
    log_w -= log_w.max(axis=1, keepdims=True)
    w = np.exp(log_w)
    w /= w.sum(axis=1, keepdims=True)

    p_sampled = probs[rows, labels]
    clamped = p_sampled <= 0.0
    log_p = np.where(clamped, LOG_FLOOR, np.log(np.where(clamped, 1.0, p_sampled)))
    loss = -(w * log_p).sum(axis=1) / k

    target = np.zeros_like(probs)
    np.add.at(target, (np.repeat(np.arange(n), k), labels.ravel()), w.ravel())
    grad = (probs - target) / k
    return grad, loss, labels, feedback, w, proposal, int(clamped.sum())
