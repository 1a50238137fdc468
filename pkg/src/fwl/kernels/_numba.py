"""Loop kernels compiled with numba. Signatures mirror ``_numpy``."""
import math

import numpy as np
from numba import njit

LOG_FLOOR = math.log(1e-30)


@njit(cache=True)
def softmax_rows(logits):
    n, c = logits.shape
    out = np.empty_like(logits)
    for i in range(n):
        m = logits[i, 0]
        for j in range(1, c):
            if logits[i, j] > m:
                m = logits[i, j]
        s = 0.0
        for j in range(c):
            e = math.exp(logits[i, j] - m)
            out[i, j] = e
            s += e
        for j in range(c):
            out[i, j] /= s
    return out


@njit(cache=True)
def ce_logit_grad(probs, gold):
    n, c = probs.shape
    grad = probs.copy()
    loss = np.empty(n)
    for i in range(n):
        g = gold[i]
        grad[i, g] -= 1.0
        p = probs[i, g]
        loss[i] = -math.log(p) if p > 0.0 else -LOG_FLOOR
    return grad, loss


@njit(cache=True)
def sample_inverse_cdf(q_hat, uniforms):
    n, c = q_hat.shape
    k = uniforms.shape[1]
    labels = np.empty((n, k), dtype=np.int64)
    cdf = np.empty(c)
    for i in range(n):
        acc = 0.0
        last = 0
        for j in range(c):
            acc += q_hat[i, j]
            cdf[j] = acc
            if q_hat[i, j] > 0.0:
                last = j
        for s in range(k):
            u = uniforms[i, s]
            lab = last
            for j in range(c):
                if u < cdf[j]:
                    lab = j
                    break
            labels[i, s] = lab
    return labels


@njit(cache=True)
def fwl_logit_grad(probs, gold, lam, beta, uniforms):
    n, c = probs.shape
    k = uniforms.shape[1]
    q_hat = lam * probs + (1.0 - lam) / c
    labels = sample_inverse_cdf(q_hat, uniforms)
    feedback = np.empty((n, k))
    proposal = np.empty((n, k))
    w = np.empty((n, k))
    loss = np.empty(n)
    grad = probs / k
    n_clamped = 0
    for i in range(n):
        m = -np.inf
        for s in range(k):
            y = labels[i, s]
            fb = 1.0 if y == gold[i] else -1.0
            feedback[i, s] = fb
            proposal[i, s] = q_hat[i, y]
            lw = beta * fb - math.log(q_hat[i, y])
            w[i, s] = lw
            if lw > m:
                m = lw
        tot = 0.0
        for s in range(k):
            w[i, s] = math.exp(w[i, s] - m)
            tot += w[i, s]
        row_loss = 0.0
        for s in range(k):
            w[i, s] /= tot
            y = labels[i, s]
            p = probs[i, y]
            if p > 0.0:
                row_loss -= w[i, s] * math.log(p)
            else:
                row_loss -= w[i, s] * LOG_FLOOR
                n_clamped += 1
            grad[i, y] -= w[i, s] / k
        loss[i] = row_loss / k
    return grad, loss, labels, feedback, w, proposal, n_clamped
