"""Numeric kernels for the dual-head encoder scenario.

The forward pass, joint BCE+MSE loss, and backward pass are the hot inner
loops of training. Each has two implementations: a pure-numpy one and a
numba @njit one. The active backend is picked at import time from the
CRISIS_TRIAGE_NUMBA environment variable ("0"/"false"/"off" forces numpy,
"1" requires numba, unset uses numba when importable) and can be switched
at runtime with use_numba(). Both backends implement the same math; see
benchmarks/bench_kernels.py for a timing comparison.

Loss for one example with IT probabilities p (length K), priority score q,
binary targets y and score target s:

    L = w_it * mean_k BCE(clamp(p_k), y_k) + w_pri * (q - s)^2

with probabilities clamped to [1e-7, 1 - 1e-7] before the log. Batch loss
is the mean of per-example losses.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ValidationError

# BCE clamp keeping the log finite.
PROB_CLAMP_EPS = 1e-7
# Keeps sigmoid outputs strictly inside (0, 1) even at saturation.
SIGMOID_CLIP = 1e-12

_ENV_FLAG = "CRISIS_TRIAGE_NUMBA"


def _env_wants_numba() -> bool | None:
    raw = os.environ.get(_ENV_FLAG)
    if raw is None:
        return None
    if raw.strip().lower() in ("0", "false", "off", "no", "numpy"):
        return False
    return True


NUMBA_AVAILABLE = False
if _env_wants_numba() is not False:
    try:
        from numba import njit

        NUMBA_AVAILABLE = True
    except ImportError:
        NUMBA_AVAILABLE = False

if _env_wants_numba() is True and not NUMBA_AVAILABLE:
    raise ImportError(f"{_ENV_FLAG}=1 but numba is not importable")


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------

def _sigmoid_np(z):
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _head_forward_np(pooled, w_it, b_it, w_pri, b_pri):
    it_probs = _sigmoid_np(pooled @ w_it + b_it)
    pri_scores = _sigmoid_np(pooled @ w_pri + b_pri)
    np.clip(it_probs, SIGMOID_CLIP, 1.0 - SIGMOID_CLIP, out=it_probs)
    np.clip(pri_scores, SIGMOID_CLIP, 1.0 - SIGMOID_CLIP, out=pri_scores)
    return it_probs, pri_scores


def _batch_loss_np(it_probs, pri_scores, y_it, y_score, weight_it, weight_pri):
    p = np.clip(it_probs, PROB_CLAMP_EPS, 1.0 - PROB_CLAMP_EPS)
    bce = -(y_it * np.log(p) + (1.0 - y_it) * np.log(1.0 - p))
    per_example = weight_it * bce.mean(axis=1) + weight_pri * (pri_scores - y_score) ** 2
    return float(per_example.mean())


def _head_deltas_np(it_probs, pri_scores, y_it, y_score, weight_it, weight_pri):
    n, k = it_probs.shape
    inside = (it_probs > PROB_CLAMP_EPS) & (it_probs < 1.0 - PROB_CLAMP_EPS)
    d_logits = np.where(inside, it_probs - y_it, 0.0) * (weight_it / (n * k))
    d_pri = (2.0 * weight_pri / n) * (pri_scores - y_score) * pri_scores * (1.0 - pri_scores)
    return d_logits, d_pri


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------

if NUMBA_AVAILABLE:

    @njit(cache=True)
    def _head_forward_nb(pooled, w_it, b_it, w_pri, b_pri):
        n = pooled.shape[0]
        k = w_it.shape[1]
        it_probs = np.dot(pooled, w_it)
        pri_scores = np.dot(pooled, w_pri)
        lo = SIGMOID_CLIP
        hi = 1.0 - SIGMOID_CLIP
        for i in range(n):
            for j in range(k):
                z = it_probs[i, j] + b_it[j]
                if z >= 0.0:
                    p = 1.0 / (1.0 + np.exp(-z))
                else:
                    ez = np.exp(z)
                    p = ez / (1.0 + ez)
                it_probs[i, j] = min(max(p, lo), hi)
            z = pri_scores[i] + b_pri
            if z >= 0.0:
                q = 1.0 / (1.0 + np.exp(-z))
            else:
                ez = np.exp(z)
                q = ez / (1.0 + ez)
            pri_scores[i] = min(max(q, lo), hi)
        return it_probs, pri_scores

    @njit(cache=True)
    def _batch_loss_nb(it_probs, pri_scores, y_it, y_score, weight_it, weight_pri):
        n, k = it_probs.shape
        lo = PROB_CLAMP_EPS
        hi = 1.0 - PROB_CLAMP_EPS
        total = 0.0
        for i in range(n):
            bce = 0.0
            for j in range(k):
                p = min(max(it_probs[i, j], lo), hi)
                bce += -(y_it[i, j] * np.log(p) + (1.0 - y_it[i, j]) * np.log(1.0 - p))
            diff = pri_scores[i] - y_score[i]
            total += weight_it * bce / k + weight_pri * diff * diff
        return total / n

    @njit(cache=True)
    def _head_deltas_nb(it_probs, pri_scores, y_it, y_score, weight_it, weight_pri):
        n, k = it_probs.shape
        lo = PROB_CLAMP_EPS
        hi = 1.0 - PROB_CLAMP_EPS
        d_logits = np.zeros((n, k))
        d_pri = np.empty(n)
        it_scale = weight_it / (n * k)
        pri_scale = 2.0 * weight_pri / n
        for i in range(n):
            for j in range(k):
                p = it_probs[i, j]
                if lo < p < hi:
                    d_logits[i, j] = (p - y_it[i, j]) * it_scale
            q = pri_scores[i]
            d_pri[i] = pri_scale * (q - y_score[i]) * q * (1.0 - q)
        return d_logits, d_pri


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

_use_numba = NUMBA_AVAILABLE


def use_numba(enabled: bool) -> None:
    """Switch between the numba and pure-numpy kernel backends."""
    global _use_numba
    if enabled and not NUMBA_AVAILABLE:
        raise ValidationError("numba backend requested but numba is not available")
    _use_numba = bool(enabled)


def active_backend() -> str:
    return "numba" if _use_numba else "numpy"


def head_forward(pooled, w_it, b_it, w_pri, b_pri):
    """Sigmoid IT probabilities and priority scores for a batch.

    pooled is (n, d); returns (it_probs (n, K), pri_scores (n,)).
    """
    if pooled.shape[1] != w_it.shape[0]:
        raise ValidationError(
            f"encoder dimension {pooled.shape[1]} does not match head dimension {w_it.shape[0]}"
        )
    pooled = np.ascontiguousarray(pooled, dtype=np.float64)
    if _use_numba:
        return _head_forward_nb(pooled, w_it, b_it, w_pri, float(b_pri))
    return _head_forward_np(pooled, w_it, b_it, w_pri, float(b_pri))


def batch_loss(it_probs, pri_scores, y_it, y_score, weight_it=1.0, weight_pri=1.0):
    """Mean multitask loss over a batch of forward outputs."""
    if it_probs.shape != y_it.shape:
        raise ValidationError(
            f"probability shape {it_probs.shape} does not match target shape {y_it.shape}"
        )
    if _use_numba:
        return _batch_loss_nb(it_probs, pri_scores, y_it, y_score, weight_it, weight_pri)
    return _batch_loss_np(it_probs, pri_scores, y_it, y_score, weight_it, weight_pri)


def head_backward(pooled, w_it, w_pri, it_probs, pri_scores, y_it, y_score,
                  weight_it=1.0, weight_pri=1.0):
    """Gradients of batch_loss.

    Returns (g_w_it, g_b_it, g_w_pri, g_b_pri, g_pooled), where g_pooled is
    the gradient flowing into the encoder's pooled output.
    """
    pooled = np.ascontiguousarray(pooled, dtype=np.float64)
    if _use_numba:
        d_logits, d_pri = _head_deltas_nb(
            it_probs, pri_scores, y_it, y_score, weight_it, weight_pri
        )
    else:
        d_logits, d_pri = _head_deltas_np(
            it_probs, pri_scores, y_it, y_score, weight_it, weight_pri
        )
    g_w_it = pooled.T @ d_logits
    g_b_it = d_logits.sum(axis=0)
    g_w_pri = pooled.T @ d_pri
    g_b_pri = float(d_pri.sum())
    g_pooled = d_logits @ w_it.T + np.outer(d_pri, w_pri)
    return g_w_it, g_b_it, g_w_pri, g_b_pri, g_pooled
