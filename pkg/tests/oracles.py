"""
Independent re-derivations used to check the production code.

Nothing here shares code with ``src``: the recommender forward pass is
written out with explicit loops and gradients are taken numerically.
"""

import math

import numpy as np


def numeric_gradient(loss, array, index, eps=1e-6):
    """Central finite difference of ``loss()`` with respect to ``array[index]``."""
    original = array[index]
    array[index] = original + eps
    up = loss()
    array[index] = original - eps
    down = loss()
    array[index] = original
    return (up - down) / (2.0 * eps)


def reference_scores(params, ids):
    """Next-POI logits computed token by token."""
    d = params.embeddings.shape[1]
    tokens = [params.embeddings[p] + params.position_weights[i] for i, p in enumerate(ids)]
    query = tokens[-1] @ params.query_weights
    logits = [float((t @ params.key_weights) @ query) / math.sqrt(d) for t in tokens]
    top = max(logits)
    weights = [math.exp(v - top) for v in logits]
    total = sum(weights)
    feature = sum(w / total * t for w, t in zip(weights, tokens))
    return np.array([float(row @ feature) for row in params.embeddings])


def reference_local_loss(params, ids):
    """Mean cross-entropy of every prefix, from ``reference_scores``."""
    losses = []
    for t in range(1, len(ids)):
        scores = reference_scores(params, ids[:t])
        top = scores.max()
        log_norm = top + math.log(np.exp(scores - top).sum())
        losses.append(log_norm - scores[ids[t]])
    return float(np.mean(losses))
