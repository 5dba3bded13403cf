#!/usr/bin/env python3
"""
Attention-Pooling Recommender

A compact sequential POI recommender: token vectors are POI embeddings plus
position rows, the last token queries every token, the attention-weighted
sum of token vectors is the final feature, and POI scores are the product of
the embedding table with that feature (tied output layer).

Gradients are derived by hand; ``backward_from`` accepts upstream gradients
on the scores and on the final feature so the same pass serves the local
objective, distillation, shadow fitting and the adversarial defense.
"""

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import log_softmax, softmax

from src.config.defaults import INIT_MEAN, INIT_STD, MAX_SEQ_LEN, SUPPORTED_DIMS
from src.utils.errors import InputError


@dataclass(frozen=True)
class InitSpec:
    """Initial distribution shared by every model of an experiment."""

    mean: float = INIT_MEAN
    std: float = INIT_STD
    seed: int = 0


@dataclass
class ModelParams:
    """
    One recommender's parameters.

    The same type doubles as a gradient record (all arrays shaped alike).
    """

    embeddings: np.ndarray
    query_weights: np.ndarray
    key_weights: np.ndarray
    position_weights: np.ndarray

    ARRAY_NAMES = ("embeddings", "query_weights", "key_weights", "position_weights")

    @property
    def poi_count(self):
        return self.embeddings.shape[0]

    @property
    def latent_dim(self):
        return self.embeddings.shape[1]

    def arrays(self):
        """Parameter arrays in a fixed order."""
        return [getattr(self, name) for name in self.ARRAY_NAMES]

    def copy(self):
        return ModelParams(*(a.copy() for a in self.arrays()))

    def zeros_like(self):
        return ModelParams(*(np.zeros_like(a) for a in self.arrays()))

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def checksum(self):
        """Cheap fingerprint used to assert a model was left untouched."""
        digest = hashlib.sha256()
        for a in self.arrays():
            digest.update(a.tobytes())
        return digest.hexdigest()


@dataclass
class ForwardOutput:
    """
    Result of one forward pass.

    Attributes:
        feature: Final feature (attention-pooled token vector), shape (d,)
        scores: Logits over all POIs
        probs: Softmax of ``scores`` (the soft decision)
    """

    feature: np.ndarray
    scores: np.ndarray
    probs: np.ndarray
    # Intermediate values kept for the backward pass
    ids: np.ndarray = field(repr=False, default=None)
    tokens: np.ndarray = field(repr=False, default=None)
    query: np.ndarray = field(repr=False, default=None)
    keys: np.ndarray = field(repr=False, default=None)
    attention: np.ndarray = field(repr=False, default=None)
    hidden: np.ndarray = field(repr=False, default=None)
    mask: Optional[np.ndarray] = field(repr=False, default=None)


def init_model(poi_count, d, init_spec):
    """
    Draw a fresh model from the initial distribution.

    Args:
        poi_count (int): Number of POIs
        d (int): Latent dimension, one of SUPPORTED_DIMS
        init_spec (InitSpec): Distribution and seed

    Returns:
        ModelParams: Every entry i.i.d. normal(mean, std)
    """
    if d not in SUPPORTED_DIMS:
        raise InputError(f"unsupported latent dimension {d}; expected one of {SUPPORTED_DIMS}")
    if poi_count < 1:
        raise InputError("poi_count must be positive")
    rng = np.random.default_rng(init_spec.seed)
    draw = lambda *shape: rng.normal(init_spec.mean, init_spec.std, size=shape)
    return ModelParams(
        embeddings=draw(poi_count, d),
        query_weights=draw(d, d),
        key_weights=draw(d, d),
        position_weights=draw(MAX_SEQ_LEN, d),
    )


def _ids_of(prefix):
    ids = getattr(prefix, "poi_ids", prefix)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        raise InputError("empty prefix")
    if ids.size > MAX_SEQ_LEN:
        raise InputError(f"prefix longer than {MAX_SEQ_LEN}")
    return ids


def forward(params, prefix, mask=None):
    """
    Score every POI as the next visit after ``prefix``.

    Args:
        params (ModelParams): Model
        prefix: CheckinSequence or sequence of POI ids, 1..MAX_SEQ_LEN long
        mask (numpy.ndarray, optional): Dropout multiplier on the feature

    Returns:
        ForwardOutput: Feature, scores and probabilities
    """
    ids = _ids_of(prefix)
    n = ids.size
    tokens = params.embeddings[ids] + params.position_weights[:n]
    query = tokens[-1] @ params.query_weights
    keys = tokens @ params.key_weights
    attention = softmax(keys @ query / np.sqrt(params.latent_dim))
    feature = attention @ tokens
    hidden = feature if mask is None else feature * mask
    scores = params.embeddings @ hidden
    return ForwardOutput(feature, scores, softmax(scores), ids, tokens, query, keys, attention, hidden, mask)


def backward_from(params, out, d_scores=None, d_feature=None, grads=None):
    """
    Accumulate parameter gradients given upstream gradients.

    Args:
        params (ModelParams): Model used for ``out``
        out (ForwardOutput): Cached forward pass
        d_scores (numpy.ndarray, optional): dLoss/dscores
        d_feature (numpy.ndarray, optional): dLoss/dfeature (pre-dropout)
        grads (ModelParams, optional): Accumulator, created if missing

    Returns:
        ModelParams: The accumulator
    """
    if grads is None:
        grads = params.zeros_like()
    d = params.latent_dim
    d_feat = np.zeros(d) if d_feature is None else np.array(d_feature, dtype=float)

    if d_scores is not None:
        grads.embeddings += np.outer(d_scores, out.hidden)
        d_hidden = params.embeddings.T @ d_scores
        d_feat += d_hidden if out.mask is None else d_hidden * out.mask

    # feature = attention @ tokens
    d_tokens = np.outer(out.attention, d_feat)
    d_att = out.tokens @ d_feat
    d_logits = out.attention * (d_att - out.attention @ d_att) / np.sqrt(d)

    # logits_j = keys_j . query
    d_query = out.keys.T @ d_logits
    d_keys = np.outer(d_logits, out.query)
    grads.key_weights += out.tokens.T @ d_keys
    d_tokens += d_keys @ params.key_weights.T
    grads.query_weights += np.outer(out.tokens[-1], d_query)
    d_tokens[-1] += params.query_weights @ d_query

    np.add.at(grads.embeddings, out.ids, d_tokens)
    grads.position_weights[:out.ids.size] += d_tokens
    return grads


def _check_trainable(x):
    ids = getattr(x, "poi_ids", x)
    if len(ids) < 2:
        raise InputError("sequence needs at least 2 POIs to have a next-POI target")
    return ids


def prefix_loss(out, target):
    """Cross-entropy of predicting ``target`` from a forward output."""
    return float(-log_softmax(out.scores)[target])


def local_loss(params, x):
    """
    Mean next-POI cross-entropy over every prefix of ``x``.

    Predictions are made from {p_1}, {p_1, p_2}, ..., {p_1..p_{M-1}} with
    targets p_2..p_M.

    Args:
        params (ModelParams): Model
        x (CheckinSequence): Sequence of length >= 2

    Returns:
        float: Non-negative loss
    """
    ids = _check_trainable(x)
    losses = [prefix_loss(forward(params, ids[:t]), ids[t]) for t in range(1, len(ids))]
    return float(np.mean(losses))


def backward(params, x):
    """
    Analytic gradient of ``local_loss`` with respect to every parameter.

    Returns:
        ModelParams: Gradient record shaped like ``params``
    """
    ids = _check_trainable(x)
    grads = params.zeros_like()
    steps = len(ids) - 1
    for t in range(1, len(ids)):
        out = forward(params, ids[:t])
        d_scores = out.probs.copy()
        d_scores[ids[t]] -= 1.0
        backward_from(params, out, d_scores / steps, grads=grads)
    return grads

