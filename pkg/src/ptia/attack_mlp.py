#!/usr/bin/env python3
"""
Attack Classifier

A d -> 64 -> 32 -> 8 -> 2 multilayer perceptron deciding whether a feature
vector comes from a visited POI. Output column 0 is the visited probability
and column 1 its opposite; training minimizes

    L = -sum_n ( y_n log a1_n + (1 - y_n) log a0_n )

where y_n marks "not visited". AttackSample labels use 1 for visited, so
the loss is fed ``1 - label``.
"""

import hashlib
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy.special import log_softmax, softmax

from src.config.defaults import ATTACK_BATCH_SIZE, ATTACK_EPOCHS, ATTACK_HIDDEN, ATTACK_LEARNING_RATE
from src.recsys.optim import Sgd
from src.recsys.snapshot import MLP_MAGIC, read_arrays, write_arrays
from src.utils.errors import DivergenceError, InputError

VISITED = 0
NOT_VISITED = 1


@dataclass(frozen=True)
class AttackSample:
    """One training example for the attack classifier (label 1 = visited)."""

    input: np.ndarray
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise InputError(f"label must be 0 or 1, got {self.label}")
        if not np.all(np.isfinite(self.input)):
            raise InputError("attack sample feature is not finite")


@dataclass
class AttackMlp:
    """
    Attack classifier weights plus the input standardization it was fit with.

    Attributes:
        weights (list): Matrices of shapes (d,64), (64,32), (32,8), (8,2)
        biases (list): Vectors of widths 64, 32, 8, 2
        input_shift (numpy.ndarray): Per-feature mean subtracted from inputs
        input_scale (numpy.ndarray): Per-feature scale inputs are divided by
    """

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    input_shift: np.ndarray
    input_scale: np.ndarray

    @classmethod
    def initialize(cls, d, rng, hidden=ATTACK_HIDDEN):
        """He-normal weights, zero biases, identity standardization."""
        widths = (d,) + tuple(hidden) + (2,)
        weights = [rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
                   for fan_in, fan_out in zip(widths[:-1], widths[1:])]
        biases = [np.zeros(w) for w in widths[1:]]
        return cls(weights, biases, np.zeros(d), np.ones(d))

    @property
    def input_dim(self):
        return self.weights[0].shape[0]

    @property
    def hidden_widths(self):
        return tuple(w.shape[1] for w in self.weights[:-1])

    def parameters(self):
        return self.weights + self.biases

    def copy(self):
        return AttackMlp([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                         self.input_shift.copy(), self.input_scale.copy())

    def checksum(self):
        digest = hashlib.sha256()
        for a in self.parameters() + [self.input_shift, self.input_scale]:
            digest.update(a.tobytes())
        return digest.hexdigest()

    def _forward(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.input_dim:
            raise InputError(f"attack model expects {self.input_dim} features, got {x.shape[1]}")
        activations = [(x - self.input_shift) / self.input_scale]
        pre = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = activations[-1] @ w + b
            pre.append(z)
            activations.append(z if i == len(self.weights) - 1 else np.maximum(z, 0.0))
        return activations[-1], (activations, pre)

    def predict(self, x):
        """Class probabilities, shape (n, 2): column 0 visited, column 1 not visited."""
        logits, _ = self._forward(x)
        return softmax(logits, axis=1)

    def visited_probability(self, x):
        return self.predict(x)[:, VISITED]

    def _backward(self, cache, d_logits):
        activations, pre = cache
        d_weights = [None] * len(self.weights)
        d_biases = [None] * len(self.biases)
        d = d_logits
        for i in range(len(self.weights) - 1, -1, -1):
            d_weights[i] = activations[i].T @ d
            d_biases[i] = d.sum(axis=0)
            d = d @ self.weights[i].T
            if i > 0:
                d = d * (pre[i - 1] > 0)
        return d_weights, d_biases, d / self.input_scale

    def visited_probability_gradient(self, x):
        """
        Visited probability and its gradient with respect to the raw input.

        Returns:
            tuple: (a0 of shape (n,), d a0 / d x of shape (n, d))
        """
        logits, cache = self._forward(x)
        probs = softmax(logits, axis=1)
        a0 = probs[:, VISITED]
        # d a0 / d logits = a0 * (onehot(0) - probs)
        d_logits = -a0[:, None] * probs
        d_logits[:, VISITED] += a0
        _, _, d_x = self._backward(cache, d_logits)
        return a0, d_x

    def save(self, path, meta=None):
        write_arrays(path, MLP_MAGIC, self.parameters() + [self.input_shift, self.input_scale], meta=meta)

    @classmethod
    def load(cls, path):
        arrays, _ = read_arrays(path, MLP_MAGIC)
        layers = (len(arrays) - 2) // 2
        return cls(arrays[:layers], arrays[layers:2 * layers], arrays[-2], arrays[-1])


def _as_arrays(samples):
    x = np.stack([s.input for s in samples]).astype(float)
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return x, labels


def ptia_loss(mlp, x, labels):
    """
    Binary cross-entropy of the attack classifier, summed over samples.

    Returns:
        tuple: (loss, weight gradients, bias gradients)
    """
    logits, cache = mlp._forward(x)
    classes = 1 - np.asarray(labels)
    log_probs = log_softmax(logits, axis=1)
    loss = float(-log_probs[np.arange(len(classes)), classes].sum())
    d_logits = np.exp(log_probs)
    d_logits[np.arange(len(classes)), classes] -= 1.0
    d_weights, d_biases, _ = mlp._backward(cache, d_logits)
    return loss, d_weights, d_biases


def fit_attack_mlp(mlp, x, labels, epochs, learning_rate, rng, batch_size=ATTACK_BATCH_SIZE):
    """
    Run SGD epochs on an existing classifier in place.

    Returns:
        float: Mean per-sample loss of the last epoch
    """
    optimizer = Sgd(learning_rate)
    mean = 0.0
    for epoch in range(epochs):
        order = rng.permutation(len(labels))
        total = 0.0
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]
            loss, d_weights, d_biases = ptia_loss(mlp, x[batch], labels[batch])
            if not np.isfinite(loss):
                raise DivergenceError("attacker", epoch)
            total += loss
            optimizer.step(mlp.parameters(), [g / len(batch) for g in d_weights + d_biases])
        mean = total / len(labels)
    return mean


def train_attack_mlp(samples, seed, epochs=ATTACK_EPOCHS, learning_rate=ATTACK_LEARNING_RATE):
    """
    Train a fresh attack classifier.

    Inputs are standardized with the training set's per-feature mean and
    standard deviation, which are stored on the returned model.

    Args:
        samples (list): AttackSample objects with both labels present
        seed (int): Initialization and shuffling seed
        epochs (int): SGD epochs
        learning_rate (float): SGD step

    Returns:
        AttackMlp: Trained classifier
    """
    x, labels = _as_arrays(samples)
    if set(labels.tolist()) != {0, 1}:
        raise InputError("attack training needs both visited and non-visited samples")
    rng = np.random.default_rng(seed)
    mlp = AttackMlp.initialize(x.shape[1], rng)
    mlp.input_shift = x.mean(axis=0)
    scale = x.std(axis=0)
    mlp.input_scale = np.where(scale > 1e-12, scale, 1.0)
    fit_attack_mlp(mlp, x, labels, epochs, learning_rate, rng)
    return mlp
