#!/usr/bin/env python3
"""
Optimizers

In-place update rules over lists of numpy arrays. Local recommender
training uses plain SGD; the attacker's shadow fitting uses Adam because
soft-decision gradients are tiny and badly scaled.
"""

import numpy as np


class Sgd:
    """Plain stochastic gradient descent."""

    def __init__(self, learning_rate):
        self.learning_rate = learning_rate

    def step(self, params, grads):
        """
        Apply one update.

        Args:
            params (list): Arrays updated in place
            grads (list): Gradients aligned with ``params``
        """
        for p, g in zip(params, grads):
            p -= self.learning_rate * g


class Adam:
    """Adam with bias correction."""

    def __init__(self, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        correction1 = 1 - self.beta1 ** self.t
        correction2 = 1 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
