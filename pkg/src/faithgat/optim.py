"""Optimizers over lists of parameter arrays (updated in place)."""

import numpy as np


class Adam:
    """Adam with optional L2 weight decay added to the raw gradient."""

    def __init__(self, shapes, lr=0.01, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if self.weight_decay:
                g = g + self.weight_decay * p
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Sgd:
    """Plain gradient descent, same call surface as Adam."""

    def __init__(self, shapes, lr=0.01, weight_decay=0.0):
        self.lr = lr
        self.weight_decay = weight_decay

    def step(self, params, grads):
        for p, g in zip(params, grads):
            if self.weight_decay:
                g = g + self.weight_decay * p
            p -= self.lr * g
