"""Plain-numpy multilayer perceptron with exact backpropagation and Adam.

Kept free of any autograd dependency so gradients can be checked against
central finite differences and checkpoints round-trip bit exactly.
"""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np


class Mlp:
    """Fully connected net, tanh hidden activations, linear output.

    Parameters live in `weights` / `biases` lists (layer order).  forward
    returns the output batch and a cache; backward consumes the cache and
    the gradient of a scalar loss w.r.t. the output and returns gradients
    for every parameter plus the input.
    """

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator,
                 init_scale: float = 1.0) -> None:
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for n_in, n_out in zip(self.sizes, self.sizes[1:]):
            scale = init_scale / np.sqrt(n_in)
            self.weights.append(rng.normal(0.0, scale, size=(n_in, n_out)))
            self.biases.append(np.zeros(n_out))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, list]:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {x.shape[1]} != {self.sizes[0]}")
        cache = [x]
        a = x
        for i in range(self.n_layers):
            z = a @ self.weights[i] + self.biases[i]
            a = np.tanh(z) if i < self.n_layers - 1 else z
            cache.append(a)
        return a, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: list, grad_out: np.ndarray) \
            -> Tuple[List[np.ndarray], List[np.ndarray], np.ndarray]:
        """Gradients (dW list, db list, dx) given d(loss)/d(output)."""
        grad = np.atleast_2d(np.asarray(grad_out, dtype=np.float64))
        d_w = [np.empty(0)] * self.n_layers
        d_b = [np.empty(0)] * self.n_layers
        for i in reversed(range(self.n_layers)):
            a_prev = cache[i]
            if i < self.n_layers - 1:
                grad = grad * (1.0 - cache[i + 1] ** 2)  # through tanh
            d_w[i] = a_prev.T @ grad
            d_b[i] = grad.sum(axis=0)
            grad = grad @ self.weights[i].T
        return d_w, d_b, grad

    def parameters(self) -> List[np.ndarray]:
        return self.weights + self.biases

    def copy_from(self, other: "Mlp") -> None:
        if self.sizes != other.sizes:
            raise ValueError("size mismatch in parameter copy")
        for dst, src in zip(self.parameters(), other.parameters()):
            dst[...] = src


class Adam:
    """Adam over a fixed list of parameter arrays (updated in place)."""

    def __init__(self, params: List[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8) -> None:
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: List[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError("gradient list length mismatch")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
