"""Minimal dense networks with manual backpropagation.

Small multilayer perceptrons with tanh hidden layers and a linear output,
trained with the Adam optimizer.  Inverted dropout can be applied to the
hidden activations; masks are drawn externally so a rollout and the update
pass that learns from it can share the exact same thinned network.
"""

from __future__ import annotations

import numpy as np


class Mlp:
    """Fully connected tanh network with a linear output layer."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        self.weights = weights
        self.biases = biases

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple([self.weights[0].shape[0]] + [w.shape[1] for w in self.weights])

    @property
    def n_hidden(self) -> int:
        return len(self.weights) - 1

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def forward(self, x: np.ndarray, masks: list[np.ndarray] | None = None,
                drop_rate: float = 0.0):
        """Forward pass returning the output and a backprop cache.

        ``masks`` holds one binary array per hidden layer (matching the
        activation shape); survivors are rescaled by ``1 / (1 - drop_rate)``.
        """
        h = np.asarray(x, dtype=float)
        inputs = [h]
        tanh_acts = []
        n_layers = len(self.weights)
        for k in range(n_layers):
            z = h @ self.weights[k] + self.biases[k]
            if k == n_layers - 1:
                h = z
            else:
                a = np.tanh(z)
                tanh_acts.append(a)
                if masks is not None:
                    a = a * masks[k] / (1.0 - drop_rate)
                h = a
                inputs.append(h)
        cache = {"inputs": inputs, "tanh": tanh_acts, "masks": masks,
                 "drop_rate": drop_rate}
        return h, cache

    def backward(self, cache, grad_out: np.ndarray):
        """Gradients of the cached forward pass w.r.t. weights and biases."""
        inputs = cache["inputs"]
        tanh_acts = cache["tanh"]
        masks = cache["masks"]
        drop_rate = cache["drop_rate"]
        n_layers = len(self.weights)
        grads_w = [None] * n_layers
        grads_b = [None] * n_layers
        grad = np.asarray(grad_out, dtype=float)
        for k in reversed(range(n_layers)):
            x = inputs[k]
            if grad.ndim == 1:
                grads_w[k] = np.outer(x, grad)
                grads_b[k] = grad.copy()
            else:
                grads_w[k] = x.T @ grad
                grads_b[k] = grad.sum(axis=0)
            if k > 0:
                grad = grad @ self.weights[k].T
                if masks is not None:
                    grad = grad * masks[k - 1] / (1.0 - drop_rate)
                grad = grad * (1.0 - tanh_acts[k - 1] ** 2)
        return grads_w, grads_b


def init_mlp(sizes: tuple[int, ...], rng: np.random.Generator,
             final_scale: float = 1.0) -> Mlp:
    """Gaussian fan-in initialization; the output layer can be shrunk."""
    weights, biases = [], []
    for k in range(len(sizes) - 1):
        scale = 1.0 / np.sqrt(sizes[k])
        if k == len(sizes) - 2:
            scale *= final_scale
        weights.append(rng.normal(0.0, scale, size=(sizes[k], sizes[k + 1])))
        biases.append(np.zeros(sizes[k + 1]))
    return Mlp(weights, biases)


def draw_dropout_masks(net: Mlp, rate: float, rng: np.random.Generator,
                       batch: int | None = None) -> list[np.ndarray]:
    """One binary keep-mask per hidden layer."""
    shapes = [(w.shape[1],) if batch is None else (batch, w.shape[1])
              for w in net.weights[:-1]]
    return [(rng.random(shape) >= rate).astype(float) for shape in shapes]


def apply_dropout(activations: np.ndarray, rate: float, mode: str,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Inverted dropout on a vector of activations.

    Train mode zeroes each element independently with probability ``rate``
    and rescales survivors by ``1 / (1 - rate)`` so the expectation is
    preserved; eval mode returns the input unchanged.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    x = np.asarray(activations, dtype=float)
    if mode == "eval" or rate == 0.0:
        return x.copy()
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    mask = rng.random(x.shape) >= rate
    return x * mask / (1.0 - rate)


class Adam:
    """Adaptive-moment gradient descent over a list of parameter arrays."""

    def __init__(self, params: list[np.ndarray], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Update ``params`` in place from matching ``grads``."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def flatten_arrays(arrays: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([a.ravel() for a in arrays])


def unflatten_arrays(vec: np.ndarray, like: list[np.ndarray]) -> list[np.ndarray]:
    out = []
    k = 0
    for a in like:
        out.append(vec[k:k + a.size].reshape(a.shape))
        k += a.size
    return out
