"""Small dense networks with hand-written reverse-mode gradients.

Everything runs in float64 so finite-difference checks are meaningful.
Parameters live in a flat list ``[W0, b0, W1, b1, ...]``; optimizers and
checkpoints operate on that list.
"""
from __future__ import annotations

import numpy as np


class MLP:
    """Fully connected net: tanh hidden layers, linear (or tanh) output."""

    def __init__(self, sizes, rng: np.random.Generator, out_activation: str | None = None,
                 out_scale: float = 1.0):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = [int(s) for s in sizes]
        self.out_activation = out_activation
        self.params: list[np.ndarray] = []
        n_layers = len(self.sizes) - 1
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            scale = np.sqrt(1.0 / fan_in)
            if i == n_layers - 1:
                scale *= out_scale
            self.params.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.params.append(np.zeros(fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def num_params(self) -> int:
        return sum(p.size for p in self.params)

    def forward(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        acts = [x]
        h = x
        for i in range(self.n_layers):
            z = h @ self.params[2 * i] + self.params[2 * i + 1]
            last = i == self.n_layers - 1
            if not last or self.out_activation == "tanh":
                h = np.tanh(z)
            else:
                h = z
            acts.append(h)
        return h, acts

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, acts, dy: np.ndarray):
        """Return (param grads, grad wrt input) for upstream gradient ``dy``."""
        grads = [None] * len(self.params)
        g = np.asarray(dy, dtype=np.float64)
        for i in reversed(range(self.n_layers)):
            out = acts[i + 1]
            last = i == self.n_layers - 1
            if not last or self.out_activation == "tanh":
                g = g * (1.0 - out * out)
            inp = acts[i]
            if inp.ndim == 1:
                grads[2 * i] = np.outer(inp, g)
                grads[2 * i + 1] = g.copy()
            else:
                grads[2 * i] = inp.T @ g
                grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.params[2 * i].T
        return grads, g

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.num_params():
            raise ValueError(f"expected {self.num_params()} values, got {flat.size}")
        i = 0
        for p in self.params:
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size

    def copy(self) -> "MLP":
        new = MLP.__new__(MLP)
        new.sizes = list(self.sizes)
        new.out_activation = self.out_activation
        new.params = [p.copy() for p in self.params]
        return new

    def soft_update_from(self, online: "MLP", tau: float) -> None:
        for tp, op in zip(self.params, online.params):
            tp *= 1.0 - tau
            tp += tau * op

    def descriptor(self) -> dict:
        return {"sizes": self.sizes, "out_activation": self.out_activation}

    @classmethod
    def from_descriptor(cls, desc: dict, flat=None) -> "MLP":
        net = cls(desc["sizes"], np.random.default_rng(0), out_activation=desc.get("out_activation"))
        if flat is not None:
            net.set_flat(flat)
        return net


def flatten(arrays) -> np.ndarray:
    return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, max_grad_norm=None):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads) -> None:
        if self.max_grad_norm is not None:
            norm = global_norm(grads)
            if norm > self.max_grad_norm:
                grads = [g * (self.max_grad_norm / (norm + 1e-12)) for g in grads]
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def finite_difference_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of scalar ``f`` at flat point ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2.0 * h)
    return g


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))
