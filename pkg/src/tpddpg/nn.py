"""Small fully connected networks with manual backprop, plus Adam."""
from __future__ import annotations

import numpy as np


class Mlp:
    """ReLU hidden layers; output activation ``"tanh"`` or ``"linear"``.

    Parameters are stored as ``[W1, b1, W2, b2, ...]`` with ``W`` of shape
    ``(fan_in, fan_out)`` so a batch ``x`` of shape ``(B, fan_in)`` maps to
    ``x @ W + b``.
    """

    def __init__(self, sizes, out_act: str = "linear", rng: np.random.Generator | None = None,
                 final_scale: float = 1.0):
        if out_act not in ("tanh", "linear"):
            raise ValueError(f"unknown output activation {out_act!r}")
        self.sizes = list(sizes)
        self.out_act = out_act
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = []
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            if i == len(self.sizes) - 2:
                bound *= final_scale
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.params.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def forward(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"expected input width {self.sizes[0]}, got {x.shape[1]}")
        cache = [x]
        h = x
        for i in range(self.n_layers):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            z = h @ W + b
            if i < self.n_layers - 1:
                h = np.maximum(z, 0.0)
            elif self.out_act == "tanh":
                h = np.tanh(z)
            else:
                h = z
            cache.append(h)
        return h, cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, dy):
        """Gradients of ``sum(dy * y)`` w.r.t. the parameters and the input."""
        grads = [None] * len(self.params)
        out = cache[-1]
        dz = dy * (1.0 - out ** 2) if self.out_act == "tanh" else dy
        for i in reversed(range(self.n_layers)):
            h_in = cache[i]
            grads[2 * i] = h_in.T @ dz
            grads[2 * i + 1] = dz.sum(axis=0)
            dh = dz @ self.params[2 * i].T
            if i > 0:
                dz = dh * (cache[i] > 0)
        return grads, dh

    def copy(self) -> "Mlp":
        clone = Mlp.__new__(Mlp)
        clone.sizes = list(self.sizes)
        clone.out_act = self.out_act
        clone.params = [p.copy() for p in self.params]
        return clone

    def to_dict(self) -> dict:
        return {"sizes": self.sizes, "out_act": self.out_act,
                "params": [p.tolist() for p in self.params]}

    @classmethod
    def from_dict(cls, d) -> "Mlp":
        net = cls.__new__(cls)
        net.sizes = list(d["sizes"])
        net.out_act = d["out_act"]
        net.params = [np.asarray(p, dtype=float) for p in d["params"]]
        return net


class Adam:
    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        """In-place descent step along ``grads``."""
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def to_dict(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
                "t": self.t, "m": [a.tolist() for a in self.m], "v": [a.tolist() for a in self.v]}

    @classmethod
    def from_dict(cls, d) -> "Adam":
        opt = cls.__new__(cls)
        opt.lr, opt.beta1, opt.beta2, opt.eps = d["lr"], d["beta1"], d["beta2"], d["eps"]
        opt.t = d["t"]
        opt.m = [np.asarray(a, dtype=float) for a in d["m"]]
        opt.v = [np.asarray(a, dtype=float) for a in d["v"]]
        return opt
