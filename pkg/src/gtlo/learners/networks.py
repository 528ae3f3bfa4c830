"""Fully-connected networks with manual reverse-mode gradients (numpy only)."""

from __future__ import annotations

import numpy as np


def init_dense(sizes, rng, out_scale=1.0):
    """He-uniform hidden layers and a fan-in scaled linear output layer."""
    params = []
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = k == len(sizes) - 2
        bound = np.sqrt((1.0 if last else 6.0) / fan_in) * (out_scale if last else 1.0)
        params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def dense_forward(params, x, final_relu=False):
    cache = [x]
    a = x
    n_layers = len(params) // 2
    for k in range(n_layers):
        z = a @ params[2 * k] + params[2 * k + 1]
        a = np.maximum(z, 0.0) if (k < n_layers - 1 or final_relu) else z
        cache.append(a)
    return a, cache


def dense_backward(params, cache, dout, final_relu=False):
    """Return (parameter gradients, input gradient)."""
    n_layers = len(params) // 2
    grads = [None] * len(params)
    delta = dout
    for k in reversed(range(n_layers)):
        if k < n_layers - 1 or final_relu:
            delta = delta * (cache[k + 1] > 0)
        grads[2 * k] = cache[k].T @ delta
        grads[2 * k + 1] = delta.sum(axis=0)
        delta = delta @ params[2 * k].T
    return grads, delta


class GeneralizedQNetwork:
    """Multi-head network: shared state embedding plus one head per objective.

    Head ``i`` sees the embedding and the normalized thresholds of objectives
    ``0..i-1``; head 0 ignores thresholds entirely.
    """

    def __init__(self, input_dim, n_actions, n_objectives, threshold_bounds, trunk=(128, 64),
                 heads=((64,), (64, 32)), out_scale=1.0, rng=None):
        rng = rng if rng is not None else np.random.RandomState(0)
        if len(heads) == 1:
            heads = tuple(heads) * n_objectives
        if len(heads) != n_objectives:
            raise ValueError(f"need {n_objectives} head specs, got {len(heads)}")
        self.input_dim, self.n_actions, self.n_objectives = input_dim, n_actions, n_objectives
        self.trunk_sizes = (input_dim, *trunk)
        self.head_sizes = [(trunk[-1] + i, *h, n_actions) for i, h in enumerate(heads)]
        lo, hi = np.asarray(threshold_bounds, dtype=np.float64).reshape(2, -1)
        self.t_lo, self.t_span = lo, np.where(hi > lo, hi - lo, 1.0)
        self.trunk = init_dense(self.trunk_sizes, rng)
        self.heads = [init_dense(s, rng, out_scale) for s in self.head_sizes]

    @property
    def params(self) -> list[np.ndarray]:
        return [*self.trunk, *(p for h in self.heads for p in h)]

    def set_params(self, flat_list, copy=True):
        conv = np.array if copy else np.asarray
        flat_list = list(flat_list)
        n = len(self.trunk)
        self.trunk = [conv(p, dtype=np.float64) for p in flat_list[:n]]
        heads = []
        for h in self.heads:
            heads.append([conv(p, dtype=np.float64) for p in flat_list[n:n + len(h)]])
            n += len(h)
        self.heads = heads

    def copy(self) -> "GeneralizedQNetwork":
        new = object.__new__(GeneralizedQNetwork)
        new.__dict__.update(self.__dict__)
        new.set_params(self.params)
        return new

    def architecture(self) -> dict:
        return {"kind": "gtlo", "trunk": list(self.trunk_sizes), "heads": [list(s) for s in self.head_sizes]}

    def normalize(self, t: np.ndarray) -> np.ndarray:
        return (t[:, : self.n_objectives - 1] - self.t_lo) / self.t_span

    def forward(self, x, t):
        """Q estimates ``(n, n_actions, n_objectives)`` and the backward cache."""
        h, trunk_cache = dense_forward(self.trunk, x, final_relu=True)
        tn = self.normalize(t)
        outs, head_caches = [], []
        for i, head in enumerate(self.heads):
            inp = h if i == 0 else np.concatenate([h, tn[:, :i]], axis=1)
            out, c = dense_forward(head, inp)
            outs.append(out)
            head_caches.append(c)
        return np.stack(outs, axis=2), (trunk_cache, head_caches)

    def __call__(self, x, t):
        return self.forward(x, t)[0]

    def backward(self, cache, d_q):
        trunk_cache, head_caches = cache
        width = self.trunk_sizes[-1]
        dh = np.zeros((d_q.shape[0], width))
        head_grads = []
        for i, (head, c) in enumerate(zip(self.heads, head_caches)):
            g, dinp = dense_backward(head, c, d_q[:, :, i])
            head_grads.extend(g)
            dh += dinp[:, :width]
        trunk_grads, _ = dense_backward(self.trunk, trunk_cache, dh, final_relu=True)
        return [*trunk_grads, *head_grads]


class ScalarQNetwork:
    """Scalar Q-network conditioned on a linear weight vector appended to the input."""

    def __init__(self, input_dim, n_actions, weight_dim, trunk=(128, 64), out_scale=1.0, rng=None):
        rng = rng if rng is not None else np.random.RandomState(0)
        self.input_dim, self.n_actions, self.weight_dim = input_dim, n_actions, weight_dim
        self.sizes = (input_dim + weight_dim, *trunk, n_actions)
        self.layers = init_dense(self.sizes, rng, out_scale)

    @property
    def params(self):
        return list(self.layers)

    def set_params(self, flat_list, copy=True):
        conv = np.array if copy else np.asarray
        self.layers = [conv(p, dtype=np.float64) for p in flat_list]

    def copy(self) -> "ScalarQNetwork":
        new = object.__new__(ScalarQNetwork)
        new.__dict__.update(self.__dict__)
        new.set_params(self.params)
        return new

    def architecture(self) -> dict:
        return {"kind": "glinear", "sizes": list(self.sizes)}

    def forward(self, x, w):
        return dense_forward(self.layers, np.concatenate([x, w], axis=1))

    def __call__(self, x, w):
        return self.forward(x, w)[0]

    def backward(self, cache, d_q):
        return dense_backward(self.layers, cache, d_q)[0]


def clip_by_global_norm(grads, max_norm):
    if max_norm is None:
        return grads
    norm = np.sqrt(sum(float(np.vdot(g, g)) for g in grads))
    if norm > max_norm:
        grads = [g * (max_norm / norm) for g in grads]
    return grads


class SGD:
    def __init__(self, lr=1e-4, max_grad_norm=10.0):
        self.lr, self.max_grad_norm = lr, max_grad_norm

    def step(self, params, grads):
        grads = clip_by_global_norm(grads, self.max_grad_norm)
        return [p - self.lr * g for p, g in zip(params, grads)]


class Adam:
    def __init__(self, lr=1e-4, max_grad_norm=10.0, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.max_grad_norm = lr, max_grad_norm
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = self.v = None

    def step(self, params, grads):
        grads = clip_by_global_norm(grads, self.max_grad_norm)
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        scale = self.lr * np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        out = []
        for k, (p, g) in enumerate(zip(params, grads)):
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            out.append(p - scale * self.m[k] / (np.sqrt(self.v[k]) + self.eps))
        return out


OPTIMIZERS = {"sgd": SGD, "adam": Adam}
