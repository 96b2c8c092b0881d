"""AdamW with decoupled weight decay and global gradient-norm clipping."""

from __future__ import annotations

import math

import numpy as np

from ..model.params import ParamStore


class AdamW:
    """Moments are kept in the parameter dtype so checkpoints round-trip
    bit-exactly. Weight decay applies to matrices only; gains and biases
    (1-D parameters) are exempt."""

    def __init__(
        self,
        store: ParamStore,
        lr: float = 2e-4,
        betas=(0.9, 0.95),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        self.store = store
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in store.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in store.items()}

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in self.store.items():
            g = p.grad.data
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay and p.data.ndim > 1:
                update = update + self.weight_decay * p.data
            p.data[...] = p.data - lr * update

    def reset_moments(self) -> None:
        for name in self.m:
            self.m[name][...] = 0
            self.v[name][...] = 0
        self.t = 0

    def state_tensors(self) -> dict:
        """Moment arrays under the reserved checkpoint prefix."""
        from ..numerics import Tensor

        out = {}
        for name in self.m:
            dtype = "f32" if self.m[name].dtype == np.float32 else "f64"
            out[f"opt.m.{name}"] = Tensor(self.m[name], dtype)
            out[f"opt.v.{name}"] = Tensor(self.v[name], dtype)
        return out

    def load_state_tensors(self, extra: dict, t: int) -> None:
        for name in self.m:
            self.m[name][...] = extra[f"opt.m.{name}"].data
            self.v[name][...] = extra[f"opt.v.{name}"].data
        self.t = t


def grad_global_norm(store: ParamStore) -> float:
    total = 0.0
    for _, p in store.items():
        g = p.grad.data
        total += float((g.astype(np.float64) ** 2).sum())
    return math.sqrt(total)


def clip_grad_norm(store: ParamStore, max_norm: float) -> float:
    """Scale all gradients so the global norm is at most max_norm; returns
    the pre-clip norm."""
    norm = grad_global_norm(store)
    if norm > max_norm > 0:
        scale = max_norm / norm
        for _, p in store.items():
            p.grad.data *= scale
    return norm
