"""Flat named-parameter collection with its training metadata."""

from __future__ import annotations

import numpy as np

from ..errors import UsageError
from ..numerics import Tensor
from .config import ModelConfig, param_shapes


class ParamStore:
    """Ordered name -> Tensor map plus (config, step, master_seed) metadata.

    Names are unique and stable across save/load. ``master_seed`` is the full
    RNG state: every random draw in training is derived statelessly from
    (master_seed, stage, step), so seed + counters reproduce any run point.
    """

    def __init__(self, config: ModelConfig, step: int = 0, master_seed: int = 0):
        self.config = config
        self.step = step
        self.master_seed = master_seed
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, tensor: Tensor) -> None:
        if name in self._params:
            raise UsageError(f"duplicate parameter name {name!r}")
        self._params[name] = tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self):
        return self._params.values()

    def total_params(self) -> int:
        return sum(t.size for t in self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def clone(self) -> "ParamStore":
        out = ParamStore(self.config, self.step, self.master_seed)
        for name, t in self.items():
            out.add(name, Tensor(t.data.copy(), t.dtype, requires_grad=t.requires_grad))
        return out


def init_params(cfg: ModelConfig, seed: int, dtype: str = "f32") -> ParamStore:
    """Fresh parameters: zero-init adaLN and final projection, unit norm gains,
    normal(0, 0.02) everywhere else. Zero adaLN gates make every block an
    identity map at initialization."""
    rng = np.random.default_rng([0x1A17, seed])
    store = ParamStore(cfg, step=0, master_seed=seed)
    for name, shape in param_shapes(cfg):
        if name.endswith((".ada.w", ".ada.b", "final.proj.w", "final.proj.b")):
            data = np.zeros(shape)
        elif name.endswith((".g", ".qn", ".kn")):
            data = np.ones(shape)
        elif name.endswith(".b"):
            data = np.zeros(shape)
        else:
            data = rng.standard_normal(shape) * 0.02
        store.add(name, Tensor(data, dtype, requires_grad=True))
    return store
