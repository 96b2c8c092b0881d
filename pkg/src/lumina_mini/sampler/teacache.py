"""Timestep-embedding-aware evaluation skipping.

Between consecutive steps the timestep conditioning signal (the embedding
after its MLP) changes by some relative L1 amount. These changes accumulate;
while the accumulation stays below the tolerance the network output is
reused instead of recomputed. A real evaluation resets the accumulation.
This is the raw relative-L1 rule without the calibrated polynomial rescaling
of the full method; a documented fidelity gap.
"""

from __future__ import annotations

import numpy as np

from .config import CacheState

COMPUTE = "compute"
SKIP = "skip"
_EPS = 1e-12


def teacache_gate(state: CacheState, mod_signal: np.ndarray, delta: float) -> str:
    """Decide whether the network must run at this step. Mutates ``state``.

    Step 0 (no prior signal) always computes. delta = 0 never skips.
    """
    mod_signal = np.asarray(mod_signal, dtype=np.float64)
    if state.last_mod_signal is None:
        state.last_mod_signal = mod_signal
        state.accumulated = 0.0
        return COMPUTE
    rel = float(
        np.abs(mod_signal - state.last_mod_signal).sum()
        / max(np.abs(state.last_mod_signal).sum(), _EPS)
    )
    state.accumulated += rel
    state.last_mod_signal = mod_signal
    if state.accumulated < delta:
        return SKIP
    state.accumulated = 0.0
    return COMPUTE
