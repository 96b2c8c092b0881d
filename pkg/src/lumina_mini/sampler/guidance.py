"""Combining conditional and unconditional velocity predictions."""

from __future__ import annotations

import numpy as np

from ..errors import UsageError
from .config import GuidanceConfig

EPS_DIV = 1e-12


def cfg_active(g: GuidanceConfig, step_fraction: float) -> bool:
    """Whether the conditional branch participates at this point of the
    trajectory. The orchestrator must not evaluate it otherwise."""
    return g.w != 0.0 and step_fraction < g.trunc_alpha


def _renorm(v: np.ndarray, v_c: np.ndarray, scope: str) -> np.ndarray:
    if scope == "sample":
        target = np.linalg.norm(v_c.reshape(-1))
        norm = np.linalg.norm(v.reshape(-1))
        return v * (target / max(norm, EPS_DIV))
    # per-token: norms over channels at each spatial position
    target = np.sqrt((v_c * v_c).sum(axis=0, keepdims=True))
    norm = np.sqrt((v * v).sum(axis=0, keepdims=True))
    return v * (target / np.maximum(norm, EPS_DIV))


def cfg_combine(
    v_u: np.ndarray,
    v_c: np.ndarray | None,
    g: GuidanceConfig,
    step_fraction: float,
) -> np.ndarray:
    """Guided velocity for one evaluation point.

    Inside the truncation window: v_u + w (v_c - v_u), renormalized to the
    conditional magnitude when requested. Outside it: v_u unchanged, and v_c
    must not have been evaluated.
    """
    if not 0.0 <= step_fraction <= 1.0:
        raise UsageError(f"step_fraction {step_fraction} outside [0, 1]")
    v_u = np.asarray(v_u)
    if not cfg_active(g, step_fraction):
        return v_u
    if v_c is None:
        raise UsageError("CFG window active but conditional velocity missing")
    v_c = np.asarray(v_c)
    # w == 1 is exactly the conditional prediction; avoid roundoff there.
    v = v_c if g.w == 1.0 else v_u + g.w * (v_c - v_u)
    if g.renorm:
        v = _renorm(v, v_c, g.renorm_scope)
    return v
