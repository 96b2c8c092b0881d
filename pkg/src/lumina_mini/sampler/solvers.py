"""ODE integration steps for the straight flow path (t: 0 noise -> 1 data).

Euler and midpoint act on the velocity directly. The multistep data-prediction
solver converts each velocity into a clean-sample prediction

    x0 = x_t + (1 - t) * v        (exact under the linear interpolation path)

and integrates the half-linear structure of the path in log-SNR time
lambda(t) = log(t / (1 - t)), where a first-order update reproduces Euler and
the second-order update extrapolates x0 linearly from the two latest
evaluations. The first step has no history and the final step lands exactly
on the data prediction, so both run first order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import UsageError


def euler_step(x: np.ndarray, v: np.ndarray, dt: float) -> np.ndarray:
    if dt <= 0:
        raise UsageError(f"dt must be positive, got {dt}")
    return x + dt * v


def midpoint_step(x: np.ndarray, t: float, dt: float, field) -> np.ndarray:
    """Second order; evaluates the field twice (2 NFE per step)."""
    if dt <= 0:
        raise UsageError(f"dt must be positive, got {dt}")
    k1 = field(x, t)
    k2 = field(x + 0.5 * dt * k1, t + 0.5 * dt)
    return x + dt * k2


def x0_prediction(x: np.ndarray, v: np.ndarray, t: float) -> np.ndarray:
    """Clean-sample prediction implied by a velocity at time t."""
    return x + (1.0 - t) * v


@dataclass
class FdpmRecord:
    x: np.ndarray
    x0: np.ndarray
    t: float


def _lam(t: float) -> float:
    if t <= 0.0:
        return -math.inf
    if t >= 1.0:
        return math.inf
    return math.log(t / (1.0 - t))


def fdpm_step(history: list, next_t: float) -> np.ndarray:
    """Advance the latest state in ``history`` to next_t (1 NFE per step).

    history holds FdpmRecord entries in time order; the last one is the
    current state with its fresh data prediction.
    """
    if not history:
        raise UsageError("fdpm_step needs at least one prior evaluation")
    cur = history[-1]
    t, x, d = cur.t, cur.x, cur.x0
    h = _lam(next_t) - _lam(t)
    sigma, sigma_n, alpha_n = 1.0 - t, 1.0 - next_t, next_t
    d_tilde = d
    if len(history) >= 2 and next_t < 1.0:
        prev = history[-2]
        h_prev = _lam(t) - _lam(prev.t)
        if math.isfinite(h_prev):
            r = h_prev / h
            d_tilde = d + (1.0 / (2.0 * r)) * (d - prev.x0)
    decay = math.exp(-h) if math.isfinite(h) else 0.0
    return (sigma_n / sigma) * x + alpha_n * (1.0 - decay) * d_tilde
