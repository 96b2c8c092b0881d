"""Rotary positions over three coordinate axes.

Each token carries an integer coordinate triple. The per-head dimension is
split into three bands (one per axis); within a band, adjacent dim pairs are
rotated by angle coord * base^(-2j/band). Text tokens use (i, i, i); image
tokens use (text_len, row, col), so attention sees relative offsets along
sequence, height and width independently.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..numerics import Tensor, apply_rotary

ROPE_BASE = 128.0  # default matched to desk-scale coordinate ranges


def assign_coords(text_len: int, rows: int, cols: int) -> np.ndarray:
    """Coordinate triples for a joint sequence: text first, then image patches
    in row-major order."""
    if min(text_len, rows, cols) < 0:
        raise ConfigError("coordinate extents must be nonnegative")
    coords = np.zeros((text_len + rows * cols, 3), dtype=np.int64)
    for i in range(text_len):
        coords[i] = (i, i, i)
    idx = text_len
    for r in range(rows):
        for c in range(cols):
            coords[idx] = (text_len, r, c)
            idx += 1
    return coords


def _validate_split(axes_split, head_dim: int) -> None:
    if len(axes_split) != 3 or sum(axes_split) != head_dim or any(a % 2 for a in axes_split):
        raise ConfigError(
            f"axes_split {tuple(axes_split)} invalid for head_dim {head_dim}: "
            "need three even extents summing to head_dim"
        )


def rope_tables(coords: np.ndarray, axes_split, dtype=np.float64, base: float = ROPE_BASE):
    """cos/sin tables of shape [L, head_dim] for the banded three-axis rotation."""
    head_dim = sum(axes_split)
    _validate_split(axes_split, head_dim)
    coords = np.asarray(coords)
    L = coords.shape[0]
    cos = np.empty((L, head_dim), dtype=dtype)
    sin = np.empty((L, head_dim), dtype=dtype)
    offset = 0
    for axis, band in enumerate(axes_split):
        half = band // 2
        inv_freq = base ** (-2.0 * np.arange(half) / band)
        angles = coords[:, axis].astype(np.float64)[:, None] * inv_freq[None, :]
        cos[:, offset:offset + band] = np.repeat(np.cos(angles), 2, axis=-1)
        sin[:, offset:offset + band] = np.repeat(np.sin(angles), 2, axis=-1)
        offset += band
    return cos, sin


def apply_mrope(x: Tensor, coords: np.ndarray, axes_split, base: float = ROPE_BASE) -> Tensor:
    """Rotate [..., L, heads, head_dim] queries or keys by coordinate triples."""
    _validate_split(axes_split, x.shape[-1])
    cos, sin = rope_tables(coords, axes_split, dtype=x.data.dtype, base=base)
    return apply_rotary(x, cos[:, None, :], sin[:, None, :])
