"""Rule-based image classifier: the prompt-adherence oracle.

Foreground is every pixel that deviates from the neutral background beyond a
tolerance. Color is the nearest named color to the mean foreground pixel;
cell is the 3x3 cell containing the foreground centroid; shape comes from the
fill ratio of the foreground bounding box, whose ideals are pi/4 (circle),
1 (square) and 1/2 (triangle), with decision thresholds at the midpoints.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..numerics import Tensor
from ..synthdata.scene import BACKGROUND, COLOR_RGB, RESOLUTIONS

FG_TOLERANCE = 0.35
FILL_CIRCLE = np.pi / 4.0
FILL_SQUARE = 1.0
FILL_TRIANGLE = 0.5
# midpoints between the ideal fill ratios
TRIANGLE_CIRCLE_CUT = (FILL_TRIANGLE + FILL_CIRCLE) / 2.0  # 0.6427
CIRCLE_SQUARE_CUT = (FILL_CIRCLE + FILL_SQUARE) / 2.0  # 0.8927

NONE_CLASS = "none"


def classify_image(img) -> tuple:
    """(color, shape, cell) for a [3, R, R] image; ("none", "none", -1) when
    no foreground is found."""
    data = img.data if isinstance(img, Tensor) else np.asarray(img)
    if data.ndim != 3 or data.shape[0] != 3 or data.shape[1] != data.shape[2]:
        raise ConfigError(f"expected a [3, R, R] image, got {data.shape}")
    if data.shape[1] not in RESOLUTIONS:
        raise ConfigError(f"unsupported resolution {data.shape[1]}, expected {RESOLUTIONS}")

    fg = np.abs(data - BACKGROUND).max(axis=0) > FG_TOLERANCE
    if not fg.any():
        return (NONE_CLASS, NONE_CLASS, -1)

    resolution = data.shape[1]
    mean_rgb = data[:, fg].mean(axis=1)
    dists = {name: float(np.linalg.norm(mean_rgb - np.array(rgb))) for name, rgb in COLOR_RGB.items()}
    color = min(dists, key=dists.get)

    ys, xs = np.nonzero(fg)
    row = min(int(ys.mean() / resolution * 3), 2)
    col = min(int(xs.mean() / resolution * 3), 2)
    cell = row * 3 + col

    # Fill ratio of the bounding box, measured sub-pixel: anti-aliasing puts
    # partial coverage in edge pixels, so per-pixel coverage weights give an
    # unbiased area, and the box extents are the maximal coverage chords.
    cov = np.clip(np.abs(data - BACKGROUND).max(axis=0) / max(
        float(np.abs(data[:, fg] - BACKGROUND).max()), FG_TOLERANCE
    ), 0.0, 1.0)
    area = float(cov.sum())
    width = float(cov.sum(axis=1).max())
    height = float(cov.sum(axis=0).max())
    fill = area / max(width * height, 1e-9)
    if fill < TRIANGLE_CIRCLE_CUT:
        shape = "triangle"
    elif fill < CIRCLE_SQUARE_CUT:
        shape = "circle"
    else:
        shape = "square"
    return (color, shape, cell)
