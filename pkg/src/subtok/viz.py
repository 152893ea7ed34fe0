"""Deterministic colour overlays of token index maps."""
from __future__ import annotations

import numpy as np

from .metrics import predicted_boundary

__all__ = ["palette", "visualize"]

_GOLDEN = 2654435761


def palette(ids) -> np.ndarray:
    """RGB colour per token id from a multiplicative hash; never pure black.

    The hash is taken of ``id + 1`` so that id 0 does not hash to zero. A
    colour that still comes out black is replaced by mid grey, because black
    is reserved for drawn boundaries.
    """
    ids = np.asarray(ids, dtype=np.uint64)
    h = ((ids + np.uint64(1)) * np.uint64(_GOLDEN)) & np.uint64(0xFFFFFFFF)
    rgb = np.stack([(h >> np.uint64(s)) & np.uint64(0xFF) for s in (24, 16, 8)], axis=-1).astype(np.uint8)
    black = ~rgb.any(axis=-1)
    rgb[black] = 128
    return rgb


def visualize(seg, base=None, alpha: float = 0.5) -> np.ndarray:
    """Fill tokens with palette colours, optionally blended over ``base``.

    ``alpha`` is the weight of the token colour. Boundaries between tokens
    are drawn in black; the image frame is left alone.
    """
    seg = np.asarray(seg)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    n = int(seg.max()) + 1
    colours = palette(np.arange(n))[seg].astype(np.float64)
    if base is not None:
        base = np.asarray(base)
        if base.ndim == 2:
            base = np.repeat(base[:, :, None], 3, axis=2)
        if base.shape[:2] != seg.shape:
            raise ValueError(f"base image {base.shape[:2]} and token map {seg.shape} differ in size")
        if base.dtype == np.uint16:
            base = base / 257.0
        colours = alpha * colours + (1.0 - alpha) * base[:, :, :3].astype(np.float64)
    out = np.clip(np.rint(colours), 0, 255).astype(np.uint8)
    out[predicted_boundary(seg, exclude_border=True)] = 0
    return out
