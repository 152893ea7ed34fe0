"""Fixed square-patch tokenization (the non-adaptive baseline)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PatchConfig", "InvalidGranularityError", "patch_segment"]


class InvalidGranularityError(ValueError):
    """Requested token granularity cannot be realised on the given image."""


@dataclass(frozen=True)
class PatchConfig:
    p: int = 16

    def __post_init__(self):
        if self.p < 1:
            raise InvalidGranularityError(f"p must be >= 1, got {self.p}")


def patch_segment(height: int, width: int, cfg: PatchConfig | int) -> np.ndarray:
    """Split an ``height x width`` image into a ``p x p`` grid of tokens.

    Pixel ``(y, x)`` gets id ``row * p + col`` with ``row = y * p // height``
    and ``col = x * p // width``; sizes that are not multiples of ``p`` give
    stripes whose widths differ by at most one pixel.
    """
    p = cfg.p if isinstance(cfg, PatchConfig) else int(cfg)
    if height < 1 or width < 1:
        raise ValueError(f"image dimensions must be positive, got {height}x{width}")
    if p < 1 or p > min(height, width):
        raise InvalidGranularityError(f"p={p} must lie in [1, {min(height, width)}] for a {height}x{width} image")
    rows = (np.arange(height, dtype=np.int64) * p) // height
    cols = (np.arange(width, dtype=np.int64) * p) // width
    return (rows[:, None] * p + cols[None, :]).astype(np.int32)
