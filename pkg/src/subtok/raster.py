"""Raster primitives: disk morphology, connected components, label boundaries.

Conventions used throughout the package:

* a binary mask is a 2-D ``bool`` array;
* a float map is an ``(H, W, C)`` ``float32`` array (boundary maps have ``C == 1``
  and may also be passed as ``(H, W)``);
* a token index map ("seg") is an ``(H, W)`` integer array whose values are
  exactly ``0 .. N-1`` with every id present.

Pixels outside the image are treated as unset by both dilation and erosion.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import ndimage as ndi

__all__ = [
    "StructuringElement",
    "disk",
    "dilate",
    "erode",
    "connected_components",
    "boundaries_from_labels",
    "strip_border",
    "n_tokens",
    "validate_seg",
    "relabel_first_touch",
    "SegValidationError",
]


class SegValidationError(ValueError):
    """A token index map violates the contiguous, panoptic labeling contract."""


@dataclass(frozen=True)
class StructuringElement:
    """Disk footprint of odd ``kernel_size``.

    The radius is ``kernel_size // 2`` and an offset belongs to the disk when
    ``dy**2 + dx**2 <= radius**2``: size 3 is the 4-neighbourhood plus centre,
    size 5 a 13-pixel disk.
    """

    kernel_size: int

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and >= 1, got {self.kernel_size}")

    @property
    def radius(self) -> int:
        return self.kernel_size // 2

    @property
    def offsets(self) -> tuple[tuple[int, int], ...]:
        return _disk_offsets(self.radius)

    def footprint(self) -> np.ndarray:
        r = self.radius
        yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
        return yy * yy + xx * xx <= r * r


@lru_cache(maxsize=None)
def _disk_offsets(radius: int) -> tuple[tuple[int, int], ...]:
    r2 = radius * radius
    return tuple(
        (dy, dx)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
        if dy * dy + dx * dx <= r2
    )


def disk(kernel_size: int) -> StructuringElement:
    return StructuringElement(kernel_size)


def _as_mask(mask) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"expected a 2-D mask, got shape {mask.shape}")
    return mask.astype(bool, copy=False)


def _sq_dist_to_set(mask: np.ndarray) -> np.ndarray:
    # exact squared Euclidean distance from every pixel to the nearest set pixel
    dist = ndi.distance_transform_edt(~mask)
    return np.rint(dist * dist)


def dilate(mask, se: StructuringElement) -> np.ndarray:
    """Binary dilation by a disk.

    Computed through an exact Euclidean distance transform, so the cost does
    not grow with the kernel size.
    """
    mask = _as_mask(mask)
    if not mask.any():
        return np.zeros_like(mask)
    r = se.radius
    return _sq_dist_to_set(mask) <= r * r


def erode(mask, se: StructuringElement) -> np.ndarray:
    """Binary erosion by a disk; pixels near the image border erode away."""
    mask = _as_mask(mask)
    r = se.radius
    if r == 0:
        return mask.copy()
    if not mask.any():
        return np.zeros_like(mask)
    # one ring of unset padding stands in for everything outside the image
    padded = np.pad(mask, 1, constant_values=False)
    d2 = _sq_dist_to_set(~padded)[1:-1, 1:-1]
    return d2 > r * r


_STRUCT = {
    4: ndi.generate_binary_structure(2, 1),
    8: ndi.generate_binary_structure(2, 2),
}


def connected_components(mask, connectivity: int = 4) -> tuple[np.ndarray, int]:
    """Label connected set pixels.

    Returns ``(labels, k)`` with background 0 and components numbered
    ``1..k`` in raster-scan order of their first pixel.
    """
    if connectivity not in _STRUCT:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    mask = _as_mask(mask)
    labels, k = ndi.label(mask, structure=_STRUCT[connectivity])
    return relabel_first_touch(labels, background=0), int(k)


def relabel_first_touch(labels: np.ndarray, background: int | None = None) -> np.ndarray:
    """Renumber labels in raster-scan order of first appearance.

    With ``background`` set, that value maps to 0 and the others to ``1..k``;
    otherwise the result is ``0..n-1``.
    """
    labels = np.asarray(labels)
    flat = labels.ravel()
    values, first = np.unique(flat, return_index=True)
    if background is not None:
        keep = values != background
        values, first = values[keep], first[keep]
    order = np.argsort(first, kind="stable")
    start = 1 if background is not None else 0
    new_ids = np.empty(len(values), dtype=np.int32)
    new_ids[order] = np.arange(start, start + len(values), dtype=np.int32)
    out = np.zeros(flat.shape, dtype=np.int32)
    pos = np.searchsorted(values, flat)
    if background is None:
        out = new_ids[pos]
    else:
        fg = flat != background
        out[fg] = new_ids[pos[fg]]
    return out.reshape(labels.shape)


def n_tokens(seg) -> int:
    seg = np.asarray(seg)
    return int(seg.max()) + 1 if seg.size else 0


def validate_seg(seg, n: int | None = None) -> np.ndarray:
    """Check the token index map contract and return the array unchanged."""
    seg = np.asarray(seg)
    if seg.ndim != 2 or seg.shape[0] < 1 or seg.shape[1] < 1:
        raise SegValidationError(f"token index map must be a non-empty 2-D array, got {seg.shape}")
    if not np.issubdtype(seg.dtype, np.integer):
        raise SegValidationError(f"token ids must be integers, got dtype {seg.dtype}")
    if seg.min() < 0:
        raise SegValidationError("negative token id")
    if n is None:
        n = n_tokens(seg)
    elif seg.max() >= n:
        raise SegValidationError(f"id out of range: {int(seg.max())} >= n_tokens {n}")
    counts = np.bincount(seg.ravel(), minlength=n)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise SegValidationError(f"non-contiguous ids: {missing.size} id(s) unused, first {int(missing[0])}")
    return seg


def _shifted(labels: np.ndarray, dy: int, dx: int, fill: int) -> np.ndarray:
    """``out[y, x] = labels[y + dy, x + dx]`` with ``fill`` outside the image."""
    h, w = labels.shape
    out = np.full_like(labels, fill)
    ys, yd = (slice(dy, h), slice(0, h - dy)) if dy >= 0 else (slice(0, h + dy), slice(-dy, h))
    xs, xd = (slice(dx, w), slice(0, w - dx)) if dx >= 0 else (slice(0, w + dx), slice(-dx, w))
    out[yd, xd] = labels[ys, xs]
    return out


def boundaries_from_labels(seg, kernel_size: int = 3) -> np.ndarray:
    """Union over tokens of ``dilate(token) & ~erode(token)``.

    A pixel is marked exactly when its disk footprint reaches a different id
    or leaves the image, so the whole image border is always marked.
    """
    seg = np.asarray(seg)
    if seg.ndim != 2:
        raise ValueError(f"expected a 2-D token index map, got shape {seg.shape}")
    labels = seg.astype(np.int64, copy=False)
    out = np.zeros(labels.shape, dtype=bool)
    for dy, dx in disk(kernel_size).offsets:
        if dy == 0 and dx == 0:
            continue
        out |= _shifted(labels, dy, dx, fill=-1) != labels
    return out


def strip_border(mask, width: int = 1) -> np.ndarray:
    """Copy of ``mask`` with the outer ``width``-pixel ring cleared."""
    out = _as_mask(mask).copy()
    if width > 0:
        out[:width, :] = False
        out[-width:, :] = False
        out[:, :width] = False
        out[:, -width:] = False
    return out
