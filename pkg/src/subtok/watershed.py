"""Threshold-seeded watershed over a boundary probability map.

Seeds are the connected regions where the boundary probability is below
``t``. A priority flood then grows every seed over the remaining pixels in
ascending probability order until the whole image is labelled, so every pixel
ends up in exactly one token and ridge pixels are absorbed into a basin.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy import ndimage as ndi

from .raster import connected_components

__all__ = [
    "WatershedConfig",
    "SeedField",
    "BoundaryMapError",
    "extract_seeds",
    "watershed_flood",
    "epoc_segment",
    "gradient_boundary",
    "NEIGHBOURS",
]

# neighbour enumeration order: N, S, W, E, then the diagonals for 8-connectivity
NEIGHBOURS = {
    4: np.array([[-1, 0], [1, 0], [0, -1], [0, 1]], dtype=np.int64),
    8: np.array(
        [[-1, 0], [1, 0], [0, -1], [0, 1], [-1, -1], [-1, 1], [1, -1], [1, 1]],
        dtype=np.int64,
    ),
}


class BoundaryMapError(ValueError):
    """Boundary map has the wrong shape or values outside ``[0, 1]``."""


@dataclass(frozen=True)
class WatershedConfig:
    t: float = 0.3
    flood_connectivity: int = 4
    seed_connectivity: int = 8

    def __post_init__(self):
        if not 0.0 < self.t < 1.0:
            raise ValueError(f"threshold t must lie strictly between 0 and 1, got {self.t}")
        for name in ("flood_connectivity", "seed_connectivity"):
            if getattr(self, name) not in (4, 8):
                raise ValueError(f"{name} must be 4 or 8, got {getattr(self, name)}")


@dataclass(frozen=True)
class SeedField:
    labels: np.ndarray  # 0 = unseeded, 1..k_seeds
    k_seeds: int


def as_boundary_map(P) -> np.ndarray:
    """Validate a boundary map and return it as a 2-D float32 array."""
    P = np.asarray(P)
    if P.ndim == 3:
        if P.shape[2] != 1:
            raise BoundaryMapError(f"boundary map must have one channel, got {P.shape[2]}")
        P = P[:, :, 0]
    if P.ndim != 2 or P.size == 0:
        raise BoundaryMapError(f"boundary map must be a non-empty (H, W) array, got shape {P.shape}")
    P = P.astype(np.float32, copy=False)
    if not (np.all(P >= 0.0) and np.all(P <= 1.0)):
        # also catches NaN
        raise BoundaryMapError("boundary map values must lie in [0, 1]")
    return P


def extract_seeds(P, cfg: WatershedConfig = WatershedConfig()) -> SeedField:
    P = as_boundary_map(P)
    labels, k = connected_components(P < np.float32(cfg.t), cfg.seed_connectivity)
    return SeedField(labels, k)


@numba.njit(cache=True)
def _push(keys, pix, n, key, p):
    i = n
    while i > 0:
        parent = (i - 1) >> 1
        if keys[parent] <= key:
            break
        keys[i] = keys[parent]
        pix[i] = pix[parent]
        i = parent
    keys[i] = key
    pix[i] = p
    return n + 1


@numba.njit(cache=True)
def _pop(keys, pix, n):
    top = pix[0]
    n -= 1
    key = keys[n]
    p = pix[n]
    i = 0
    while True:
        child = 2 * i + 1
        if child >= n:
            break
        if child + 1 < n and keys[child + 1] < keys[child]:
            child += 1
        if keys[child] >= key:
            break
        keys[i] = keys[child]
        pix[i] = pix[child]
        i = child
    keys[i] = key
    pix[i] = p
    return top, n


@numba.njit(cache=True)
def _flood(bits, labels, offsets):
    """Priority flood on an (H, W) label array, filled in place.

    ``bits`` holds the float32 bit patterns of the (non-negative) map, which
    order like the values themselves. The frontier key packs the value above
    a 32-bit insertion counter, giving (value, FIFO) ordering in one integer.
    Seed pixels enter first in raster order; a popped pixel hands its label
    to each unlabelled neighbour and pushes it.
    """
    h, w = labels.shape
    size = h * w
    flat_bits = bits.ravel()
    flat_lab = labels.ravel()
    keys = np.empty(size, dtype=np.int64)
    pix = np.empty(size, dtype=np.int64)
    n_off = offsets.shape[0]
    n = 0
    seq = 0
    for p in range(size):
        if flat_lab[p] == 0:
            continue
        y = p // w
        x = p - y * w
        # seeds with no unlabelled neighbour can never push anything
        border = False
        for k in range(n_off):
            ny = y + offsets[k, 0]
            nx = x + offsets[k, 1]
            if 0 <= ny < h and 0 <= nx < w and flat_lab[ny * w + nx] == 0:
                border = True
                break
        if border:
            n = _push(keys, pix, n, (np.int64(flat_bits[p]) << 32) | seq, p)
        seq += 1
    while n > 0:
        p, n = _pop(keys, pix, n)
        y = p // w
        x = p - y * w
        lab = flat_lab[p]
        for k in range(n_off):
            ny = y + offsets[k, 0]
            nx = x + offsets[k, 1]
            if ny < 0 or ny >= h or nx < 0 or nx >= w:
                continue
            q = ny * w + nx
            if flat_lab[q] == 0:
                flat_lab[q] = lab
                n = _push(keys, pix, n, (np.int64(flat_bits[q]) << 32) | seq, q)
                seq += 1
    return labels


def watershed_flood(P, seeds: SeedField, cfg: WatershedConfig = WatershedConfig()) -> np.ndarray:
    """Grow seeds over the whole map; returns ids ``seed label - 1``.

    Ties in probability are resolved first-in first-out, with neighbours
    enumerated N, S, W, E (then NW, NE, SW, SE), so the result is fully
    deterministic.
    """
    P = as_boundary_map(P)
    if seeds.k_seeds < 1:
        raise ValueError("watershed_flood needs at least one seed region")
    if seeds.labels.shape != P.shape:
        raise ValueError(f"seed shape {seeds.labels.shape} does not match map shape {P.shape}")
    if P.size >= 1 << 32:
        raise ValueError("map too large for the 32-bit insertion counter")
    labels = np.array(seeds.labels, dtype=np.int32, order="C")
    # +0.0 folds -0.0 into +0.0 so the bit patterns sort like the values
    bits = np.ascontiguousarray(P + np.float32(0.0)).view(np.int32)
    _flood(bits, labels, NEIGHBOURS[cfg.flood_connectivity])
    return labels - 1


def epoc_segment(P, cfg: WatershedConfig = WatershedConfig()) -> np.ndarray:
    """Tokenize a boundary probability map; lower ``t`` gives more tokens.

    Falls back to a single whole-image token when no pixel is below ``t``.
    """
    P = as_boundary_map(P)
    seeds = extract_seeds(P, cfg)
    if seeds.k_seeds == 0:
        return np.zeros(P.shape, dtype=np.int32)
    return watershed_flood(P, seeds, cfg)


def gradient_boundary(img, smoothing_radius: int = 1) -> np.ndarray:
    """Cheap learned-free boundary map: blurred Sobel magnitude scaled to [0, 1].

    Returns an ``(H, W)`` float32 array; a constant image gives all zeros.
    """
    img = np.asarray(img)
    if img.ndim == 3:
        if img.shape[2] == 1:
            gray = img[:, :, 0].astype(np.float64)
        else:
            gray = img[:, :, :3].astype(np.float64) @ np.array([0.299, 0.587, 0.114])
    else:
        gray = img.astype(np.float64)
    if smoothing_radius > 0:
        gray = ndi.uniform_filter(gray, size=2 * smoothing_radius + 1, mode="nearest")
    mag = np.hypot(ndi.sobel(gray, axis=0, mode="nearest"), ndi.sobel(gray, axis=1, mode="nearest"))
    peak = mag.max()
    if peak <= 1e-12 * max(1.0, np.abs(gray).max()):
        return np.zeros(gray.shape, dtype=np.float32)
    return np.clip(mag / peak, 0.0, 1.0).astype(np.float32)
