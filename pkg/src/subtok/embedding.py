"""Turn a token index map plus a feature map into per-token vectors.

Content vectors average the (upsampled) features of each token's pixels.
Position vectors describe each token by a cropped, resampled shape mask
followed by its normalized ``(x, y, w, h)`` box. ``fuse`` runs a supplied MLP
over their concatenation. ``truncate`` picks which tokens to keep under a
sequence-length budget.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

__all__ = [
    "TokenRecord",
    "MlpWeights",
    "upsample",
    "content_embed",
    "token_records",
    "resample_mask",
    "position_embed",
    "fuse",
    "truncate",
]


@dataclass
class TokenRecord:
    id: int
    area: int
    bbox: tuple[float, float, float, float]  # normalized x, y, w, h
    shape: np.ndarray  # bool crop of the token inside its pixel bbox


@dataclass
class MlpWeights:
    """Dense layers as ``(weight (out, in), bias (out,))`` pairs."""

    layers: list[tuple[np.ndarray, np.ndarray]]
    activation: str = "relu"

    def __post_init__(self):
        if not self.layers:
            raise ValueError("MLP needs at least one layer")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}, choose from {sorted(_ACTIVATIONS)}")
        self.layers = [
            (np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64).ravel())
            for w, b in self.layers
        ]
        for i, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} are inconsistent")
            if i and w.shape[1] != self.layers[i - 1][0].shape[0]:
                raise ValueError(f"layer {i}: input width {w.shape[1]} != previous output {self.layers[i - 1][0].shape[0]}")

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[0]


_ACTIVATIONS = {
    "relu": lambda x: np.maximum(x, 0.0),
    "identity": lambda x: x,
    "gelu": lambda x: 0.5 * x * (1.0 + np.tanh(0.7978845608028654 * (x + 0.044715 * x**3))),
}


def _as_fmap(features) -> np.ndarray:
    f = np.asarray(features)
    if f.ndim == 2:
        f = f[:, :, None]
    if f.ndim != 3:
        raise ValueError(f"feature map must be (H, W) or (H, W, C), got {f.shape}")
    return f


def _source_coords(n_out: int, n_in: int) -> np.ndarray:
    # half-pixel centres (align_corners=False), clamped at the edges
    x = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    return np.clip(x, 0.0, n_in - 1)


def upsample(features, target_h: int, target_w: int, mode: str = "bilinear") -> np.ndarray:
    """Resample an ``(H, W, C)`` map to ``(target_h, target_w, C)``.

    Works for shrinking as well; equal sizes return an exact copy.
    """
    f = _as_fmap(features)
    h, w, _ = f.shape
    if (h, w) == (target_h, target_w):
        return f.copy()
    if mode == "nearest":
        ys = np.minimum((np.arange(target_h) + 0.5) * h / target_h, h - 1).astype(np.int64)
        xs = np.minimum((np.arange(target_w) + 0.5) * w / target_w, w - 1).astype(np.int64)
        return f[ys[:, None], xs[None, :]]
    if mode != "bilinear":
        raise ValueError(f"unknown upsampling mode {mode!r}")
    sy, sx = _source_coords(target_h, h), _source_coords(target_w, w)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (sy - y0)[:, None, None]
    wx = (sx - x0)[None, :, None]
    src = f.astype(np.float64)
    top = src[y0][:, x0] * (1 - wx) + src[y0][:, x1] * wx
    bot = src[y1][:, x0] * (1 - wx) + src[y1][:, x1] * wx
    return (top * (1 - wy) + bot * wy).astype(f.dtype if f.dtype.kind == "f" else np.float64)


def content_embed(features, seg) -> np.ndarray:
    """Mean feature vector per token, shape ``(N, C)``.

    Sums run in float64 over float32 samples, so a constant map averages back
    to exactly that constant.
    """
    f = _as_fmap(features)
    seg = np.asarray(seg)
    if f.shape[:2] != seg.shape:
        raise ValueError(f"feature map {f.shape[:2]} and token map {seg.shape} differ in size")
    ids = seg.ravel()
    n = int(ids.max()) + 1
    counts = np.bincount(ids, minlength=n).astype(np.float64)
    flat = f.reshape(-1, f.shape[2]).astype(np.float32).astype(np.float64)
    sums = np.stack([np.bincount(ids, weights=flat[:, c], minlength=n) for c in range(flat.shape[1])], axis=1)
    return sums / counts[:, None]


def token_records(seg) -> list[TokenRecord]:
    seg = np.asarray(seg)
    h, w = seg.shape
    records = []
    for tid, sl in enumerate(ndi.find_objects(seg + 1)):
        if sl is None:
            continue
        ys, xs = sl
        shape = seg[sl] == tid
        bbox = (xs.start / w, ys.start / h, (xs.stop - xs.start) / w, (ys.stop - ys.start) / h)
        records.append(TokenRecord(tid, int(shape.sum()), bbox, shape))
    return records


def _overlap_matrix(n_cells: int, n_pixels: int) -> np.ndarray:
    """``out[i, j]`` = length of cell ``i`` overlapping pixel ``j``, in pixel units."""
    edges = np.arange(n_cells + 1) * (n_pixels / n_cells)
    lo = np.maximum(edges[:-1, None], np.arange(n_pixels)[None, :])
    hi = np.minimum(edges[1:, None], np.arange(1, n_pixels + 1)[None, :])
    return np.clip(hi - lo, 0.0, None)


def resample_mask(mask, res: int) -> np.ndarray:
    """Resample a binary mask to ``res x res`` by majority area coverage.

    A cell is set when at least half of the source area it covers is set.
    """
    mask = np.asarray(mask, dtype=np.float64)
    h, w = mask.shape
    ay = _overlap_matrix(res, h)
    ax = _overlap_matrix(res, w)
    cell_area = (h / res) * (w / res)
    coverage = ay @ mask @ ax.T / cell_area
    return coverage >= 0.5 - 1e-9


def position_embed(seg, mask_res: int = 16) -> np.ndarray:
    """Per-token ``flattened shape mask (mask_res**2) ++ (x, y, w, h)``."""
    if mask_res < 1:
        raise ValueError(f"mask_res must be >= 1, got {mask_res}")
    records = token_records(seg)
    out = np.empty((len(records), mask_res * mask_res + 4), dtype=np.float64)
    for rec in records:
        out[rec.id, :-4] = resample_mask(rec.shape, mask_res).ravel()
        out[rec.id, -4:] = rec.bbox
    return out


def fuse(content, position, weights: MlpWeights) -> np.ndarray:
    """Apply the MLP to ``content ++ position`` row by row.

    Affine then activation for every layer except the last, which stays affine.
    """
    x = np.concatenate([np.asarray(content, dtype=np.float64), np.asarray(position, dtype=np.float64)], axis=1)
    if x.shape[1] != weights.in_dim:
        raise ValueError(f"MLP expects {weights.in_dim} inputs, got {x.shape[1]} (content + position)")
    act = _ACTIVATIONS[weights.activation]
    last = len(weights.layers) - 1
    for i, (w, b) in enumerate(weights.layers):
        x = x @ w.T + b
        if i < last:
            x = act(x)
    return x


def truncate(seg, budget: int, strategy: str = "smallest-first", seed: int | None = 0):
    """Choose which tokens survive a length budget.

    ``smallest-first`` drops the smallest tokens (keeps the ``budget`` largest,
    ties to the lower id); ``random`` keeps a seeded uniform sample. Returns
    ``(retained ids sorted ascending, retained area fraction)``.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    seg = np.asarray(seg)
    areas = np.bincount(seg.ravel())
    n = len(areas)
    if budget >= n:
        keep = np.arange(n)
    elif strategy == "smallest-first":
        keep = np.lexsort((np.arange(n), -areas))[:budget]
    elif strategy == "random":
        keep = np.random.default_rng(seed).choice(n, size=budget, replace=False)
    else:
        raise ValueError(f"unknown truncation strategy {strategy!r}")
    keep = np.sort(keep)
    return keep, float(areas[keep].sum()) / seg.size
