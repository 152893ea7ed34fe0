"""SLIC superpixel tokenization: local k-means in joint CIELAB and xy space."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

from .patch import InvalidGranularityError
from .raster import relabel_first_touch

__all__ = ["SlicConfig", "rgb_to_lab", "slic_segment"]

# sRGB primaries to XYZ, D65
_RGB2XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
# reference white = XYZ of linear (1, 1, 1), so white maps to a = b = 0 exactly
_WHITE = _RGB2XYZ.sum(axis=1)
_EPS = (6.0 / 29.0) ** 3


@dataclass(frozen=True)
class SlicConfig:
    k: int = 64
    compactness: float = 10.0
    iterations: int = 10
    enforce_connectivity: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise InvalidGranularityError(f"k must be >= 1, got {self.k}")
        if not self.compactness > 0:
            raise ValueError(f"compactness must be positive, got {self.compactness}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")


def rgb_to_lab(img) -> np.ndarray:
    """Convert an 8-bit sRGB image ``(H, W, 3)`` to float64 CIELAB (D65)."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"rgb_to_lab needs an (H, W, 3) RGB image, got shape {img.shape}")
    c = img.astype(np.float64) / 255.0
    lin = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _RGB2XYZ.T / _WHITE
    f = np.where(xyz > _EPS, np.cbrt(xyz), xyz / (3 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def _gradient(lab: np.ndarray) -> np.ndarray:
    p = np.pad(lab, ((1, 1), (1, 1), (0, 0)), mode="edge")
    gy = p[2:, 1:-1] - p[:-2, 1:-1]
    gx = p[1:-1, 2:] - p[1:-1, :-2]
    return (gy * gy).sum(-1) + (gx * gx).sum(-1)


def _grid(h: int, w: int, step: float) -> tuple[int, int]:
    # floor keeps ny * nx <= h * w / step**2 = k
    ny = max(1, int(math.floor(h / step + 1e-9)))
    nx = max(1, int(math.floor(w / step + 1e-9)))
    return ny, nx


def _init_centers(lab: np.ndarray, ny: int, nx: int) -> np.ndarray:
    h, w = lab.shape[:2]
    grad = _gradient(lab)
    centers = []
    for i in range(ny):
        for j in range(nx):
            cy = min(h - 1, int((i + 0.5) * h / ny))
            cx = min(w - 1, int((j + 0.5) * w / nx))
            y0, x0 = max(cy - 1, 0), max(cx - 1, 0)
            win = grad[y0 : cy + 2, x0 : cx + 2]
            dy, dx = np.unravel_index(np.argmin(win), win.shape)
            y, x = y0 + dy, x0 + dx
            centers.append([y, x, *lab[y, x]])
    return np.array(centers, dtype=np.float64)


def _assign(lab, centers, labels, step, m):
    h, w = labels.shape
    dist = np.full((h, w), np.inf)
    spatial = (m / step) ** 2
    for idx, (cy, cx, l, a, b) in enumerate(centers):
        if np.isnan(cy):
            continue
        y0, y1 = max(0, int(math.floor(cy - step))), min(h, int(math.ceil(cy + step)) + 1)
        x0, x1 = max(0, int(math.floor(cx - step))), min(w, int(math.ceil(cx + step)) + 1)
        if y0 >= y1 or x0 >= x1:
            continue
        sub = lab[y0:y1, x0:x1]
        d_lab = (sub[..., 0] - l) ** 2 + (sub[..., 1] - a) ** 2 + (sub[..., 2] - b) ** 2
        ys = (np.arange(y0, y1) - cy) ** 2
        xs = (np.arange(x0, x1) - cx) ** 2
        d = d_lab + (ys[:, None] + xs[None, :]) * spatial
        region = dist[y0:y1, x0:x1]
        closer = d < region
        region[closer] = d[closer]
        labels[y0:y1, x0:x1][closer] = idx


def _update(lab, labels, n_centers):
    h, w = labels.shape
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=n_centers).astype(np.float64)
    yy, xx = np.divmod(np.arange(h * w), w)
    feats = [yy, xx, lab[..., 0].ravel(), lab[..., 1].ravel(), lab[..., 2].ravel()]
    sums = np.stack([np.bincount(flat, weights=f, minlength=n_centers) for f in feats], axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        # empty clusters become NaN and are skipped from then on
        return sums / counts[:, None]


def _enforce_connectivity(labels: np.ndarray, min_size: float) -> np.ndarray:
    """Split clusters into 4-connected pieces and absorb the orphans.

    A piece is an orphan when it is not the largest piece of its cluster or
    when it is smaller than ``min_size``. Orphans, smallest first, merge into
    the largest piece they touch, so the token count never exceeds the
    cluster count.
    """
    comp = np.zeros(labels.shape, dtype=np.int64)
    orphan = []
    four = ndi.generate_binary_structure(2, 1)
    for lab_id, sl in enumerate(ndi.find_objects(labels + 1)):
        if sl is None:
            continue
        lab_cc, k = ndi.label(labels[sl] == lab_id, structure=four)
        sizes = np.bincount(lab_cc.ravel(), minlength=k + 1)[1:]
        main = int(np.argmax(sizes))
        view = comp[sl]
        fg = lab_cc > 0
        view[fg] = lab_cc[fg] + len(orphan) - 1
        # non-main pieces must go; main pieces only if still small when visited
        orphan.extend(i != main for i in range(k))
    n_comp = len(orphan)
    orphan = np.array(orphan, dtype=bool)

    size = np.bincount(comp.ravel(), minlength=n_comp).astype(np.int64)
    adj = [set() for _ in range(n_comp)]
    for a, b in ((comp[:, :-1], comp[:, 1:]), (comp[:-1, :], comp[1:, :])):
        diff = a != b
        pairs = np.unique(a[diff] * n_comp + b[diff])
        for u, v in zip(*np.divmod(pairs, n_comp)):
            adj[u].add(int(v))
            adj[v].add(int(u))

    parent = np.arange(n_comp)

    def find(i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    for c in np.lexsort((np.arange(n_comp), size)):
        r = find(c)
        if not orphan[c] and size[r] >= min_size:
            continue
        neighbours = {find(n) for n in adj[r]} - {r}
        if not neighbours:
            continue
        target = max(neighbours, key=lambda n: (size[n], -n))
        parent[r] = target
        size[target] += size[r]
        adj[target] |= adj[r]

    roots = np.array([find(i) for i in range(n_comp)])
    return relabel_first_touch(roots[comp])


def slic_segment(img, cfg: SlicConfig = SlicConfig()) -> np.ndarray:
    """Tokenize an RGB image into at most ``cfg.k`` SLIC superpixels.

    Centres start on a regular grid of step ``sqrt(H*W/k)`` and move to the
    lowest-gradient pixel of their 3x3 neighbourhood. Each iteration assigns
    pixels within a ``2S x 2S`` window of a centre to the closest centre under
    ``sqrt(d_lab**2 + (d_xy / S)**2 * m**2)`` and recomputes the centres.
    Fully deterministic.
    """
    img = np.asarray(img)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    h, w = img.shape[:2]
    if cfg.k > h * w:
        raise InvalidGranularityError(f"k={cfg.k} exceeds the pixel count {h * w}")
    lab = rgb_to_lab(img)
    step = math.sqrt(h * w / cfg.k)
    ny, nx = _grid(h, w, step)
    centers = _init_centers(lab, ny, nx)

    # pixels outside every search window keep their grid-cell assignment
    rows = (np.arange(h) * ny) // h
    cols = (np.arange(w) * nx) // w
    labels = (rows[:, None] * nx + cols[None, :]).astype(np.int64)

    for _ in range(cfg.iterations):
        _assign(lab, centers, labels, step, cfg.compactness)
        centers = _update(lab, labels, len(centers))

    if cfg.enforce_connectivity:
        return _enforce_connectivity(labels, step * step / 4.0)
    return relabel_first_touch(labels)
