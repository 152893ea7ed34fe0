"""Intrinsic token-segmentation metrics.

* boundary precision / recall with pixel tolerances,
* token monosemanticity (does an eroded token core cross a GT boundary?),
* token size distribution.

All scores are invariant to a permutation of the predicted token ids.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

from .raster import boundaries_from_labels, dilate, disk, erode, strip_border

__all__ = [
    "PrConfig",
    "MonoConfig",
    "MetricReport",
    "gt_boundary_from_labels",
    "predicted_boundary",
    "boundary_pr",
    "monosemantic_tokens",
    "monosemanticity",
    "size_distribution",
    "evaluate",
]


@dataclass(frozen=True)
class PrConfig:
    recall_tolerance: int = 5
    precision_tolerance: int = 5
    exclude_border: bool = True

    def __post_init__(self):
        if self.recall_tolerance < 0 or self.precision_tolerance < 0:
            raise ValueError("tolerances must be >= 0")


@dataclass(frozen=True)
class MonoConfig:
    erosion_tolerance: int = 25

    def __post_init__(self):
        if self.erosion_tolerance < 0:
            raise ValueError("erosion_tolerance must be >= 0")


@dataclass
class MetricReport:
    precision: float
    recall: float
    monosemanticity: float
    n_tokens: int
    size_distribution: list[float]


def _check_shapes(pred, gt):
    if pred.shape != gt.shape:
        raise ValueError(f"dimension mismatch: prediction {pred.shape} vs ground truth {gt.shape}")


def gt_boundary_from_labels(seg, kernel_size: int = 3, exclude_border: bool = True) -> np.ndarray:
    """Ground-truth boundary mask from a label map (dilation minus erosion)."""
    b = boundaries_from_labels(seg, kernel_size)
    return strip_border(b) if exclude_border else b


def predicted_boundary(pred, exclude_border: bool = True) -> np.ndarray:
    return gt_boundary_from_labels(pred, 3, exclude_border)


def boundary_pr(pred, gt_boundary, cfg: PrConfig = PrConfig()) -> tuple[float, float]:
    """Boundary precision and recall of a token map against a GT boundary mask.

    Recall counts GT boundary pixels within ``recall_tolerance`` of a
    predicted boundary pixel; precision counts predicted boundary pixels
    within ``precision_tolerance`` of GT. With ``exclude_border`` the
    one-pixel image frame is dropped from both masks. An empty GT gives
    recall 1, an empty prediction gives precision 1.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt_boundary, dtype=bool)
    _check_shapes(pred, gt)
    pb = predicted_boundary(pred, cfg.exclude_border)
    if cfg.exclude_border:
        gt = strip_border(gt)

    n_gt = int(gt.sum())
    n_pb = int(pb.sum())
    if n_gt == 0:
        recall = 1.0
    else:
        reach = dilate(pb, disk(2 * cfg.recall_tolerance + 1))
        recall = int((gt & reach).sum()) / n_gt
    if n_pb == 0:
        precision = 1.0
    else:
        reach = dilate(gt, disk(2 * cfg.precision_tolerance + 1))
        precision = int((pb & reach).sum()) / n_pb
    return precision, recall


def monosemantic_tokens(pred, gt_boundary, cfg: MonoConfig = MonoConfig()) -> np.ndarray:
    """Boolean flag per token id: True when its eroded core avoids every GT boundary pixel."""
    pred = np.asarray(pred)
    gt = np.asarray(gt_boundary, dtype=bool)
    _check_shapes(pred, gt)
    n = int(pred.max()) + 1
    se = disk(2 * cfg.erosion_tolerance + 1)
    flags = np.ones(n, dtype=bool)
    # erode each token inside its own bounding box; outside the box is not the
    # token, and outside the image is unset, so the crop loses nothing
    for tid, sl in enumerate(ndi.find_objects(pred + 1)):
        if sl is None:
            continue
        core = erode(pred[sl] == tid, se)
        flags[tid] = not np.any(core & gt[sl])
    return flags


def monosemanticity(pred, gt_boundary, cfg: MonoConfig = MonoConfig()) -> float:
    """Fraction of tokens whose eroded core does not touch a GT boundary.

    A token thinner than twice the tolerance erodes to nothing and counts as
    monosemantic.
    """
    flags = monosemantic_tokens(pred, gt_boundary, cfg)
    return float(flags.mean())


def size_distribution(seg) -> np.ndarray:
    """Relative token areas sorted from largest to smallest."""
    seg = np.asarray(seg)
    counts = np.bincount(seg.ravel())
    counts = counts[counts > 0]
    return np.sort(counts)[::-1] / seg.size


def evaluate(pred, gt_boundary, pr: PrConfig = PrConfig(), mono: MonoConfig = MonoConfig()) -> MetricReport:
    precision, recall = boundary_pr(pred, gt_boundary, pr)
    return MetricReport(
        precision=precision,
        recall=recall,
        monosemanticity=monosemanticity(pred, gt_boundary, mono),
        n_tokens=int(np.asarray(pred).max()) + 1,
        size_distribution=size_distribution(pred).tolist(),
    )
