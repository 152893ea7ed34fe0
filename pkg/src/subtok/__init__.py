"""Subobject-level image tokenization.

Token maps from boundary-seeded watershed (``epoc_segment``), square patches
and SLIC superpixels, plus metrics, token embeddings and a throughput harness.
"""
from .embedding import MlpWeights, content_embed, fuse, position_embed, truncate, upsample
from .metrics import MonoConfig, PrConfig, boundary_pr, monosemanticity, size_distribution
from .patch import InvalidGranularityError, PatchConfig, patch_segment
from .raster import boundaries_from_labels, connected_components, dilate, disk, erode
from .slic import SlicConfig, rgb_to_lab, slic_segment
from .watershed import WatershedConfig, epoc_segment, extract_seeds, gradient_boundary, watershed_flood

__version__ = "0.1.0"
