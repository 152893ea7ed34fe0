"""Binary file formats: FMAP float rasters, SEG token maps, MLP1 weights, PNG.

All integers and floats are little-endian.

    FMAP  "FMP1" | u32 height | u32 width | u32 channels | f32 samples (HWC)
    SEG   "SEG1" | u32 height | u32 width | u32 n_tokens | u32 ids (row-major)
    MLP1  "MLP1" | u32 n_layers | per layer: u32 in, u32 out,
                                   f32 weights (out x in), f32 biases (out)
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .raster import validate_seg, SegValidationError

__all__ = [
    "FormatError",
    "BadMagicError",
    "TruncatedPayloadError",
    "DimensionError",
    "TokenIdRangeError",
    "read_fmap",
    "write_fmap",
    "read_seg",
    "write_seg",
    "read_mlp",
    "write_mlp",
    "read_png",
    "write_png",
    "png_to_fmap",
    "read_boundary_map",
]

FMAP_MAGIC = b"FMP1"
SEG_MAGIC = b"SEG1"
MLP_MAGIC = b"MLP1"

# refuse headers that would allocate more than this many samples
MAX_SAMPLES = 1 << 31


class FormatError(ValueError):
    """Base class for malformed binary files."""


class BadMagicError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class DimensionError(FormatError):
    pass


class TokenIdRangeError(FormatError):
    pass


def _check_magic(buf: bytes, magic: bytes, path) -> None:
    if buf[:4] != magic:
        raise BadMagicError(f"{path}: bad magic {buf[:4]!r}, expected {magic!r}")


def _header(buf: bytes, magic: bytes, path) -> tuple[int, int, int]:
    _check_magic(buf, magic, path)
    if len(buf) < 16:
        raise TruncatedPayloadError(f"{path}: truncated header ({len(buf)} bytes)")
    return struct.unpack_from("<III", buf, 4)


def _payload(buf: bytes, offset: int, count: int, dtype: str, path) -> np.ndarray:
    need = offset + 4 * count
    if len(buf) < need:
        raise TruncatedPayloadError(f"{path}: truncated payload, expected {need} bytes, got {len(buf)}")
    if len(buf) > need:
        raise DimensionError(f"{path}: {len(buf) - need} trailing bytes after declared payload")
    return np.frombuffer(buf, dtype=dtype, count=count, offset=offset)


def _check_dims(path, *dims: int) -> int:
    if any(d == 0 for d in dims):
        raise DimensionError(f"{path}: zero dimension in {dims}")
    total = 1
    for d in dims:
        total *= d
    if total > MAX_SAMPLES:
        raise DimensionError(f"{path}: dimension overflow, {dims} exceeds {MAX_SAMPLES} samples")
    return total


def read_fmap(path) -> np.ndarray:
    """Read an FMAP file as an ``(H, W, C)`` float32 array."""
    buf = Path(path).read_bytes()
    h, w, c = _header(buf, FMAP_MAGIC, path)
    total = _check_dims(path, h, w, c)
    data = _payload(buf, 16, total, "<f4", path)
    return data.reshape(h, w, c).astype(np.float32)


def write_fmap(path, fmap) -> None:
    arr = np.asarray(fmap, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"float map must be (H, W) or (H, W, C), got {arr.shape}")
    h, w, c = arr.shape
    _check_dims(path, h, w, c)
    with open(path, "wb") as fh:
        fh.write(FMAP_MAGIC + struct.pack("<III", h, w, c))
        fh.write(arr.astype("<f4").tobytes(order="C"))


def read_seg(path) -> np.ndarray:
    """Read a SEG file as an ``(H, W)`` int32 token index map."""
    buf = Path(path).read_bytes()
    h, w, n = _header(buf, SEG_MAGIC, path)
    total = _check_dims(path, h, w)
    if n == 0:
        raise DimensionError(f"{path}: n_tokens is 0")
    ids = _payload(buf, 16, total, "<u4", path)
    if ids.max() >= n:
        raise TokenIdRangeError(f"{path}: id out of range ({int(ids.max())} >= n_tokens {n})")
    seg = ids.reshape(h, w).astype(np.int32)
    try:
        validate_seg(seg, n)
    except SegValidationError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return seg


def write_seg(path, seg) -> None:
    seg = validate_seg(seg)
    h, w = seg.shape
    n = int(seg.max()) + 1
    with open(path, "wb") as fh:
        fh.write(SEG_MAGIC + struct.pack("<III", h, w, n))
        fh.write(seg.astype("<u4").tobytes(order="C"))


def read_mlp(path):
    """Read MLP1 weights; returns a list of ``(weight (out, in), bias (out,))``."""
    buf = Path(path).read_bytes()
    _check_magic(buf, MLP_MAGIC, path)
    if len(buf) < 8:
        raise TruncatedPayloadError(f"{path}: truncated header")
    (n_layers,) = struct.unpack_from("<I", buf, 4)
    if n_layers == 0:
        raise DimensionError(f"{path}: zero layers")
    layers = []
    off = 8
    for i in range(n_layers):
        if len(buf) < off + 8:
            raise TruncatedPayloadError(f"{path}: truncated header of layer {i}")
        d_in, d_out = struct.unpack_from("<II", buf, off)
        n = _check_dims(path, d_in, d_out)
        off += 8
        need = off + 4 * (n + d_out)
        if len(buf) < need:
            raise TruncatedPayloadError(f"{path}: truncated weights of layer {i}")
        weight = np.frombuffer(buf, "<f4", n, off).reshape(d_out, d_in)
        bias = np.frombuffer(buf, "<f4", d_out, off + 4 * n)
        layers.append((weight.astype(np.float32), bias.astype(np.float32)))
        off = need
    if off != len(buf):
        raise DimensionError(f"{path}: {len(buf) - off} trailing bytes")
    return layers


def write_mlp(path, layers) -> None:
    with open(path, "wb") as fh:
        fh.write(MLP_MAGIC + struct.pack("<I", len(layers)))
        for weight, bias in layers:
            weight = np.asarray(weight, dtype="<f4")
            bias = np.asarray(bias, dtype="<f4").ravel()
            d_out, d_in = weight.shape
            if bias.shape != (d_out,):
                raise ValueError(f"bias length {bias.shape} does not match weight rows {d_out}")
            fh.write(struct.pack("<II", d_in, d_out))
            fh.write(weight.tobytes(order="C"))
            fh.write(bias.tobytes())


_SIXTEEN_BIT = {"I;16", "I;16B", "I;16L", "I"}


def read_png(path) -> np.ndarray:
    """Read a PNG into an ``(H, W)`` or ``(H, W, 3)`` array.

    8-bit data comes back as ``uint8``; 16-bit grayscale as ``uint16``.
    Palette and alpha images are converted to RGB.
    """
    with Image.open(path) as im:
        im.load()
        if im.mode in _SIXTEEN_BIT:
            return np.asarray(im).astype(np.uint16)
        if im.mode == "L":
            return np.asarray(im).copy()
        if im.mode == "1":
            return np.asarray(im.convert("L")).copy()
        return np.asarray(im.convert("RGB")).copy()


def write_png(path, img) -> None:
    arr = np.asarray(img)
    if arr.dtype == np.uint16:
        if arr.ndim != 2:
            raise ValueError("16-bit PNG output is grayscale only")
        Image.fromarray(arr.astype("<u2")).save(path, format="PNG")
        return
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    if arr.dtype != np.uint8:
        raise ValueError(f"PNG output needs uint8 or uint16 samples, got {arr.dtype}")
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr).save(path, format="PNG")


def png_to_fmap(img: np.ndarray) -> np.ndarray:
    """Scale integer samples to ``[0, 1]`` by the maximum of their bit depth."""
    img = np.asarray(img)
    scale = 65535.0 if img.dtype == np.uint16 else 255.0
    out = img.astype(np.float32) / np.float32(scale)
    return out[:, :, None] if out.ndim == 2 else out


def read_boundary_map(path) -> np.ndarray:
    """Load a boundary map from FMAP or grayscale PNG as ``(H, W)`` float32."""
    path = Path(path)
    if path.suffix.lower() == ".png":
        fmap = png_to_fmap(read_png(path))
        if fmap.shape[2] != 1:
            # RGB boundary renderings: average the channels
            fmap = fmap.mean(axis=2, keepdims=True, dtype=np.float32)
    else:
        fmap = read_fmap(path)
    if fmap.shape[2] != 1:
        raise ValueError(f"{path}: boundary map must have 1 channel, got {fmap.shape[2]}")
    return fmap[:, :, 0]
