"""Multi-process tokenizer throughput harness.

For each worker level, that many independent processes loop batches of
inputs through one tokenizer. They all start together at a barrier, and the
parent times the level from barrier release until the last worker reports.
"""
from __future__ import annotations

import csv
import io
import logging
import multiprocessing as mp
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage as ndi

from .fileio import read_boundary_map, read_png
from .patch import PatchConfig, patch_segment
from .slic import SlicConfig, slic_segment
from .watershed import WatershedConfig, epoc_segment

__all__ = [
    "BenchConfig",
    "LevelResult",
    "BenchReport",
    "make_tokenizer",
    "synthetic_inputs",
    "load_inputs",
    "run_bench",
]

log = logging.getLogger(__name__)

METHODS = ("patch", "slic", "epoc")


@dataclass
class BenchConfig:
    method: str = "patch"
    params: dict = field(default_factory=dict)
    worker_counts: list[int] = field(default_factory=lambda: [1])
    batch_size: int = 10
    count: int | None = 100  # images per level, split across workers
    duration: float | None = None  # seconds per level; used when count is None
    input_dir: str | None = None
    image_size: int = 768
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}, choose from {METHODS}")
        if not self.worker_counts:
            raise ValueError("worker_counts must not be empty")
        if any(w < 1 for w in self.worker_counts) or list(self.worker_counts) != sorted(self.worker_counts):
            raise ValueError(f"worker_counts must be positive and ascending, got {self.worker_counts}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.count is None and self.duration is None:
            raise ValueError("set either count or duration")
        if self.count is not None and self.count < 1:
            raise ValueError("count must be >= 1")
        if self.count is None and not self.duration > 0:
            raise ValueError("duration must be positive")


@dataclass
class LevelResult:
    workers: int
    seconds: float
    images: int
    per_worker: list[int]

    @property
    def fps(self) -> float:
        return self.images / self.seconds if self.seconds > 0 else float("inf")


@dataclass
class BenchReport:
    method: str
    levels: list[LevelResult]

    @property
    def peak_fps(self) -> float:
        return max(level.fps for level in self.levels)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["workers", "seconds", "images", "fps"])
        for level in self.levels:
            writer.writerow([level.workers, f"{level.seconds:.6f}", level.images, f"{level.fps:.3f}"])
        return buf.getvalue()


def make_tokenizer(method: str, params: dict | None = None):
    """Build ``tokenize(array) -> token index map`` for a method name.

    ``patch`` uses only the input's height and width, ``slic`` expects an RGB
    image, and ``epoc`` expects a boundary probability map.
    """
    params = dict(params or {})
    if method == "patch":
        cfg = PatchConfig(**params)

        def tokenize(x):
            return patch_segment(x.shape[0], x.shape[1], cfg)

    elif method == "slic":
        cfg = SlicConfig(**params)

        def tokenize(x):
            return slic_segment(x, cfg)

    elif method == "epoc":
        cfg = WatershedConfig(**params)

        def tokenize(x):
            return epoc_segment(x, cfg)

    else:
        raise ValueError(f"unknown method {method!r}, choose from {METHODS}")
    return tokenize


def synthetic_inputs(method: str, n: int, size: int, seed: int = 0) -> list[np.ndarray]:
    """Random smooth inputs: boundary maps for ``epoc``, RGB images otherwise."""
    rng = np.random.default_rng(seed)
    out = []
    sigma = max(1.0, size / 64)
    for _ in range(n):
        if method == "epoc":
            field_ = ndi.gaussian_filter(rng.random((size, size)), sigma)
            # fold the smooth field into thin ridges around its median level
            ridge = np.abs(field_ - np.median(field_))
            ridge = 1.0 - ridge / max(ridge.max(), 1e-12)
            out.append((ridge**8).astype(np.float32))
        else:
            img = ndi.gaussian_filter(rng.random((size, size, 3)), (sigma, sigma, 0))
            img = (img - img.min()) / max(img.max() - img.min(), 1e-12)
            out.append((img * 255).astype(np.uint8))
    return out


def load_inputs(method: str, directory) -> list[np.ndarray]:
    directory = Path(directory)
    suffixes = {".fmap", ".png"} if method == "epoc" else {".png"}
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in suffixes)
    if not files:
        raise ValueError(f"no usable inputs ({', '.join(sorted(suffixes))}) in {directory}")
    if method == "epoc":
        return [read_boundary_map(p) for p in files]
    return [read_png(p) for p in files]


def _worker(idx, cfg: BenchConfig, quota, barrier, results):
    try:
        tokenize = make_tokenizer(cfg.method, cfg.params)
        if cfg.input_dir is not None:
            pool = load_inputs(cfg.method, cfg.input_dir)
        else:
            pool = synthetic_inputs(cfg.method, cfg.batch_size, cfg.image_size, cfg.seed + idx)
        tokenize(pool[0])  # warm-up outside the timed region (JIT, caches)
    except Exception as exc:  # reported to the parent, which raises
        barrier.abort()
        results.put((idx, None, f"{type(exc).__name__}: {exc}"))
        return
    try:
        barrier.wait()
    except Exception:  # another worker aborted the start barrier
        results.put((idx, None, "start barrier broken"))
        return
    start = time.perf_counter()
    done = 0
    cursor = 0
    while True:
        if quota is not None:
            if done >= quota:
                break
            n = min(cfg.batch_size, quota - done)
        else:
            if time.perf_counter() - start >= cfg.duration:
                break
            n = cfg.batch_size
        for _ in range(n):
            tokenize(pool[cursor % len(pool)])
            cursor += 1
        done += n
    results.put((idx, done, None))


def _split(count: int, workers: int) -> list[int]:
    base, extra = divmod(count, workers)
    return [base + (i < extra) for i in range(workers)]


def _run_level(cfg: BenchConfig, workers: int, ctx) -> LevelResult:
    barrier = ctx.Barrier(workers + 1)
    results = ctx.Queue()
    quotas = _split(cfg.count, workers) if cfg.count is not None else [None] * workers
    procs = [ctx.Process(target=_worker, args=(i, cfg, quotas[i], barrier, results), daemon=True) for i in range(workers)]
    for p in procs:
        p.start()
    try:
        barrier.wait()
    except Exception:
        pass  # a worker aborted during setup; its error is in the queue
    start = time.perf_counter()
    per_worker = [0] * workers
    errors = []
    for _ in range(workers):
        idx, done, err = results.get()
        if err is not None:
            errors.append(err)
        else:
            per_worker[idx] = done
    seconds = time.perf_counter() - start
    for p in procs:
        p.join()
    if errors:
        raise RuntimeError(f"benchmark worker failed: {errors[0]}")
    return LevelResult(workers, seconds, sum(per_worker), per_worker)


def run_bench(cfg: BenchConfig) -> BenchReport:
    # fail early in the parent on bad tokenizer parameters or missing inputs
    make_tokenizer(cfg.method, cfg.params)
    if cfg.input_dir is not None:
        load_inputs(cfg.method, cfg.input_dir)
    ctx = mp.get_context("spawn")
    levels = []
    for workers in cfg.worker_counts:
        level = _run_level(cfg, workers, ctx)
        log.info("%d worker(s): %d images in %.3fs, %.2f fps", workers, level.images, level.seconds, level.fps)
        levels.append(level)
    return BenchReport(cfg.method, levels)
