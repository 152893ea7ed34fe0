"""Command-line entry point: ``subtok <command> ...``.

Machine-readable results go to stdout as CSV (header + rows); human-readable
summaries go to stderr. Exit status is 0 on success, 1 on invalid arguments
or data, 2 on file-system or file-format errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import BenchConfig, run_bench
from .embedding import MlpWeights, content_embed, fuse, position_embed, truncate, upsample
from .fileio import (
    FormatError,
    png_to_fmap,
    read_boundary_map,
    read_fmap,
    read_mlp,
    read_png,
    read_seg,
    write_fmap,
    write_png,
    write_seg,
)
from .metrics import MonoConfig, PrConfig, boundary_pr, gt_boundary_from_labels, monosemanticity, size_distribution
from .patch import PatchConfig, patch_segment
from .slic import SlicConfig, slic_segment
from .viz import visualize
from .watershed import WatershedConfig, epoc_segment, gradient_boundary

log = logging.getLogger("subtok")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _csv(header, *rows):
    print(",".join(header))
    for row in rows:
        print(",".join(str(v) for v in row))


def _fmt(x: float) -> str:
    return repr(float(x))


def _load_gt_boundary(path, kernel: int, exclude_border: bool) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".png":
        img = read_png(path)
        if img.ndim == 3:
            img = img.max(axis=2)
        return img > 0
    return gt_boundary_from_labels(read_seg(path), kernel, exclude_border)


def cmd_tokenize(args) -> None:
    if args.method == "patch":
        if args.input:
            h, w = read_png(args.input).shape[:2]
        elif args.boundary:
            h, w = read_boundary_map(args.boundary).shape
        elif args.height and args.width:
            h, w = args.height, args.width
        else:
            raise ValueError("patch tokenization needs --input, --boundary, or --height and --width")
        seg = patch_segment(h, w, PatchConfig(args.p))
    elif args.method == "slic":
        if not args.input:
            raise ValueError("slic tokenization needs --input <image.png>")
        cfg = SlicConfig(args.k, args.compactness, args.iters, not args.no_connectivity)
        seg = slic_segment(read_png(args.input), cfg)
    else:
        if args.boundary:
            P = read_boundary_map(args.boundary)
        elif args.input:
            P = gradient_boundary(read_png(args.input), args.radius)
        else:
            raise ValueError("epoc tokenization needs --boundary <map.fmap|png> (or --input <image.png>)")
        cfg = WatershedConfig(args.t, args.flood_connectivity, args.seed_connectivity)
        seg = epoc_segment(P, cfg)
    write_seg(args.out, seg)
    n = int(seg.max()) + 1
    _csv(["n_tokens", "height", "width"], [n, *seg.shape])
    log.info("%s: %d tokens on %dx%d -> %s", args.method, n, seg.shape[0], seg.shape[1], args.out)


def cmd_boundary(args) -> None:
    P = gradient_boundary(read_png(args.input), args.radius)
    write_fmap(args.out, P)
    _csv(["height", "width", "max"], [P.shape[0], P.shape[1], _fmt(P.max())])


def cmd_metrics(args) -> None:
    pred = read_seg(args.pred)
    if args.kind == "sizes":
        sizes = size_distribution(pred)
        _csv(["n_tokens", "largest", "smallest", "sizes"], [len(sizes), _fmt(sizes[0]), _fmt(sizes[-1]), " ".join(_fmt(s) for s in sizes)])
        return
    if not args.gt:
        raise ValueError(f"metrics {args.kind} needs --gt")
    gt = _load_gt_boundary(args.gt, args.gt_kernel, not args.keep_border)
    if args.kind == "pr":
        cfg = PrConfig(args.tol_recall, args.tol_precision, not args.keep_border)
        precision, recall = boundary_pr(pred, gt, cfg)
        _csv(["precision", "recall"], [_fmt(precision), _fmt(recall)])
        log.info("precision %.4f  recall %.4f", precision, recall)
    else:
        score = monosemanticity(pred, gt, MonoConfig(args.tol_mono))
        _csv(["monosemanticity", "n_tokens"], [_fmt(score), int(pred.max()) + 1])
        log.info("monosemanticity %.4f", score)


def cmd_embed(args) -> None:
    seg = read_seg(args.seg)
    path = Path(args.features)
    feats = png_to_fmap(read_png(path)) if path.suffix.lower() == ".png" else read_fmap(path)
    feats = upsample(feats, seg.shape[0], seg.shape[1], args.upsample)
    content = content_embed(feats, seg)
    position = position_embed(seg, args.mask_res)
    if args.weights:
        out = fuse(content, position, MlpWeights(read_mlp(args.weights), args.activation))
    else:
        out = np.concatenate([content, position], axis=1)
    write_fmap(args.out, out.astype(np.float32)[:, :, None])
    _csv(["n_tokens", "dim"], [out.shape[0], out.shape[1]])


def cmd_truncate(args) -> None:
    seg = read_seg(args.seg)
    keep, fraction = truncate(seg, args.budget, args.strategy, args.seed)
    _csv(["n_retained", "area_fraction", "ids"], [len(keep), _fmt(fraction), " ".join(map(str, keep))])


def cmd_bench(args) -> None:
    params = {
        "patch": {"p": args.p},
        "slic": {"k": args.k, "compactness": args.compactness, "iterations": args.iters},
        "epoc": {"t": args.t},
    }[args.method]
    try:
        workers = [int(w) for w in args.workers.split(",") if w.strip()]
    except ValueError:
        raise ValueError(f"--workers must be a comma-separated list of integers, got {args.workers!r}") from None
    cfg = BenchConfig(
        method=args.method,
        params=params,
        worker_counts=workers,
        batch_size=args.batch,
        count=None if args.duration else args.count,
        duration=args.duration,
        input_dir=args.inputs,
        image_size=args.size,
    )
    report = run_bench(cfg)
    text = report.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    log.info("peak %.2f fps", report.peak_fps)


def cmd_visualize(args) -> None:
    seg = read_seg(args.seg)
    base = read_png(args.base) if args.base else None
    write_png(args.out, visualize(seg, base, args.alpha))


def _method_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("method flags")
    g.add_argument("--p", type=int, default=16, help="patch: patches per side (default 16)")
    g.add_argument("--k", type=int, default=64, help="slic: target number of superpixels (default 64)")
    g.add_argument("--compactness", type=float, default=10.0, help="slic: compactness m (default 10)")
    g.add_argument("--iters", type=int, default=10, help="slic: k-means iterations (default 10)")
    g.add_argument("--t", type=float, default=0.3, help="epoc: seed threshold in (0, 1) (default 0.3)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="subtok", description="Subobject-level image tokenization toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true", help="no summaries on stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("tokenize", help="segment an image or boundary map into tokens")
    p.add_argument("--method", choices=("patch", "slic", "epoc"), required=True)
    p.add_argument("--input", help="RGB/grayscale PNG image")
    p.add_argument("--boundary", help="boundary probability map (.fmap or grayscale .png)")
    p.add_argument("--height", type=int, help="patch: image height when no input is given")
    p.add_argument("--width", type=int, help="patch: image width when no input is given")
    _method_flags(p)
    p.add_argument("--no-connectivity", action="store_true", help="slic: skip connectivity enforcement")
    p.add_argument("--flood-connectivity", type=int, choices=(4, 8), default=4, help="epoc (default 4)")
    p.add_argument("--seed-connectivity", type=int, choices=(4, 8), default=8, help="epoc (default 8)")
    p.add_argument("--radius", type=int, default=1, help="epoc from --input: blur radius of the gradient boundary (default 1)")
    p.add_argument("--out", required=True, help="output SEG file")
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("boundary", help="gradient-based boundary map of an image")
    p.add_argument("--input", required=True, help="PNG image")
    p.add_argument("--radius", type=int, default=1, help="box-blur radius in pixels (default 1)")
    p.add_argument("--out", required=True, help="output FMAP file")
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("metrics", help="boundary precision/recall, monosemanticity, token sizes")
    p.add_argument("kind", choices=("pr", "mono", "sizes"))
    p.add_argument("--pred", required=True, help="predicted SEG file")
    p.add_argument("--gt", help="ground truth: SEG label map, or PNG boundary mask (nonzero = boundary)")
    p.add_argument("--tol-recall", type=int, default=5, help="recall tolerance in px (default 5)")
    p.add_argument("--tol-precision", type=int, default=5, help="precision tolerance in px (default 5)")
    p.add_argument("--tol-mono", type=int, default=25, help="monosemanticity erosion in px (default 25)")
    p.add_argument("--gt-kernel", type=int, default=3, help="kernel for SEG-to-boundary conversion (default 3)")
    p.add_argument("--keep-border", action="store_true", help="keep the 1-px image frame in boundary masks")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("embed", help="content + position token embeddings")
    p.add_argument("--features", required=True, help="feature map (.fmap, or .png for raw pixels)")
    p.add_argument("--seg", required=True)
    p.add_argument("--mask-res", type=int, default=16, help="shape mask resolution (default 16)")
    p.add_argument("--weights", help="MLP1 weights; without them the raw concatenation is written")
    p.add_argument("--activation", choices=("relu", "gelu", "identity"), default="relu")
    p.add_argument("--upsample", choices=("bilinear", "nearest"), default="bilinear")
    p.add_argument("--out", required=True, help="output FMAP (height = tokens, width = dim)")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("truncate", help="choose tokens to keep under a budget")
    p.add_argument("--seg", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--strategy", choices=("smallest-first", "random"), default="smallest-first")
    p.add_argument("--seed", type=int, default=0, help="random strategy seed (default 0)")
    p.set_defaults(func=cmd_truncate)

    p = sub.add_parser("bench", help="multi-process throughput benchmark")
    p.add_argument("--method", choices=("patch", "slic", "epoc"), required=True)
    _method_flags(p)
    p.add_argument("--workers", default="1", help="comma-separated worker levels, ascending (default 1)")
    p.add_argument("--batch", type=int, default=10, help="images per batch (default 10)")
    p.add_argument("--count", type=int, default=100, help="images per level (default 100)")
    p.add_argument("--duration", type=float, help="seconds per level instead of --count")
    p.add_argument("--size", type=int, default=768, help="synthetic input size in px (default 768)")
    p.add_argument("--inputs", help="directory of inputs instead of synthetic data")
    p.add_argument("--out", help="CSV report path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("visualize", help="render a token map as a colour PNG")
    p.add_argument("--seg", required=True)
    p.add_argument("--base", help="PNG to blend under the token colours")
    p.add_argument("--alpha", type=float, default=0.5, help="token colour weight (default 0.5)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_visualize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (FormatError, OSError) as exc:
        print(f"subtok: I/O error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"subtok: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
