"""Command-line pipeline: gen, reconstruct, baseline, refine, eval, render."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import baseline, metrics, morphology, phantom, search, volume

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3

LABEL_GREY = np.array([0, 128, 255], dtype=np.uint8)


class UsageError(Exception):
    """Bad arguments or configuration; exit code 2."""


class DataError(Exception):
    """Inputs that are well-formed but unusable together; exit code 3."""


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> None:
    if not os.path.isfile(args.spec):
        raise UsageError(f"phantom spec not found: {args.spec}")
    spec = phantom.load_spec(args.spec)
    ph = phantom.generate(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    volume.save_probability_volume(ph.inner, os.path.join(args.out_dir, "inner.tbv"))
    volume.save_probability_volume(ph.outer, os.path.join(args.out_dir, "outer.tbv"))
    volume.save_label_volume(ph.gt, os.path.join(args.out_dir, "gt.tbv"))
    volume.save_slice_meta(ph.healthy, os.path.join(args.out_dir, "meta.json"))


def search_params(args) -> search.SearchParams:
    return search.SearchParams(
        section_len=args.M, t_inner=args.T_inner, t_outer=args.T_outer, stack=args.S,
        beam_side=args.beam, log_floor=args.log_floor, scale_threshold=args.scale_threshold)


def cmd_reconstruct(args) -> None:
    params = search_params(args)
    inner = volume.load_probability_volume(args.inner)
    outer = volume.load_probability_volume(args.outer)
    labels = search.reconstruct_artery(inner, outer, params, threads=args.threads)
    volume.save_label_volume(labels, args.out)
    if args.contours:
        _write_contours(labels, args.contours, not args.no_skeleton, args.all_contours, args.threads)


def cmd_baseline(args) -> None:
    inner = volume.load_probability_volume(args.inner)
    outer = volume.load_probability_volume(args.outer)
    if args.fixed_threshold is not None and not 0.0 <= args.fixed_threshold <= 1.0:
        raise UsageError(f"--fixed-threshold must lie in [0, 1], got {args.fixed_threshold}")
    volume.save_label_volume(baseline.baseline_reconstruct(inner, outer, args.fixed_threshold), args.out)


def cmd_refine(args) -> None:
    labels = volume.load_label_volume(args.labels)
    _write_contours(labels, args.out, not args.no_skeleton, args.all_contours, args.threads)


def _write_contours(labels, path, skeleton, all_contours, threads):
    pools = morphology.refine_all(labels, skeleton=skeleton, threads=threads)
    chosen = [tuple(p[0] if p else morphology.Contour() for p in pair) for pair in pools]
    morphology.save_contours(path, chosen, pools if all_contours else None, skeleton=skeleton)


def cmd_eval(args) -> None:
    try:
        contours = morphology.load_contours(args.contours)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    gt = volume.load_label_volume(args.gt)
    healthy = volume.load_slice_meta(args.meta)
    spacing = volume.load_spacing(args.spacing) if args.spacing else None
    report = metrics.evaluate(contours, gt, healthy, spacing)
    root, _ = os.path.splitext(args.report)
    metrics.save_report(report, args.report, root + ".csv")


def cmd_render(args) -> None:
    kind, vol = volume.read_tbv(args.volume)
    if vol.size == 0:
        raise DataError(f"{args.volume}: volume is empty ({'x'.join(map(str, vol.shape))})")
    if not 0 <= args.slice < vol.shape[0]:
        raise DataError(f"slice {args.slice} out of range [0, {vol.shape[0]})")
    plane = vol[args.slice]
    if kind == volume.KIND_PROBABILITY:
        plane = volume.as_probability_volume(plane[None])[0]
        img = np.rint(plane.astype(np.float64) * 255).astype(np.uint8)
    elif kind == volume.KIND_LABEL:
        img = LABEL_GREY[volume.as_label_volume(plane[None])[0]]
    else:
        img = volume.as_mask(plane, 2).astype(np.uint8) * 255
    if args.contours:
        img = img.copy()
        try:
            pairs = morphology.load_contours(args.contours)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
        if len(pairs) != vol.shape[0]:
            raise DataError(f"{len(pairs)} contour slices for a {vol.shape[0]}-slice volume")
        for pts in pairs[args.slice]:
            inside = (pts[:, 0] >= 0) & (pts[:, 0] < img.shape[0]) & (pts[:, 1] >= 0) & (pts[:, 1] < img.shape[1])
            pts = pts[inside]
            img[pts[:, 0], pts[:, 1]] = 255
    write_pgm(args.out, img)


def write_pgm(path, img: np.ndarray) -> None:
    """Binary greyscale PGM (P5, maxval 255)."""
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_search_flags(p):
    d = search.SearchParams()
    p.add_argument("--M", type=int, default=d.section_len, help="section length in slices")
    p.add_argument("--T-inner", dest="T_inner", type=float, default=d.t_inner,
                   help="log-probability threshold, inner boundary")
    p.add_argument("--T-outer", dest="T_outer", type=float, default=d.t_outer,
                   help="log-probability threshold, outer boundary")
    p.add_argument("--S", type=int, default=d.stack, help="children explored per expansion")
    p.add_argument("--beam", type=int, default=d.beam_side, help="odd side of the square beam")
    p.add_argument("--log-floor", type=float, default=d.log_floor, help="probability floor before the log")
    p.add_argument("--scale-threshold", action="store_true",
                   help="scale T by length/M for a short final section")


def _add_refine_flags(p):
    p.add_argument("--no-skeleton", action="store_true",
                   help="take contours from the raw regions, without thinning")
    p.add_argument("--all-contours", action="store_true",
                   help="also export every candidate contour per slice")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tbss", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic phantom from a JSON spec")
    p.add_argument("spec")
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("reconstruct", help="run the search on inner/outer probability volumes")
    p.add_argument("inner")
    p.add_argument("outer")
    p.add_argument("out")
    _add_search_flags(p)
    p.add_argument("--contours", metavar="PATH", help="also refine and write contours JSON")
    _add_refine_flags(p)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("baseline", help="global Otsu (or fixed) thresholding")
    p.add_argument("inner")
    p.add_argument("outer")
    p.add_argument("out")
    p.add_argument("--fixed-threshold", type=float)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("refine", help="contours of a label volume")
    p.add_argument("labels")
    p.add_argument("out")
    _add_refine_flags(p)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("eval", help="Hausdorff report of contours against ground truth")
    p.add_argument("contours")
    p.add_argument("gt")
    p.add_argument("meta")
    p.add_argument("report", help="JSON report path; the CSV goes alongside")
    p.add_argument("--spacing", metavar="PATH", help="spacing JSON; report in millimetres")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="write one slice as a PGM image")
    p.add_argument("volume")
    p.add_argument("slice", type=int)
    p.add_argument("out")
    p.add_argument("--contours", metavar="PATH", help="overlay contours at full intensity")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("tbss: error: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        args.func(args)
    except (UsageError, phantom.PhantomSpecError, FileNotFoundError) as exc:
        print(f"tbss {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, volume.VolumeError, baseline.DegenerateInputError, json.JSONDecodeError) as exc:
        print(f"tbss {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # parameter validation (SearchParams and friends)
        print(f"tbss {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
