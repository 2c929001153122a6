"""Command-line entry point: ``hiermatch {train,find,bench,transform,inspect-geometry,synth}``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import BenchConfig, emit_report, format_table, run_benchmark, sample_points
from .corpus import textured_image
from .gabor import make_bank
from .imagekit import TransformSpec, apply_transform, load_image, save_image, table1_transforms
from .matcher import SearchConfig, find
from .template import load_template, save_template, train
from .topology import StackConfig, geometry_rows, layer_sigma

CANDIDATE_COLUMNS = (
    "key_point", "seed_x", "seed_y", "l", "l_prime", "m_prime", "scale",
    "cl_x", "cl_y", "fl_x", "fl_y", "eval", "degenerate",
)

_DEFAULT_STACK = StackConfig()


def _parse_points(text: str) -> list[tuple[float, float]]:
    pts = []
    for chunk in text.replace(" ", "").split(";"):
        if not chunk:
            continue
        x, _, y = chunk.partition(",")
        if not y:
            raise ValueError(f"bad point {chunk!r}; expected x,y")
        pts.append((float(x), float(y)))
    if not pts:
        raise ValueError("no points given")
    return pts


def _add_stack_args(p: argparse.ArgumentParser) -> None:
    d = _DEFAULT_STACK
    p.add_argument("--layers", type=int, default=d.num_layers, help="number of layers M (default: %(default)s)")
    p.add_argument("--sigma", type=float, default=d.base_sigma, help="Gabor sigma of layer 1 in pixels (default: %(default)s)")
    p.add_argument("--orientations", type=int, default=d.orientations, help="Gabor orientations per layer (default: %(default)s)")
    p.add_argument(
        "--spacing-factor", type=float, default=d.element_spacing_factor,
        help="element spacing in units of 2 RF diameters (default: %(default)s)",
    )
    p.add_argument("--bandwidth", type=float, default=d.bandwidth, help="Gabor bandwidth in octaves (default: %(default)s)")


def _stack_from(args) -> StackConfig:
    return StackConfig(args.layers, args.sigma, args.orientations, args.spacing_factor, args.bandwidth)


def cmd_train(args) -> int:
    img = load_image(args.image)
    cfg = _stack_from(args)
    if args.points:
        points = _parse_points(args.points)
    elif args.random:
        points = sample_points(img.shape, cfg, args.random, args.seed)
    else:
        raise ValueError("give --points or --random N")
    t = train(img, points, cfg, source_image_id=Path(args.image).name)
    save_template(t, args.out)
    print(f"trained {len(points)} key point(s), {cfg.num_layers} layers -> {args.out}")
    return 0


def _draw_cross(img: np.ndarray, x: float, y: float) -> None:
    h, w = img.shape
    cx, cy = int(round(x)), int(round(y))
    for dx, dy in ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)):
        px, py = cx + dx, cy + dy
        if 0 <= px < w and 0 <= py < h:
            img[py, px] = 1.0 if (dx, dy) == (0, 0) or img[py, px] < 0.5 else 0.0


def cmd_find(args) -> int:
    img = load_image(args.image)
    t = load_template(args.template)
    scfg = SearchConfig(
        scan_layer=args.scan_layer, subregion=args.subregion, eval_elements=args.eval_elements,
        threshold=args.threshold, energy_threshold=args.energy_threshold,
    )
    result = find(img, t, scfg)
    chosen = result.selected()
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(CANDIDATE_COLUMNS)
        for c in chosen:
            w.writerow((
                c.key_point_index, f"{c.seed[0]:.2f}", f"{c.seed[1]:.2f}",
                c.coarse.query_element, c.coarse.template_element, c.coarse.template_layer,
                f"{c.coarse.estimated_scale:.6f}",
                f"{c.coarse.corrected_location[0]:.2f}", f"{c.coarse.corrected_location[1]:.2f}",
                f"{c.final_location[0]:.2f}", f"{c.final_location[1]:.2f}",
                f"{c.eval_score:.6g}", int(c.degenerate),
            ))
    finally:
        if out is not sys.stdout:
            out.close()
    if args.overlay:
        over = img.copy()
        for c in chosen:
            if c.in_bounds:
                _draw_cross(over, *c.final_location)
        save_image(over, args.overlay)
    s = result.stats
    print(
        f"{len(chosen)} candidate(s); similarity evaluations {s.similarity_evaluations}, "
        f"subregions visited {s.subregions_visited}",
        file=sys.stderr,
    )
    return 0


def cmd_bench(args) -> int:
    transforms = table1_transforms(args.seed)
    if args.transforms:
        transforms = [TransformSpec.parse(s, args.seed) for s in args.transforms.split(",")]
    cfg = BenchConfig(
        image=args.image, n_points=args.points, seed=args.seed, transforms=transforms,
        tolerance=args.tolerance, subregion=args.subregion,
        eval_T=tuple(int(v) for v in args.eval_elements.split(",")),
        stack=_stack_from(args), scan_layer=args.scan_layer, corpus_size=args.corpus_size,
    )
    result = run_benchmark(cfg)
    if args.out:
        emit_report(result, args.out)
    print(format_table(result))
    return 0


def cmd_transform(args) -> int:
    img = load_image(args.image)
    spec = TransformSpec.parse(args.spec, args.seed)
    out, cm = apply_transform(img, spec)
    save_image(out, args.out)
    if args.map:
        Path(args.map).write_text("a,b,c,d,tx,ty\n" + cm.to_csv_row() + "\n")
    print(f"{spec.name}: {img.shape[1]}x{img.shape[0]} -> {out.shape[1]}x{out.shape[0]}")
    return 0


def cmd_inspect_geometry(args) -> int:
    cfg = _stack_from(args)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(("layer", "kind", "index", "dx", "dy", "radius"))
        for layer, kind, idx, dx, dy, r in geometry_rows(cfg):
            w.writerow((layer, kind, idx, repr(dx), repr(dy), repr(r)))
    finally:
        if out is not sys.stdout:
            out.close()
    if args.dump_kernels:
        d = Path(args.dump_kernels)
        d.mkdir(parents=True, exist_ok=True)
        for m in range(1, cfg.num_layers + 1):
            bank = make_bank(layer_sigma(cfg, m), cfg.orientations, cfg.bandwidth)
            for o, k in enumerate(bank.kernels):
                np.savetxt(d / f"kernel_m{m}_o{o}.csv", k.weights, delimiter=",", fmt="%.17g")
    return 0


def cmd_synth(args) -> int:
    save_image(textured_image(args.size, seed=args.seed), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hiermatch", description="Hierarchical Gabor feature matching.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="build a template from key points in a reference image")
    t.add_argument("--image", required=True, help="reference image (PGM or PNG)")
    t.add_argument("--points", help='key points as "x1,y1;x2,y2"')
    t.add_argument("--random", type=int, metavar="N", help="sample N random key points instead of --points")
    t.add_argument("--seed", type=int, default=0, help="seed for --random (default: %(default)s)")
    t.add_argument("--out", required=True, help="output template file (.hmtp)")
    _add_stack_args(t)
    t.set_defaults(func=cmd_train)

    f = sub.add_parser("find", help="search a template's key points in a query image")
    f.add_argument("--image", required=True, help="query image (PGM or PNG)")
    f.add_argument("--template", required=True, help="template file from `train`")
    f.add_argument(
        "--subregion", type=int, default=None,
        help="seed grid cell side in pixels (default: 150 per 800 px of the shorter image side)",
    )
    f.add_argument("--scan-layer", type=int, default=None, help="coarse scan layer (default: layers - 2)")
    f.add_argument("--eval-elements", type=int, choices=(1, 19), default=19, help="elements in the evaluation (default: %(default)s)")
    f.add_argument(
        "--threshold", type=float, default=0.0,
        help="report every candidate scoring at least this; 0 reports the best per key point (default: %(default)s)",
    )
    f.add_argument("--energy-threshold", type=float, default=0.0, help="drop cells with lower mean gradient (default: %(default)s)")
    f.add_argument("--out", help="candidates CSV (default: stdout)")
    f.add_argument("--overlay", help="write a copy of the query with crosses at final locations (PGM)")
    f.set_defaults(func=cmd_find)

    b = sub.add_parser("bench", help="run the transformation-robustness benchmark")
    b.add_argument("--image", help="reference image (default: synthetic textured corpus)")
    b.add_argument("--points", type=int, default=100, help="number of random key points (default: %(default)s)")
    b.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")
    b.add_argument("--transforms", help="comma-separated specs, e.g. scale:0.5,rotate:10 (default: table rows A-I)")
    b.add_argument("--tolerance", type=float, default=8.0, help="hit radius in pixels (default: %(default)s)")
    b.add_argument("--subregion", type=int, default=None, help="seed grid cell side (default: 150 per 800 px of image side)")
    b.add_argument("--scan-layer", type=int, default=None, help="coarse scan layer (default: layers - 2)")
    b.add_argument("--eval-elements", default="19,1", help="evaluation modes to report (default: %(default)s)")
    b.add_argument("--corpus-size", type=int, default=512, help="side of the synthetic image (default: %(default)s)")
    b.add_argument("--out", help="CSV report path")
    _add_stack_args(b)
    b.set_defaults(func=cmd_bench)

    x = sub.add_parser("transform", help="apply one benchmark transformation to an image")
    x.add_argument("--image", required=True)
    x.add_argument("--spec", required=True, help="e.g. scale:0.5, rotate:10, contrast:1.2+brightness:-0.2")
    x.add_argument("--seed", type=int, default=0, help="seed for pixel noise (default: %(default)s)")
    x.add_argument("--out", required=True, help="output PGM")
    x.add_argument("--map", help="write the coordinate map as CSV (a,b,c,d,tx,ty)")
    x.set_defaults(func=cmd_transform)

    g = sub.add_parser("inspect-geometry", help="print every RF and element offset as CSV")
    g.add_argument("--out", help="CSV path (default: stdout)")
    g.add_argument("--dump-kernels", metavar="DIR", help="also write every Gabor kernel as a CSV grid into DIR")
    _add_stack_args(g)
    g.set_defaults(func=cmd_inspect_geometry)

    s = sub.add_parser("synth", help="write the synthetic textured test image")
    s.add_argument("--size", type=int, default=512, help="image side (default: %(default)s)")
    s.add_argument("--seed", type=int, default=0, help="seed (default: %(default)s)")
    s.add_argument("--out", required=True, help="output PGM")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"hiermatch {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
