"""Transformation-robustness benchmark: train on random points, search them in
transformed copies, count hits within a pixel tolerance of the mapped truth."""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import textured_image
from .imagekit import TransformSpec, apply_transform, load_image, map_point, table1_transforms
from .matcher import SearchConfig, Searcher
from .template import Template, train
from .topology import StackConfig, layer_geometry

CSV_HEADER = ("transform", "eval_T", "hits", "rate_pct", "mean_err_px", "wall_ms", "sim_evals")


def thread_count() -> int:
    n = int(os.environ.get("HIERMATCH_THREADS", "0") or 0)
    return n if n > 0 else (os.cpu_count() or 1)


@dataclass
class BenchConfig:
    image: str | None = None  # None: the synthetic corpus
    n_points: int = 100
    seed: int = 0
    transforms: list[TransformSpec] | None = None  # None: table rows A-I
    tolerance: float = 8.0
    subregion: int | None = None  # None: auto_subregion(image)
    eval_T: tuple[int, ...] = (19, 1)
    stack: StackConfig = field(default_factory=StackConfig)
    scan_layer: int | None = None
    corpus_size: int = 512

    def __post_init__(self):
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass
class BenchRow:
    transform: str
    eval_T: int
    hits: int
    n_points: int
    mean_err_px: float
    wall_ms: float
    sim_evals: int
    errors: list[float] = field(default_factory=list, repr=False)

    @property
    def rate_pct(self) -> float:
        return 100.0 * self.hits / self.n_points


@dataclass
class BenchResult:
    rows: list[BenchRow]
    points: list[tuple[float, float]]
    config: BenchConfig

    def row(self, transform: str, eval_T: int) -> BenchRow:
        for r in self.rows:
            if r.transform == transform and r.eval_T == eval_T:
                return r
        raise KeyError((transform, eval_T))


def sample_points(shape, stack: StackConfig, n: int, seed: int) -> list[tuple[float, float]]:
    """``n`` integer points at least one top-layer element footprint from every border."""
    h, w = shape
    margin = math.ceil(layer_geometry(stack, stack.num_layers).element_radius)
    if w - 1 - 2 * margin < 0 or h - 1 - 2 * margin < 0:
        raise ValueError(f"image {w}x{h} is too small for a {stack.num_layers}-layer stack")
    rng = np.random.default_rng(seed)
    xs = rng.integers(margin, w - margin, size=n)
    ys = rng.integers(margin, h - margin, size=n)
    return [(float(x), float(y)) for x, y in zip(xs, ys)]


def evaluate_transform(ref: np.ndarray, template: Template, spec: TransformSpec, cfg: BenchConfig) -> list[BenchRow]:
    t0 = time.perf_counter()
    query, cm = apply_transform(ref, spec)
    searcher = Searcher(query, template, SearchConfig(scan_layer=cfg.scan_layer, subregion=cfg.subregion))
    result = searcher.run()
    wall_ms = 1000.0 * (time.perf_counter() - t0)
    rows = []
    for T in cfg.eval_T:
        errs = []
        for i, kp in enumerate(template.key_points):
            best = result.best(i, T)
            truth = map_point(cm, kp.training_location)
            if best is None or not best.in_bounds:
                errs.append(math.inf)
            else:
                errs.append(math.hypot(best.final_location[0] - truth[0], best.final_location[1] - truth[1]))
        hits = sum(e < cfg.tolerance for e in errs)
        finite = [e for e in errs if math.isfinite(e)]
        mean_err = float(np.mean(finite)) if finite else math.nan
        rows.append(BenchRow(spec.name, T, hits, len(errs), mean_err, wall_ms, result.stats.similarity_evaluations, errs))
    return rows


def reference_image(cfg: BenchConfig) -> np.ndarray:
    if cfg.image:
        return load_image(cfg.image)
    return textured_image(cfg.corpus_size, seed=cfg.seed)


def run_benchmark(cfg: BenchConfig, ref: np.ndarray | None = None, progress=None) -> BenchResult:
    ref = reference_image(cfg) if ref is None else ref
    transforms = cfg.transforms if cfg.transforms is not None else table1_transforms(cfg.seed)
    points = sample_points(ref.shape, cfg.stack, cfg.n_points, cfg.seed)
    template = train(ref, points, cfg.stack, cfg.image or "synthetic")

    def job(spec):
        rows = evaluate_transform(ref, template, spec, cfg)
        if progress:
            progress(rows)
        return rows

    workers = min(thread_count(), len(transforms)) or 1
    if workers == 1:
        per_spec = [job(s) for s in transforms]
    else:
        with ThreadPoolExecutor(workers) as pool:
            per_spec = list(pool.map(job, transforms))
    return BenchResult([r for rows in per_spec for r in rows], points, cfg)


def report_csv(result: BenchResult, with_timing: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in result.rows:
        wall = f"{r.wall_ms:.0f}" if with_timing else ""
        w.writerow((r.transform, r.eval_T, r.hits, f"{r.rate_pct:.1f}", f"{r.mean_err_px:.2f}", wall, r.sim_evals))
    return buf.getvalue()


def emit_report(result: BenchResult, path) -> None:
    Path(path).write_text(report_csv(result))


def format_table(result: BenchResult) -> str:
    by_name: dict[str, dict[int, BenchRow]] = {}
    for r in result.rows:
        by_name.setdefault(r.transform, {})[r.eval_T] = r
    Ts = list(result.config.eval_T)
    head = f"{'transform':<22}" + "".join(f"{'rate T=' + str(T) + ' %':>14}" for T in Ts) + f"{'mean err px':>13}{'ms':>9}"
    lines = [head, "-" * len(head)]
    for name, rows in by_name.items():
        first = rows[Ts[0]]
        lines.append(
            f"{name:<22}" + "".join(f"{rows[T].rate_pct:>14.1f}" for T in Ts) + f"{first.mean_err_px:>13.2f}{first.wall_ms:>9.0f}"
        )
    return "\n".join(lines)
