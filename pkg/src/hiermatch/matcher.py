"""Two-step coarse-to-fine key-point search.

For every seed point the largest scan layer is extracted and matched to the
template over all layers (nearest neighbor), which gives the relative scale
and a corrected location. The smallest matching layer is then extracted at
the corrected location to localize the key point, and the candidate is
scored with the product-of-similarities evaluation.

Similarities are ``exp(-d)`` for an integer L1 distance ``d``; ranking is
done on ``d`` directly because ``exp(-d)`` underflows to 0 for ``d > 745``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .features import CoverageError, ImageResponses, is_degenerate
from .template import KeyPointTemplate, Template
from .topology import N_UNITS, SQRT2, StackConfig

INF = math.inf

REFERENCE_SUBREGION = 150
REFERENCE_IMAGE_SIDE = 800


def auto_subregion(shape) -> int:
    """Seed-grid cell side keeping 150 px cells per 800 px of (shorter) image side."""
    return max(16, int(round(REFERENCE_SUBREGION * min(shape) / REFERENCE_IMAGE_SIDE)))


@dataclass(frozen=True)
class SearchConfig:
    scan_layer: int | None = None  # None: num_layers - 2, i.e. scales 1/2..2 are reachable
    subregion: int | None = None  # None: auto_subregion(image shape)
    eval_elements: int = 19
    threshold: float = 0.0
    energy_threshold: float = 0.0

    def __post_init__(self):
        if self.eval_elements not in (1, 19):
            raise ValueError("eval_elements must be 1 or 19")
        if self.subregion is not None and self.subregion < 1:
            raise ValueError("subregion must be >= 1 pixel")

    def resolved_scan_layer(self, cfg: StackConfig) -> int:
        m = max(1, cfg.num_layers - 2) if self.scan_layer is None else self.scan_layer
        if not 1 <= m <= cfg.num_layers:
            raise ValueError(f"scan layer {m} out of range 1..{cfg.num_layers}")
        return m

    def resolved_subregion(self, shape) -> int:
        return auto_subregion(shape) if self.subregion is None else self.subregion


@dataclass
class SearchStats:
    similarity_evaluations: int = 0
    evaluation_similarities: int = 0
    elements_extracted: int = 0
    subregions_visited: int = 0
    seeds_skipped: int = 0

    def merge(self, other: SearchStats) -> SearchStats:
        for k in self.__dataclass_fields__:
            setattr(self, k, getattr(self, k) + getattr(other, k))
        return self


@dataclass(frozen=True)
class NearestNeighbor:
    query_element: int  # l, 1-based
    template_element: int  # l', 1-based
    template_layer: int  # m'
    distance: int

    @property
    def similarity(self) -> float:
        return math.exp(-self.distance)


@dataclass(frozen=True)
class CoarseMatch:
    query_element: int
    template_element: int
    template_layer: int
    scan_layer: int
    distance: int
    estimated_scale: float
    corrected_location: tuple[float, float]
    matched_center: tuple[float, float]

    @property
    def best_similarity(self) -> float:
        return math.exp(-self.distance)

    @property
    def scale_exponent(self) -> int:
        """``m - m'``: the relative scale in powers of sqrt(2)."""
        return self.scan_layer - self.template_layer


@dataclass(frozen=True)
class MatchCandidate:
    key_point_index: int
    seed: tuple[float, float]
    coarse: CoarseMatch
    final_location: tuple[float, float]
    refine_query_layer: int
    refine_template_layer: int
    refine_match: NearestNeighbor | None
    eval_distances: tuple[float, float]  # (T=1, T=19); inf when not evaluable
    eval_T: int = 19
    degenerate: bool = False
    in_bounds: bool = True

    def eval_distance(self, T: int | None = None) -> float:
        return self.eval_distances[0 if (T or self.eval_T) == 1 else 1]

    def score(self, T: int | None = None) -> float:
        return math.exp(-self.eval_distance(T))

    @property
    def eval_score(self) -> float:
        return self.score()

    def rank_key(self, T: int | None = None):
        return (self.degenerate, not self.in_bounds, self.eval_distance(T))


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------


def preselect_seeds(img: np.ndarray, subregion: int, energy_threshold: float = 0.0) -> list[tuple[float, float]]:
    """One seed at the center of each ``subregion``-sided grid cell.

    Cells whose mean gradient magnitude is below ``energy_threshold`` are
    dropped; a threshold of 0 keeps every cell.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    grad = None
    if energy_threshold > 0:
        gy, gx = np.gradient(img)
        grad = np.hypot(gx, gy)
    seeds = []
    for y0 in range(0, h, subregion):
        y1 = min(y0 + subregion, h)
        for x0 in range(0, w, subregion):
            x1 = min(x0 + subregion, w)
            if grad is not None and grad[y0:y1, x0:x1].mean() < energy_threshold:
                continue
            seeds.append(((x0 + x1 - 1) / 2.0, (y0 + y1 - 1) / 2.0))
    return seeds


def _layer_distances(query: np.ndarray, template_layer: np.ndarray) -> np.ndarray:
    """``(19, 19)`` L1 distances, rows = query elements, columns = template elements."""
    return cdist(
        query.reshape(N_UNITS, -1).astype(np.float64),
        template_layer.reshape(N_UNITS, -1).astype(np.float64),
        "cityblock",
    )


def nearest_neighbor(query: np.ndarray, kp: KeyPointTemplate, m: int, layers=None, stats: SearchStats | None = None) -> NearestNeighbor:
    """Best (l, l', m') pair between a query layer ``m`` and the template.

    Ties go to the smaller ``|m - m'|``, then the smaller ``l'``, then the
    smaller ``l``.
    """
    layers = list(range(1, kp.num_layers + 1)) if layers is None else list(layers)
    d = np.stack([_layer_distances(query, kp.layer(mp)) for mp in layers])  # (L, l, l')
    if stats is not None:
        stats.similarity_evaluations += d.size
    li, qi, ti = np.indices(d.shape)
    mp = np.asarray(layers)[li]
    order = np.lexsort((qi.ravel(), ti.ravel(), np.abs(m - mp).ravel(), d.ravel()))
    best = order[0]
    return NearestNeighbor(int(qi.ravel()[best]) + 1, int(ti.ravel()[best]) + 1, int(mp.ravel()[best]), int(round(d.ravel()[best])))


def estimate_scale(m: int, m_prime: int) -> float:
    return SQRT2 ** (m - m_prime)


def correct_location(x_l, y_lprime, s: float) -> tuple[float, float]:
    """Mask position implied by a match: ``X_l - s * Y_l'``."""
    if not s > 0:
        raise ValueError("scale must be positive")
    return (float(x_l[0]) - s * float(y_lprime[0]), float(x_l[1]) - s * float(y_lprime[1]))


def evaluate(query: np.ndarray, kp: KeyPointTemplate, layer: int, T: int, matched=None) -> float:
    """Product of element similarities between a query layer and template ``layer``.

    ``T=19`` pairs every element with the same index; ``T=1`` uses only the
    ``matched`` ``(l, l')`` pair (1-based).
    """
    return math.exp(-evaluation_distance(query, kp, layer, T, matched))


def evaluation_distance(query: np.ndarray, kp: KeyPointTemplate, layer: int, T: int, matched=None) -> int:
    t = kp.layer(layer).astype(np.int32)
    q = np.asarray(query).astype(np.int32)
    if T == 19:
        return int(np.abs(q - t).sum())
    if T == 1:
        if matched is None:
            raise ValueError("T=1 evaluation needs the matched element pair")
        l, lp = matched
        return int(np.abs(q[l - 1] - t[lp - 1]).sum())
    raise ValueError("T must be 1 or 19")


def _admissible_box(shape, radius: float):
    h, w = shape
    return radius, w - 1 - radius, radius, h - 1 - radius


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------


class Searcher:
    """Runs the search for one query image, caching per-seed scan-layer features."""

    def __init__(self, img_or_responses, template: Template, config: SearchConfig | None = None):
        self.template = template
        self.config = config or SearchConfig()
        cfg = template.stack_config
        if isinstance(img_or_responses, ImageResponses):
            self.responses = img_or_responses
        else:
            self.responses = ImageResponses(img_or_responses, cfg)
        self.scan_layer = self.config.resolved_scan_layer(cfg)
        self.subregion = self.config.resolved_subregion(self.responses.shape)
        self.seeds = preselect_seeds(self.responses.image, self.subregion, self.config.energy_threshold)
        self._scan_cache: dict[tuple[float, float], np.ndarray | None] = {}

    # -- steps ---------------------------------------------------------------

    def _scan_features(self, seed, stats: SearchStats):
        if seed not in self._scan_cache:
            try:
                self._scan_cache[seed] = self.responses.layer_features(self.scan_layer, seed)
            except CoverageError:
                self._scan_cache[seed] = None
            else:
                stats.elements_extracted += N_UNITS
        return self._scan_cache[seed]

    def scan_coarse(self, kp: KeyPointTemplate, seed, stats: SearchStats | None = None) -> CoarseMatch:
        stats = stats if stats is not None else SearchStats()
        m = self.scan_layer
        q = self._scan_features(tuple(map(float, seed)), stats)
        if q is None:
            raise CoverageError(f"seed {tuple(seed)} does not admit layer {m}")
        nn = nearest_neighbor(q, kp, m, stats=stats)
        return self._coarse_from(nn, m, seed, kp, q)

    def _coarse_from(self, nn: NearestNeighbor, m, seed, kp, q) -> CoarseMatch:
        g = self.responses.geometry(m)
        s = estimate_scale(m, nn.template_layer)
        x_l = np.asarray(seed, dtype=np.float64) + g.element_offsets[nn.query_element - 1]
        cl = correct_location(x_l, kp.offset(nn.template_layer, nn.template_element), s)
        return CoarseMatch(
            nn.query_element, nn.template_element, nn.template_layer, m, nn.distance, s, cl, (float(x_l[0]), float(x_l[1]))
        )

    def refine(self, kp: KeyPointTemplate, c: CoarseMatch, key_point_index: int = 0, seed=None, stats: SearchStats | None = None, coarse_degenerate: bool = False) -> MatchCandidate:
        stats = stats if stats is not None else SearchStats()
        M = kp.num_layers
        k = c.scale_exponent
        q_layer = min(M, 1 + max(0, k))
        t_layer = min(M, 1 + max(0, -k))
        s = c.estimated_scale
        seed = tuple(map(float, seed)) if seed is not None else c.corrected_location

        def failed(loc, degenerate=coarse_degenerate, in_bounds=False):
            return MatchCandidate(
                key_point_index, seed, c, loc, q_layer, t_layer, None, (INF, INF), self.config.eval_elements, degenerate, in_bounds
            )

        g = self.responses.geometry(q_layer)
        x0, x1, y0, y1 = _admissible_box(self.responses.shape, g.element_radius)
        cx, cy = c.corrected_location
        if x0 > x1 or y0 > y1:
            return failed(c.corrected_location)
        px, py = min(max(cx, x0), x1), min(max(cy, y0), y1)
        if math.hypot(px - cx, py - cy) > g.element_radius:
            return failed(c.corrected_location)
        cl = (px, py)

        q = self.responses.layer_features(q_layer, cl)
        stats.elements_extracted += N_UNITS
        nn = nearest_neighbor(q, kp, q_layer, layers=[t_layer], stats=stats)
        x_l = np.asarray(cl) + g.element_offsets[nn.query_element - 1]
        fl = correct_location(x_l, kp.offset(t_layer, nn.template_element), s)
        d1 = nn.distance
        try:
            q_eval = self.responses.layer_features(q_layer, fl)
        except CoverageError:
            d19 = INF
        else:
            stats.elements_extracted += N_UNITS
            stats.evaluation_similarities += N_UNITS
            d19 = evaluation_distance(q_eval, kp, t_layer, 19)
        stats.evaluation_similarities += 1
        degenerate = coarse_degenerate or is_degenerate(q)
        return MatchCandidate(
            key_point_index, seed, c, fl, q_layer, t_layer, nn, (d1, d19), self.config.eval_elements, degenerate, True
        )

    # -- drivers -------------------------------------------------------------

    def search_key_point(self, index: int, stats: SearchStats | None = None) -> list[MatchCandidate]:
        """All candidates for one key point, ranked best first."""
        stats = stats if stats is not None else SearchStats()
        kp = self.template.key_points[index]
        out = []
        for seed in self.seeds:
            stats.subregions_visited += 1
            q = self._scan_features(seed, stats)
            if q is None:
                stats.seeds_skipped += 1
                continue
            nn = nearest_neighbor(q, kp, self.scan_layer, stats=stats)
            c = self._coarse_from(nn, self.scan_layer, seed, kp, q)
            out.append(self.refine(kp, c, index, seed, stats, coarse_degenerate=is_degenerate(q)))
        out.sort(key=lambda cand: cand.rank_key())
        return out

    def run(self) -> FindResult:
        stats = SearchStats()
        ranked = [self.search_key_point(i, stats) for i in range(len(self.template.key_points))]
        return FindResult(ranked, stats, self.config)


@dataclass
class FindResult:
    ranked: list[list[MatchCandidate]]  # per key point, best first
    stats: SearchStats
    config: SearchConfig = field(default_factory=SearchConfig)

    def best(self, key_point: int, T: int | None = None) -> MatchCandidate | None:
        cands = self.ranked[key_point]
        if not cands:
            return None
        return min(cands, key=lambda c: c.rank_key(T)) if T else cands[0]

    def selected(self) -> list[MatchCandidate]:
        """Candidates passing the threshold; with threshold 0 the best per key point."""
        out = []
        for i, cands in enumerate(self.ranked):
            if self.config.threshold > 0:
                out.extend(c for c in cands if not c.degenerate and c.in_bounds and c.eval_score >= self.config.threshold)
            elif cands:
                out.append(cands[0])
        return out


def find(img, template: Template, config: SearchConfig | None = None) -> FindResult:
    """Search every key point of ``template`` in ``img``."""
    return Searcher(img, template, config).run()


# ---------------------------------------------------------------------------
# Exhaustive baseline for cost comparisons
# ---------------------------------------------------------------------------


def exhaustive_scan_cost(shape, n_scales: int, stride: int = 1, elements: int = 19) -> int:
    """Similarity evaluations of a sliding layer-1 scan.

    ``elements`` is the number of element pairs compared per position and
    scale: 19 for the whole layer-1 mask, 1 for its central element only.
    """
    h, w = shape
    return len(range(0, h, stride)) * len(range(0, w, stride)) * n_scales * elements


def exhaustive_scan(
    responses: ImageResponses, kp: KeyPointTemplate, n_scales: int, stride: int = 1,
    elements: int = 19, stats: SearchStats | None = None,
):
    """Slide the layer-1 mask over every position and compare it, element by
    element, with template layers ``1..n_scales``.

    Returns ``((x, y), template_layer, distance)`` of the best position.
    """
    if elements not in (1, 19):
        raise ValueError("elements must be 1 or 19")
    stats = stats if stats is not None else SearchStats()
    h, w = responses.shape
    targets = [kp.layer(m)[:elements].astype(np.int32) for m in range(1, n_scales + 1)]
    best = (INF, None, None)
    for y in range(0, h, stride):
        for x in range(0, w, stride):
            q = responses.layer_features(1, (x, y))[:elements].astype(np.int32)
            stats.elements_extracted += N_UNITS
            for m, t in enumerate(targets, start=1):
                stats.similarity_evaluations += elements
                d = int(np.abs(q - t).sum())
                if d < best[0]:
                    best = (d, (float(x), float(y)), m)
    return best[1], best[2], best[0]
