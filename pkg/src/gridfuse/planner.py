"""Downstream planning evaluation: A*, clearance, cross-arm comparison."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

OBSTACLE_THRESHOLD = 0.5
SQRT2 = math.sqrt(2.0)

_NEIGHBORS = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]


@dataclass(frozen=True)
class PlanQuery:
    start: tuple[int, int]  # (ix, iy)
    goal: tuple[int, int]

    def __post_init__(self):
        if self.start == self.goal:
            raise ValueError("start and goal must differ")


@dataclass
class PlanOutcome:
    found: bool
    path: list[tuple[int, int]]
    cost: float
    clearance: float


def plan_astar(probs: np.ndarray, q: PlanQuery,
               threshold: float = OBSTACLE_THRESHOLD) -> PlanOutcome:
    """8-connected A* with Euclidean step costs and heuristic.

    Cells with p > threshold are obstacles; unobserved (prior) cells are
    traversable. Ties break on (f, h, row-major index) so plans are
    deterministic across runs and backends.
    """
    h, w = probs.shape
    blocked = probs > threshold
    sx, sy = q.start
    gx, gy = q.goal
    for ix, iy in (q.start, q.goal):
        if not (0 <= ix < w and 0 <= iy < h):
            raise ValueError("query cell out of bounds")
    if blocked[sy, sx] or blocked[gy, gx]:
        return PlanOutcome(False, [], math.inf, 0.0)

    def heur(ix, iy):
        return math.hypot(ix - gx, iy - gy)

    g_cost = {q.start: 0.0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    h0 = heur(sx, sy)
    open_heap = [(h0, h0, sy * w + sx, q.start)]
    closed = set()
    while open_heap:
        f, _, _, cell = heapq.heappop(open_heap)
        if cell in closed:
            continue
        if cell == q.goal:
            path = [cell]
            while path[-1] in parent:
                path.append(parent[path[-1]])
            path.reverse()
            return PlanOutcome(True, path, g_cost[cell], 0.0)
        closed.add(cell)
        cx, cy = cell
        base = g_cost[cell]
        for dx, dy in _NEIGHBORS:
            nx, ny = cx + dx, cy + dy
            if not (0 <= nx < w and 0 <= ny < h) or blocked[ny, nx]:
                continue
            nb = (nx, ny)
            if nb in closed:
                continue
            ng = base + (SQRT2 if dx and dy else 1.0)
            if ng < g_cost.get(nb, math.inf) - 1e-12:
                g_cost[nb] = ng
                parent[nb] = cell
                hh = heur(nx, ny)
                heapq.heappush(open_heap, (ng + hh, hh, ny * w + nx, nb))
    return PlanOutcome(False, [], math.inf, 0.0)


def clearance_field(probs: np.ndarray, threshold: float = OBSTACLE_THRESHOLD) -> np.ndarray:
    """Per-cell Euclidean distance (in cells) to the nearest obstacle cell.

    An obstacle-free grid returns the max-distance sentinel hypot(W, H)
    everywhere.
    """
    blocked = probs > threshold
    h, w = probs.shape
    if not blocked.any():
        return np.full((h, w), math.hypot(w, h))
    return ndimage.distance_transform_edt(~blocked)


def clearance(probs: np.ndarray, path, threshold: float = OBSTACLE_THRESHOLD) -> float:
    """Minimum clearance along a path."""
    if not path:
        raise ValueError("empty path")
    field = clearance_field(probs, threshold)
    return float(min(field[iy, ix] for ix, iy in path))


def sample_queries(truth_occ: np.ndarray, n_queries: int, seed: int = 0,
                   budget_factor: int = 50) -> list[PlanQuery]:
    """Seeded start/goal pairs rejecting ground-truth occupied cells."""
    h, w = truth_occ.shape
    rng = np.random.default_rng(seed)
    queries: list[PlanQuery] = []
    budget = budget_factor * n_queries
    while len(queries) < n_queries and budget > 0:
        budget -= 1
        sx, sy, gx, gy = rng.integers(0, [w, h, w, h])
        if (sx, sy) == (gx, gy):
            continue
        if truth_occ[sy, sx] or truth_occ[gy, gx]:
            continue
        queries.append(PlanQuery((int(sx), int(sy)), (int(gx), int(gy))))
    if len(queries) < n_queries:
        raise RuntimeError("query sampling budget exhausted")
    return queries


@dataclass
class DownstreamReport:
    shared_success: float
    path_equiv_rate: float
    clearance_delta_median: float
    clearance_delta_mean: float
    frac_below_1cell: float
    n_queries: int

    def as_dict(self) -> dict:
        return {
            "shared_success": self.shared_success,
            "path_equiv_rate": self.path_equiv_rate,
            "clearance_delta_median": self.clearance_delta_median,
            "clearance_delta_mean": self.clearance_delta_mean,
            "frac_below_1cell": self.frac_below_1cell,
            "n_queries": self.n_queries,
        }


def compare_arms(probs_a: np.ndarray, probs_b: np.ndarray, truth_occ: np.ndarray,
                 n_queries: int = 500, seed: int = 0) -> DownstreamReport:
    """Paired planning comparison of two arms' maps over seeded queries."""
    if probs_a.shape != probs_b.shape:
        raise ValueError("arms must share a grid shape")
    queries = sample_queries(truth_occ, n_queries, seed)
    field_a = clearance_field(probs_a)
    field_b = clearance_field(probs_b)

    shared = 0
    equal_paths = 0
    deltas: list[float] = []
    for q in queries:
        out_a = plan_astar(probs_a, q)
        out_b = plan_astar(probs_b, q)
        if out_a.found and out_b.found:
            shared += 1
            if out_a.path == out_b.path:
                equal_paths += 1
            ca = min(field_a[iy, ix] for ix, iy in out_a.path)
            cb = min(field_b[iy, ix] for ix, iy in out_b.path)
            deltas.append(ca - cb)
    n = len(queries)
    d = np.asarray(deltas) if deltas else np.zeros(0)
    return DownstreamReport(
        shared_success=shared / n,
        path_equiv_rate=(equal_paths / shared) if shared else 0.0,
        clearance_delta_median=float(np.median(d)) if d.size else 0.0,
        clearance_delta_mean=float(np.mean(d)) if d.size else 0.0,
        frac_below_1cell=float(np.mean(np.abs(d) < 1.0)) if d.size else 0.0,
        n_queries=n,
    )
