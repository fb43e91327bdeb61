"""CARMEN log ingestion and scan-split virtual-robot fusion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import GridSpec, Pose2D
from .fusion import FusionParams, fuse_grids, make_grid
from .metrics import EvalSet, build_eval_set
from .sensor import NO_DECAY, observe

REALDATA_MAX_RANGE = 8.0


class EmptyLogError(ValueError):
    pass


class TooFewScansError(ValueError):
    pass


@dataclass
class CarmenScan:
    """One FLASER record: ranges plus corrected laser pose and raw odometry."""

    ranges: np.ndarray
    pose: Pose2D
    odom: Pose2D
    timestamp: float
    fov: float = math.pi

    def beam_angles(self) -> np.ndarray:
        n = self.ranges.shape[0]
        if n == 1:
            return np.array([self.pose.theta])
        return self.pose.theta + np.linspace(-self.fov / 2.0, self.fov / 2.0, n)


@dataclass
class ParseResult:
    scans: list[CarmenScan]
    warnings: int = 0


def parse_carmen(lines, fov: float = math.pi) -> ParseResult:
    """Parse FLASER records from a CARMEN text log.

    Non-FLASER records are skipped silently; malformed FLASER lines are
    skipped and counted as warnings. Raises when no scan parses at all.
    """
    scans: list[CarmenScan] = []
    warnings = 0
    if isinstance(lines, str):
        lines = lines.splitlines()
    for line in lines:
        tokens = line.split()
        if not tokens or tokens[0] != "FLASER":
            continue
        try:
            n = int(tokens[1])
            if n < 1 or len(tokens) < n + 9:
                raise ValueError
            ranges = np.array([float(t) for t in tokens[2:2 + n]])
            if np.any(ranges < 0):
                raise ValueError
            vals = [float(t) for t in tokens[2 + n:2 + n + 7]]
        except (ValueError, IndexError):
            warnings += 1
            continue
        lx, ly, lth, ox, oy, oth, ts = vals
        scans.append(CarmenScan(ranges, Pose2D(lx, ly, lth), Pose2D(ox, oy, oth), ts, fov))
    if not scans:
        raise EmptyLogError("no FLASER records found")
    return ParseResult(scans, warnings)


@dataclass
class SplitPlan:
    train: list[int]
    test: list[int]
    scan_split_r: int
    subsequences: list[list[int]] = field(default_factory=list)


def split_scans(scans, ratio: float = 0.8, r: int = 1) -> SplitPlan:
    """Temporal-prefix train/test split with round-robin virtual robots."""
    if len(scans) < 5:
        raise TooFewScansError("need at least 5 scans")
    if r not in (1, 2, 4):
        raise ValueError("scan split must be 1, 2 or 4")
    n_train = int(round(len(scans) * ratio))
    train = list(range(n_train))
    test = list(range(n_train, len(scans)))
    subsequences = [train[i::r] for i in range(r)]
    return SplitPlan(train=train, test=test, scan_split_r=r, subsequences=subsequences)


def fit_grid_spec(scans, max_range: float = REALDATA_MAX_RANGE,
                  resolution: float = 0.1) -> GridSpec:
    """Grid bounds covering the trajectory plus a max-range margin."""
    xs = np.array([s.pose.x for s in scans])
    ys = np.array([s.pose.y for s in scans])
    margin = max_range + 1.0
    x0 = float(xs.min() - margin)
    y0 = float(ys.min() - margin)
    x1 = float(xs.max() + margin)
    y1 = float(ys.max() + margin)
    return GridSpec(
        width_cells=int(math.ceil((x1 - x0) / resolution)),
        height_cells=int(math.ceil((y1 - y0) / resolution)),
        resolution=resolution,
        origin_x=x0,
        origin_y=y0,
    )


@dataclass
class RealdataResult:
    spec: GridSpec
    grids: dict[str, object]
    eval_set: EvalSet
    observed_masks: dict[str, np.ndarray]

    def probabilities(self, arm: str) -> np.ndarray:
        return self.grids[arm].probabilities()


def _scan_batch(spec, scan, params, max_range):
    angles = scan.beam_angles()
    return observe(spec, scan.pose, angles, scan.ranges,
                   np.zeros_like(scan.ranges), max_range, params, NO_DECAY)


def run_realdata(scans, plan: SplitPlan, arms, max_range: float = REALDATA_MAX_RANGE,
                 resolution: float = 0.1, spec: GridSpec | None = None) -> RealdataResult:
    """Map train scans per virtual robot, fuse cell-wise, evaluate on test scans.

    Poses are taken from the log as-is (ideal alignment) and the sensor decay
    is disabled, so every arm sees constant-magnitude evidence.
    """
    if spec is None:
        spec = fit_grid_spec(scans, max_range, resolution)
    sensor_params = arms[0][1] if arms else FusionParams()

    grids = [{name: make_grid(spec, p) for name, p in arms} for _ in plan.subsequences]
    observed = {name: np.zeros(spec.n_cells, dtype=bool) for name, _ in arms}
    for robot, idxs in enumerate(plan.subsequences):
        for i in idxs:
            batch = _scan_batch(spec, scans[i], sensor_params, max_range)
            for name, params in arms:
                batch.apply(grids[robot][name], params)
                observed[name][batch.flat] = True

    fused = {name: fuse_grids([grids[r][name] for r in range(len(plan.subsequences))], p)
             for name, p in arms}

    h, w = spec.height_cells, spec.width_cells
    occ_counts = np.zeros((h, w), dtype=np.int64)
    free_counts = np.zeros_like(occ_counts)
    for i in plan.test:
        batch = _scan_batch(spec, scans[i], sensor_params, max_range)
        np.add.at(occ_counts.ravel(), batch.flat[batch.kind == 1], 1)
        np.add.at(free_counts.ravel(), batch.flat[batch.kind == 0], 1)
    eval_set = build_eval_set(occ_counts, free_counts)

    masks = {name: observed[name].reshape(h, w) for name in observed}
    return RealdataResult(spec=spec, grids=fused, eval_set=eval_set, observed_masks=masks)


def paired_eval_mask(result: RealdataResult, arm_a: str, arm_b: str) -> np.ndarray:
    """Eval cells observed by both arms — the paired-cell comparison region."""
    return (result.eval_set.mask
            & result.observed_masks[arm_a]
            & result.observed_masks[arm_b])
