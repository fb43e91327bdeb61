"""Inverse sensor model: ray traversal, distance/angle decay, matched masses.

A scan is converted once into an :class:`ObservationBatch`; every fusion arm
consumes the identical batch, which is what makes the comparison fair at the
per-observation level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from . import kernels
from .core import GridSpec, Pose2D
from .fusion import BBA, BeliefGrid, FusionParams, LogOddsGrid, matched_masses

KIND_FREE = 0
KIND_OCCUPIED = 1


@dataclass(frozen=True)
class LidarConfig:
    num_rays: int = 180
    fov: float = 2.0 * math.pi
    max_range: float = 15.0
    range_noise_sigma: float = 0.02

    def __post_init__(self):
        if self.num_rays < 1:
            raise ValueError("num_rays must be >= 1")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        if self.range_noise_sigma < 0:
            raise ValueError("range_noise_sigma must be >= 0")

    def ray_angles(self, theta: float = 0.0) -> np.ndarray:
        """Beam directions relative to heading theta, evenly spaced over fov."""
        full_circle = abs(self.fov - 2.0 * math.pi) < 1e-12
        if full_circle:
            offsets = -self.fov / 2.0 + self.fov * np.arange(self.num_rays) / self.num_rays
        elif self.num_rays == 1:
            offsets = np.zeros(1)
        else:
            offsets = np.linspace(-self.fov / 2.0, self.fov / 2.0, self.num_rays)
        return theta + offsets


@dataclass(frozen=True)
class SensorDecay:
    lambda_d: float = 0.1
    lambda_alpha: float = 0.5
    enabled: bool = True

    def __post_init__(self):
        if self.lambda_d < 0 or self.lambda_alpha < 0:
            raise ValueError("decay rates must be >= 0")


NO_DECAY = SensorDecay(0.0, 0.0, enabled=False)


class ScanObservation(NamedTuple):
    cell: tuple[int, int]
    kind: int
    l: float
    bba: BBA


def effective_logodds(kind: int, d: float, alpha: float, params: FusionParams,
                      decay: SensorDecay) -> float:
    """Per-observation log-odds with exponential distance/angle decay."""
    l_obs = params.l_occ if kind == KIND_OCCUPIED else params.l_free
    if not decay.enabled:
        return l_obs
    return l_obs * math.exp(-decay.lambda_d * d) * math.exp(-decay.lambda_alpha * alpha)


def raycast_cells(spec: GridSpec, origin: Pose2D, angle: float, rng: float):
    """Cells strictly traversed by a ray plus its endpoint cell (or None)."""
    if spec.world_to_cell(origin.x, origin.y) is None:
        raise ValueError("ray origin outside grid")
    ex = origin.x + rng * math.cos(angle)
    ey = origin.y + rng * math.sin(angle)
    free_flat, end_flat = kernels.traverse(
        origin.x, origin.y, ex, ey,
        spec.origin_x, spec.origin_y, spec.resolution,
        spec.width_cells, spec.height_cells,
    )
    w = spec.width_cells
    free = [(int(f % w), int(f // w)) for f in free_flat]
    end = (int(end_flat % w), int(end_flat // w)) if end_flat >= 0 else None
    return free, end


class ObservationBatch:
    """All per-cell observations of one scan (or several concatenated scans).

    Stored as parallel flat arrays so the fusion kernels can consume them
    directly; a cell crossed by several rays contributes one entry per ray.
    """

    __slots__ = ("spec", "flat", "kind", "l")

    def __init__(self, spec: GridSpec, flat: np.ndarray, kind: np.ndarray, l: np.ndarray):
        self.spec = spec
        self.flat = flat
        self.kind = kind
        self.l = l

    def __len__(self) -> int:
        return self.flat.shape[0]

    def apply(self, grid, params: FusionParams) -> None:
        """Fold the batch into a grid under the arm's fusion rule."""
        if params.is_bayesian:
            assert isinstance(grid, LogOddsGrid)
            kernels.apply_logodds(grid.L, grid.n, self.flat, self.l, params.L_max)
        else:
            assert isinstance(grid, BeliefGrid)
            kernels.apply_belief(
                grid.m_o, grid.m_f, grid.m_of, self.flat, self.l,
                kernels.MATCH_CODES[params.matching],
                kernels.RULE_CODES[params.rule],
                params.mof_floor,
            )

    def iter_observations(self, matching: str = "betp") -> Iterator[ScanObservation]:
        w = self.spec.width_cells
        for f, k, l in zip(self.flat, self.kind, self.l):
            yield ScanObservation(
                (int(f % w), int(f // w)), int(k), float(l), matched_masses(float(l), matching)
            )

    @staticmethod
    def concatenate(batches: list["ObservationBatch"]) -> "ObservationBatch":
        spec = batches[0].spec
        return ObservationBatch(
            spec,
            np.concatenate([b.flat for b in batches]),
            np.concatenate([b.kind for b in batches]),
            np.concatenate([b.l for b in batches]),
        )


def observe(spec: GridSpec, pose: Pose2D, angles: np.ndarray, ranges: np.ndarray,
            alphas: np.ndarray, max_range: float, params: FusionParams,
            decay: SensorDecay = NO_DECAY) -> ObservationBatch:
    """Convert one scan into per-cell observations.

    ``ranges`` are the measured ranges; a return at or beyond ``max_range`` is
    free-space evidence along the ray with no occupied endpoint. ``alphas``
    are angles of incidence at the struck surface (only used for hits).
    """
    if spec.world_to_cell(pose.x, pose.y) is None:
        raise ValueError("sensor pose outside grid")
    res = spec.resolution
    w = spec.width_cells
    flats: list[np.ndarray] = []
    kinds: list[np.ndarray] = []
    dists: list[np.ndarray] = []
    alphas_out: list[np.ndarray] = []

    for angle, rng, alpha in zip(angles, ranges, alphas):
        hit = rng < max_range - 1e-9
        r_eff = min(rng, max_range)
        ex = pose.x + r_eff * math.cos(angle)
        ey = pose.y + r_eff * math.sin(angle)
        free_flat, end_flat = kernels.traverse(
            pose.x, pose.y, ex, ey,
            spec.origin_x, spec.origin_y, res, w, spec.height_cells,
        )
        if not hit and end_flat >= 0:
            # Max-range return: the endpoint cell is also free evidence.
            free_flat = np.append(free_flat, np.int64(end_flat))
            end_flat = -1
        n_free = free_flat.shape[0]
        if n_free:
            cx = spec.origin_x + (free_flat % w + 0.5) * res
            cy = spec.origin_y + (free_flat // w + 0.5) * res
            d = np.hypot(cx - pose.x, cy - pose.y)
            flats.append(free_flat)
            kinds.append(np.zeros(n_free, dtype=np.int8))
            dists.append(d)
            alphas_out.append(np.zeros(n_free))
        if hit and end_flat >= 0:
            flats.append(np.asarray([end_flat], dtype=np.int64))
            kinds.append(np.asarray([KIND_OCCUPIED], dtype=np.int8))
            dists.append(np.asarray([rng], dtype=np.float64))
            alphas_out.append(np.asarray([alpha], dtype=np.float64))

    if not flats:
        empty = np.empty(0)
        return ObservationBatch(spec, np.empty(0, dtype=np.int64),
                                np.empty(0, dtype=np.int8), empty)

    flat = np.concatenate(flats)
    kind = np.concatenate(kinds)
    d_arr = np.concatenate(dists)
    a_arr = np.concatenate(alphas_out)
    l_base = np.where(kind == KIND_OCCUPIED, params.l_occ, params.l_free)
    if decay.enabled:
        l = l_base * np.exp(-decay.lambda_d * d_arr) * np.exp(-decay.lambda_alpha * a_arr)
    else:
        l = l_base.astype(np.float64)
    return ObservationBatch(spec, flat, kind, l)
