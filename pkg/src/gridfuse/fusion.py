"""Cell-state representations and combination rules for both fusion arms.

The Bayesian arm stores clamped log-odds (L, n) per cell; the belief arm
stores a mass triplet (m_O, m_F, m_OF) on the binary frame {occupied, free}.
Scalar operations here are the reference implementations; the batch grid
updates in :mod:`gridfuse.kernels` must agree with them exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import GridSpec

# Renormalize mass triplets when accumulated drift from sum=1 exceeds this.
RENORM_DRIFT = 1e-12
# Dempster combination fails above this conflict (both inputs categorical
# and opposed); never reached when observation masses keep m_OF > 0.
TOTAL_CONFLICT_K = 1.0 - 1e-12

VALID_RULES = ("bayes", "bayes_count", "dempster", "yager")
VALID_MATCHINGS = ("betp", "ppl")


class TotalConflictError(ValueError):
    """Dempster combination of two categorical, fully opposed masses."""


class DegenerateMassError(ValueError):
    """A mass triplet whose decision probability is exactly 0 or 1."""


def logistic(l: float) -> float:
    """p = 1 / (1 + exp(-l))."""
    if l >= 0:
        return 1.0 / (1.0 + math.exp(-l))
    e = math.exp(l)
    return e / (1.0 + e)


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


@dataclass(frozen=True)
class BBA:
    """Basic belief assignment (m_O, m_F, m_OF) on the binary frame."""

    m_o: float
    m_f: float
    m_of: float

    def __post_init__(self):
        if min(self.m_o, self.m_f, self.m_of) < -1e-12:
            raise ValueError(f"negative mass in {self}")
        if abs(self.m_o + self.m_f + self.m_of - 1.0) > 1e-9:
            raise ValueError(f"masses must sum to 1, got {self}")

    @property
    def is_consonant(self) -> bool:
        return self.m_o * self.m_f == 0.0

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.m_o, self.m_f, self.m_of)


VACUOUS = BBA(0.0, 0.0, 1.0)


@dataclass(frozen=True)
class LogOddsCell:
    L: float = 0.0
    n: int = 0


@dataclass(frozen=True)
class ConflictMass:
    K: float


@dataclass(frozen=True)
class FusionParams:
    l_occ: float = 2.0
    l_free: float = -0.5
    L_max: float = 10.0  # math.inf disables the clamp
    mof_floor: float = 0.0
    rule: str = "bayes"
    matching: str = "betp"

    def __post_init__(self):
        if self.l_occ <= 0:
            raise ValueError("l_occ must be positive")
        if self.l_free >= 0:
            raise ValueError("l_free must be negative")
        if self.L_max <= 0:
            raise ValueError("L_max must be positive (use math.inf for no clamp)")
        if not 0.0 <= self.mof_floor < 1.0:
            raise ValueError("mof_floor must be in [0, 1)")
        if self.rule not in VALID_RULES:
            raise ValueError(f"unknown rule {self.rule!r}")
        if self.matching not in VALID_MATCHINGS:
            raise ValueError(f"unknown matching {self.matching!r}")

    @property
    def is_bayesian(self) -> bool:
        return self.rule in ("bayes", "bayes_count")

    def with_rule(self, rule: str) -> "FusionParams":
        return replace(self, rule=rule)


def clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


def bayes_update(cell: LogOddsCell, l_obs: float, L_max: float = math.inf) -> LogOddsCell:
    """One additive log-odds update, clamped to [-L_max, L_max]."""
    L = cell.L + l_obs
    if math.isfinite(L_max):
        L = clamp(L, -L_max, L_max)
    return LogOddsCell(L, cell.n + 1)


def masses_from_logodds_betp(l: float) -> BBA:
    """Consonant masses whose pignistic probability equals logistic(l)."""
    p = logistic(l)
    m_o = max(0.0, 2.0 * p - 1.0)
    m_f = max(0.0, 1.0 - 2.0 * p)
    return BBA(m_o, m_f, 1.0 - abs(2.0 * p - 1.0))


def masses_from_logodds_ppl(l: float) -> BBA:
    """Consonant masses whose normalized plausibility equals logistic(l)."""
    p = logistic(l)
    if p <= 0.0 or p >= 1.0:
        raise ValueError("normalized-plausibility matching needs p in (0, 1)")
    if p >= 0.5:
        m_o = 2.0 - 1.0 / p
        return BBA(m_o, 0.0, 1.0 - m_o)
    m_f = 2.0 - 1.0 / (1.0 - p)
    return BBA(0.0, m_f, 1.0 - m_f)


def matched_masses(l: float, matching: str) -> BBA:
    if matching == "betp":
        return masses_from_logodds_betp(l)
    if matching == "ppl":
        return masses_from_logodds_ppl(l)
    raise ValueError(f"unknown matching {matching!r}")


def betp(m: BBA) -> float:
    """Pignistic probability of occupancy: m_O + m_OF / 2."""
    return m.m_o + 0.5 * m.m_of


def ppl(m: BBA) -> float:
    """Normalized plausibility of occupancy: Pl(O) / (Pl(O) + Pl(F))."""
    return (m.m_o + m.m_of) / (m.m_o + m.m_f + 2.0 * m.m_of)


def logodds_from_masses(m: BBA) -> float:
    """Inverse of the pignistic matching: log-odds of BetP(O)."""
    p = betp(m)
    if p <= 0.0 or p >= 1.0:
        raise DegenerateMassError(f"BetP(O) = {p} has no finite log-odds")
    return logit(p)


def _renorm(m_o: float, m_f: float, m_of: float) -> tuple[float, float, float]:
    s = m_o + m_f + m_of
    if abs(s - 1.0) > RENORM_DRIFT:
        m_o, m_f, m_of = m_o / s, m_f / s, m_of / s
    return m_o, m_f, m_of


def dempster_combine(m1: BBA, m2: BBA) -> tuple[BBA, ConflictMass]:
    """Dempster's rule on the binary frame; returns the conflict mass K."""
    K = m1.m_o * m2.m_f + m1.m_f * m2.m_o
    if K >= TOTAL_CONFLICT_K:
        raise TotalConflictError(f"total conflict (K = {K}) between {m1} and {m2}")
    norm = 1.0 - K
    m_o = (m1.m_o * m2.m_o + m1.m_o * m2.m_of + m1.m_of * m2.m_o) / norm
    m_f = (m1.m_f * m2.m_f + m1.m_f * m2.m_of + m1.m_of * m2.m_f) / norm
    m_of = (m1.m_of * m2.m_of) / norm
    return BBA(*_renorm(m_o, m_f, m_of)), ConflictMass(K)


def yager_combine(m1: BBA, m2: BBA) -> BBA:
    """Yager's rule: conflict mass goes to total ignorance, no normalization."""
    K = m1.m_o * m2.m_f + m1.m_f * m2.m_o
    m_o = m1.m_o * m2.m_o + m1.m_o * m2.m_of + m1.m_of * m2.m_o
    m_f = m1.m_f * m2.m_f + m1.m_f * m2.m_of + m1.m_of * m2.m_f
    m_of = m1.m_of * m2.m_of + K
    return BBA(*_renorm(m_o, m_f, m_of))


def apply_mof_floor(m: BBA, floor: float) -> BBA:
    """Enforce a minimum ignorance mass, rescaling the committed masses."""
    if floor <= 0.0 or m.m_of >= floor:
        return m
    scale = (1.0 - floor) / (m.m_o + m.m_f)
    return BBA(m.m_o * scale, m.m_f * scale, floor)


def combine_for_rule(m1: BBA, m2: BBA, rule: str, mof_floor: float = 0.0) -> BBA:
    if rule == "dempster":
        out, _ = dempster_combine(m1, m2)
    elif rule == "yager":
        out = yager_combine(m1, m2)
    else:
        raise ValueError(f"{rule!r} is not a belief-combination rule")
    return apply_mof_floor(out, mof_floor)


def closed_form_consonant(a: float, N: int) -> BBA:
    """N-fold Dempster accumulation of (a, 0, 1-a) from the vacuous prior."""
    if not 0.0 < a < 1.0:
        raise ValueError("observation mass a must be in (0, 1)")
    r = (1.0 - a) ** N
    return BBA(1.0 - r, 0.0, r)


def bayes_trajectory(l_occ: float, L_max: float, N: int) -> float:
    """Accumulated log-odds after N identical occupied updates from L=0."""
    return min(N * l_occ, L_max)


class LogOddsGrid:
    """Dense Bayesian grid: clamped log-odds plus observation counts."""

    def __init__(self, spec: GridSpec, L_max: float = 10.0):
        self.spec = spec
        self.L_max = L_max
        self.L = np.zeros((spec.height_cells, spec.width_cells), dtype=np.float64)
        self.n = np.zeros((spec.height_cells, spec.width_cells), dtype=np.int64)

    def probabilities(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.L))

    def copy(self) -> "LogOddsGrid":
        out = LogOddsGrid(self.spec, self.L_max)
        out.L = self.L.copy()
        out.n = self.n.copy()
        return out


class BeliefGrid:
    """Dense belief-function grid: one mass triplet per cell, vacuous prior."""

    def __init__(self, spec: GridSpec):
        self.spec = spec
        shape = (spec.height_cells, spec.width_cells)
        self.m_o = np.zeros(shape, dtype=np.float64)
        self.m_f = np.zeros(shape, dtype=np.float64)
        self.m_of = np.ones(shape, dtype=np.float64)

    def probabilities(self) -> np.ndarray:
        """Decision probabilities BetP(O) per cell."""
        return self.m_o + 0.5 * self.m_of

    def cell(self, ix: int, iy: int) -> BBA:
        return BBA(self.m_o[iy, ix], self.m_f[iy, ix], self.m_of[iy, ix])

    def copy(self) -> "BeliefGrid":
        out = BeliefGrid(self.spec)
        out.m_o = self.m_o.copy()
        out.m_f = self.m_f.copy()
        out.m_of = self.m_of.copy()
        return out


def make_grid(spec: GridSpec, params: FusionParams):
    if params.is_bayesian:
        return LogOddsGrid(spec, params.L_max)
    return BeliefGrid(spec)


def fuse_logodds_grids(grids: list[LogOddsGrid]) -> LogOddsGrid:
    """Cell-wise multi-map fusion: log-odds addition with a final clamp."""
    out = grids[0].copy()
    for g in grids[1:]:
        out.L += g.L
        out.n += g.n
    if math.isfinite(out.L_max):
        np.clip(out.L, -out.L_max, out.L_max, out=out.L)
    return out


def fuse_belief_grids(grids: list[BeliefGrid], rule: str, mof_floor: float = 0.0) -> BeliefGrid:
    """Cell-wise multi-map fusion with the configured combination rule."""
    out = grids[0].copy()
    for g in grids[1:]:
        K = out.m_o * g.m_f + out.m_f * g.m_o
        if np.any(K >= TOTAL_CONFLICT_K):
            raise TotalConflictError("total conflict during cell-wise fusion")
        m_o = out.m_o * g.m_o + out.m_o * g.m_of + out.m_of * g.m_o
        m_f = out.m_f * g.m_f + out.m_f * g.m_of + out.m_of * g.m_f
        m_of = out.m_of * g.m_of
        if rule == "dempster":
            norm = 1.0 - K
            m_o, m_f, m_of = m_o / norm, m_f / norm, m_of / norm
        elif rule == "yager":
            m_of = m_of + K
        else:
            raise ValueError(f"{rule!r} is not a belief-combination rule")
        s = m_o + m_f + m_of
        drift = np.abs(s - 1.0) > RENORM_DRIFT
        if np.any(drift):
            m_o = np.where(drift, m_o / s, m_o)
            m_f = np.where(drift, m_f / s, m_f)
            m_of = np.where(drift, m_of / s, m_of)
        if mof_floor > 0.0:
            low = m_of < mof_floor
            if np.any(low):
                scale = np.where(low, (1.0 - mof_floor) / np.maximum(m_o + m_f, 1e-300), 1.0)
                m_o, m_f = m_o * scale, m_f * scale
                m_of = np.where(low, mof_floor, m_of)
        out.m_o, out.m_f, out.m_of = m_o, m_f, m_of
    return out


def fuse_grids(grids: list, params: FusionParams):
    if params.is_bayesian:
        return fuse_logodds_grids(grids)
    return fuse_belief_grids(grids, params.rule, params.mof_floor)
