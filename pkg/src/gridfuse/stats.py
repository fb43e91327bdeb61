"""Paired-difference statistics: equivalence tests, effect sizes, bootstrap."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special
from scipy.stats import chi2 as chi2_dist
from scipy.stats import norm as norm_dist
from scipy.stats import t as t_dist

# Nominal TOST equivalence margins per metric.
NOMINAL_MARGINS = {
    "cell_accuracy": 0.02,
    "boundary_sharpness": 0.03,
    "brier": 0.01,
    "entropy": 0.02,
}

MARGIN_SWEEP = (0.5, 0.75, 1.0, 1.5, 2.0)


class DegenerateVarianceError(ValueError):
    pass


class NoEvalBlocksError(ValueError):
    pass


@dataclass
class PairedSample:
    """Per-pair differences x - y for one metric."""

    diffs: np.ndarray
    metric: str = ""
    polarity: int = 0

    def __post_init__(self):
        self.diffs = np.asarray(self.diffs, dtype=np.float64)

    @property
    def n(self) -> int:
        return self.diffs.shape[0]

    @property
    def mean(self) -> float:
        return float(np.mean(self.diffs))

    @property
    def sd(self) -> float:
        return float(np.std(self.diffs, ddof=1))


@dataclass
class TostResult:
    margin: float
    p_lower: float
    p_upper: float
    p_overall: float
    ci90: tuple[float, float]
    equivalent: bool
    sweep: dict[float, bool]
    smallest_passing_margin: float | None
    breakpoint_margin: float | None
    degenerate: bool = False


@dataclass
class EffectSize:
    d: float
    ci_hedges: tuple[float, float]
    ci_noncentral: tuple[float, float]


@dataclass
class BlockBootstrapResult:
    mean_delta: float
    ci95: tuple[float, float]
    block_size: int
    iterations: int
    seed: int
    n_blocks: int


def _tost_at_margin(mean: float, se: float, df: int, delta: float):
    t_lower = (mean + delta) / se
    t_upper = (mean - delta) / se
    p_lower = float(t_dist.sf(t_lower, df))
    p_upper = float(t_dist.cdf(t_upper, df))
    return p_lower, p_upper


def tost(sample: PairedSample, delta: float, alpha: float = 0.05) -> TostResult:
    """Two one-sided tests with a margin sensitivity sweep.

    The verdict is equivalent to the (1 - 2*alpha) CI for the mean difference
    lying inside (-delta, +delta).
    """
    if sample.n < 2:
        raise ValueError("need at least two pairs")
    if delta <= 0:
        raise ValueError("margin must be positive")
    mean = sample.mean
    sd = sample.sd
    df = sample.n - 1

    if sd == 0.0:
        # Zero-variance sample: direct comparison, flagged.
        sweep = {m: abs(mean) < m * delta for m in MARGIN_SWEEP}
        passing = [m * delta for m in MARGIN_SWEEP if sweep[m]]
        failing = [m * delta for m in MARGIN_SWEEP if not sweep[m]]
        eq = abs(mean) < delta
        return TostResult(
            margin=delta, p_lower=0.0 if eq else 1.0, p_upper=0.0 if eq else 1.0,
            p_overall=0.0 if eq else 1.0, ci90=(mean, mean), equivalent=eq,
            sweep=sweep, smallest_passing_margin=min(passing) if passing else None,
            breakpoint_margin=max(failing) if failing else None, degenerate=True,
        )

    se = sd / math.sqrt(sample.n)
    tq = float(t_dist.ppf(1.0 - alpha, df))
    ci = (mean - tq * se, mean + tq * se)

    p_lower, p_upper = _tost_at_margin(mean, se, df, delta)
    sweep: dict[float, bool] = {}
    for mult in MARGIN_SWEEP:
        m = mult * delta
        sweep[mult] = -m < ci[0] and ci[1] < m
    passing = [mult * delta for mult in MARGIN_SWEEP if sweep[mult]]
    failing = [mult * delta for mult in MARGIN_SWEEP if not sweep[mult]]
    return TostResult(
        margin=delta,
        p_lower=p_lower,
        p_upper=p_upper,
        p_overall=max(p_lower, p_upper),
        ci90=ci,
        equivalent=-delta < ci[0] and ci[1] < delta,
        sweep=sweep,
        smallest_passing_margin=min(passing) if passing else None,
        breakpoint_margin=max(failing) if failing else None,
    )


def noncentral_t_cdf(t: float, df: int, ncp: float) -> float:
    """CDF of the noncentral t distribution.

    Evaluated by integrating Phi(t*sqrt(w/df) - ncp) against the chi-square
    density of the denominator; robust for the large noncentralities that
    arise when inverting around extreme effect sizes.
    """
    if df < 1:
        raise ValueError("df must be >= 1")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0

    # inlined chi2 log-density: scalar frozen-distribution calls are too slow
    # for the root-finding loops that sit on top of this function
    half_df = df / 2.0
    ln_norm = special.gammaln(half_df) + half_df * math.log(2.0)
    sqrt_inv_df = 1.0 / math.sqrt(df)

    def integrand(w):
        if w <= 0.0:
            return 0.0
        log_pdf = (half_df - 1.0) * math.log(w) - w / 2.0 - ln_norm
        return math.exp(log_pdf) * float(special.ndtr(t * math.sqrt(w) * sqrt_inv_df - ncp))

    upper = float(chi2_dist.isf(1e-14, df))
    with warnings.catch_warnings():
        # the explicit error check below supersedes quad's own warning
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(integrand, 0.0, upper, epsabs=1e-11, epsrel=1e-11,
                                  limit=200, points=[max(df - 2, 0.5), df, df + 2])
    if err > 1e-8:
        raise RuntimeError(f"noncentral-t quadrature did not converge (err={err})")
    return min(max(val, 0.0), 1.0)


def _invert_ncp(t_obs: float, df: int, tail_prob: float, upper: bool) -> float:
    """Noncentrality whose upper/lower tail at t_obs equals tail_prob."""
    lo = -(abs(t_obs) + 10.0)
    hi = abs(t_obs) + 10.0

    if upper:
        fn = lambda ncp: (1.0 - noncentral_t_cdf(t_obs, df, ncp)) - tail_prob
    else:
        fn = lambda ncp: noncentral_t_cdf(t_obs, df, ncp) - tail_prob
    while fn(lo) * fn(hi) > 0 and hi - lo < 1e6:
        lo -= 20.0
        hi += 20.0
    return float(optimize.brentq(fn, lo, hi, xtol=1e-10))


def cohens_d(sample: PairedSample, alpha: float = 0.05) -> EffectSize:
    """Paired Cohen's d with approximate and exact confidence intervals."""
    if sample.n < 2:
        raise ValueError("need at least two pairs")
    sd = sample.sd
    if sd == 0.0:
        raise DegenerateVarianceError("zero variance of paired differences")
    n = sample.n
    d = sample.mean / sd

    var_d = 1.0 / n + d * d / (2.0 * (n - 1))
    tq = float(t_dist.ppf(1.0 - alpha / 2.0, n - 1))
    half = tq * math.sqrt(var_d)
    ci_hedges = (d - half, d + half)

    t_obs = d * math.sqrt(n)
    ncp_lo = _invert_ncp(t_obs, n - 1, alpha / 2.0, upper=True)
    ncp_hi = _invert_ncp(t_obs, n - 1, alpha / 2.0, upper=False)
    ci_nct = (ncp_lo / math.sqrt(n), ncp_hi / math.sqrt(n))
    return EffectSize(d=d, ci_hedges=ci_hedges, ci_noncentral=ci_nct)


def holm_bonferroni(pvals, alpha: float = 0.05):
    """Step-down Holm correction; returns (reject flags, adjusted p-values)."""
    p = np.asarray(pvals, dtype=np.float64)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.shape[0]
    order = np.argsort(p, kind="stable")
    adjusted = np.empty(m)
    running_max = 0.0
    for rank, i in enumerate(order):
        adj = min(1.0, (m - rank) * p[i])
        running_max = max(running_max, adj)
        adjusted[i] = running_max
    reject = np.zeros(m, dtype=bool)
    for rank, i in enumerate(order):
        if p[i] <= alpha / (m - rank):
            reject[i] = True
        else:
            break
    return reject, adjusted


def binomial_direction(k: int, n: int) -> float:
    """Exact one-sided sign-test probability P(X >= k), X ~ Binomial(n, 1/2)."""
    if not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n")
    total = sum(math.comb(n, i) for i in range(k, n + 1))
    return total / 2.0 ** n


def spatial_block_bootstrap(delta: np.ndarray, mask: np.ndarray, block_size: int = 10,
                            iterations: int = 10_000, seed: int = 0) -> BlockBootstrapResult:
    """Percentile CI for the mean per-cell difference under block resampling.

    The grid is tiled with non-overlapping block_size x block_size blocks
    anchored at the origin (partial edge blocks retained); blocks containing
    at least one eval cell are resampled with replacement.
    """
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    h, w = delta.shape
    sums = []
    counts = []
    for by in range(0, h, block_size):
        for bx in range(0, w, block_size):
            m = mask[by:by + block_size, bx:bx + block_size]
            c = int(m.sum())
            if c:
                sums.append(float(delta[by:by + block_size, bx:bx + block_size][m].sum()))
                counts.append(c)
    if not sums:
        raise NoEvalBlocksError("no block contains an evaluation cell")
    sums_a = np.asarray(sums)
    counts_a = np.asarray(counts, dtype=np.float64)
    n_blocks = sums_a.shape[0]

    rng = np.random.default_rng(seed)
    sel = rng.integers(0, n_blocks, size=(iterations, n_blocks))
    means = sums_a[sel].sum(axis=1) / counts_a[sel].sum(axis=1)
    lo, hi = np.percentile(means, [2.5, 97.5])
    return BlockBootstrapResult(
        mean_delta=float(delta[mask].mean()),
        ci95=(float(lo), float(hi)),
        block_size=block_size,
        iterations=iterations,
        seed=seed,
        n_blocks=n_blocks,
    )


def bayes_factor_01(sample: PairedSample, prior_scale: float) -> float:
    """BF01 for the point null mean-difference model against a diffuse prior.

    The sampling variance is plugged in as the sample variance of the
    differences; the alternative places a zero-centered normal prior with the
    given scale on the mean. BF01 > 1 favors the null (equivalence).
    """
    if sample.n < 2:
        raise ValueError("need at least two pairs")
    sd = sample.sd
    if sd == 0.0:
        raise DegenerateVarianceError("zero variance of paired differences")
    se2 = sd * sd / sample.n
    mean = sample.mean
    log_m0 = norm_dist.logpdf(mean, 0.0, math.sqrt(se2))
    log_m1 = norm_dist.logpdf(mean, 0.0, math.sqrt(se2 + prior_scale ** 2))
    return float(np.exp(log_m0 - log_m1))
