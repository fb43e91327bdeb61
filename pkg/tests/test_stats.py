import math

import numpy as np
import pytest
from scipy.stats import nct as scipy_nct
from scipy.stats import t as t_dist

from gridfuse.stats import (
    MARGIN_SWEEP,
    DegenerateVarianceError,
    NoEvalBlocksError,
    PairedSample,
    bayes_factor_01,
    binomial_direction,
    cohens_d,
    holm_bonferroni,
    noncentral_t_cdf,
    spatial_block_bootstrap,
    tost,
)

TABLE2 = [  # (d, ci_lo, ci_hi), all with n = 15
    (13.51, 8.01, 19.02),
    (7.78, 4.58, 10.98),
    (-14.93, -21.00, -8.85),
    (6.14, 3.59, 8.69),
    (5.96, 3.48, 8.44),
    (-7.11, -10.04, -4.17),
    (6.03, 3.52, 8.53),
    (4.62, 2.67, 6.57),
    (-6.32, -8.94, -3.70),
]


class TestTost:
    def test_verdict_equals_ci_inclusion(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = rng.integers(5, 30)
            diffs = rng.normal(rng.uniform(-0.03, 0.03), rng.uniform(0.001, 0.05), n)
            sample = PairedSample(diffs)
            res = tost(sample, delta=0.02)
            lo, hi = res.ci90
            assert res.equivalent == (-0.02 < lo and hi < 0.02)

    def test_ci_is_90pct(self):
        sample = PairedSample(np.array([0.01, 0.012, 0.008, 0.011, 0.009]))
        res = tost(sample, delta=0.02)
        se = sample.sd / math.sqrt(5)
        tq = t_dist.ppf(0.95, 4)
        assert res.ci90[0] == pytest.approx(sample.mean - tq * se)
        assert res.ci90[1] == pytest.approx(sample.mean + tq * se)

    def test_sweep_monotone(self):
        rng = np.random.default_rng(1)
        sample = PairedSample(rng.normal(0.01, 0.02, 15))
        res = tost(sample, delta=0.02)
        verdicts = [res.sweep[m] for m in MARGIN_SWEEP]
        # once a margin passes, all larger margins pass
        first_pass = verdicts.index(True) if True in verdicts else len(verdicts)
        assert all(verdicts[first_pass:])

    def test_degenerate_zero_variance(self):
        res = tost(PairedSample(np.zeros(10)), delta=0.02)
        assert res.degenerate and res.equivalent
        res = tost(PairedSample(np.full(10, 0.5)), delta=0.02)
        assert res.degenerate and not res.equivalent

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            tost(PairedSample(np.array([1.0])), delta=0.02)
        with pytest.raises(ValueError):
            tost(PairedSample(np.ones(5)), delta=-1.0)


class TestNoncentralT:
    def test_central_special_case(self):
        assert noncentral_t_cdf(2.1448, 14, 0.0) == pytest.approx(
            float(t_dist.cdf(2.1448, 14)), abs=1e-9)

    @pytest.mark.parametrize("t,df,ncp", [
        (1.0, 5, 2.0), (-3.0, 14, -5.0), (50.0, 14, 52.0),
        (10.0, 14, 8.0), (0.0, 3, 1.5),
    ])
    def test_matches_scipy(self, t, df, ncp):
        assert noncentral_t_cdf(t, df, ncp) == pytest.approx(
            float(scipy_nct.cdf(t, df, ncp)), abs=1e-8)

    def test_monotone_in_ncp(self):
        vals = [noncentral_t_cdf(2.0, 10, ncp) for ncp in (-2.0, 0.0, 2.0, 4.0)]
        assert vals == sorted(vals, reverse=True)


class TestCohensD:
    def _sample_with_d(self, d, n=15):
        # mean/sd ratio fixed exactly at d
        base = np.zeros(n)
        base[: n // 2] = 1.0
        base = (base - base.mean()) / base.std(ddof=1)
        return PairedSample(base + d)

    def test_d_value(self):
        s = self._sample_with_d(2.5)
        assert cohens_d(s).d == pytest.approx(2.5)

    @pytest.mark.parametrize("d,lo,hi", TABLE2[:3])
    def test_hedges_ci_matches_published(self, d, lo, hi):
        es = cohens_d(self._sample_with_d(d))
        assert es.ci_hedges[0] == pytest.approx(lo, abs=0.01)
        assert es.ci_hedges[1] == pytest.approx(hi, abs=0.01)

    def test_noncentral_ci_brackets_d(self):
        es = cohens_d(self._sample_with_d(3.0))
        assert es.ci_noncentral[0] < 3.0 < es.ci_noncentral[1]

    def test_noncentral_ci_has_correct_coverage_endpoints(self):
        # at the CI endpoints the observed t sits at the 2.5% / 97.5% tails
        s = self._sample_with_d(2.0)
        es = cohens_d(s)
        t_obs = 2.0 * math.sqrt(15)
        lo_ncp = es.ci_noncentral[0] * math.sqrt(15)
        hi_ncp = es.ci_noncentral[1] * math.sqrt(15)
        assert 1.0 - noncentral_t_cdf(t_obs, 14, lo_ncp) == pytest.approx(0.025, abs=1e-6)
        assert noncentral_t_cdf(t_obs, 14, hi_ncp) == pytest.approx(0.025, abs=1e-6)

    def test_zero_variance_raises(self):
        with pytest.raises(DegenerateVarianceError):
            cohens_d(PairedSample(np.ones(10)))


class TestHolm:
    def test_adjusted_monotone_and_bounded(self):
        p = [0.001, 0.01, 0.02, 0.04]
        reject, adj = holm_bonferroni(p)
        order = np.argsort(p)
        assert np.all(np.diff(adj[order]) >= 0)
        assert np.all(adj <= 1.0)
        assert adj[0] == pytest.approx(0.004)

    def test_step_down_stops_at_first_failure(self):
        reject, _ = holm_bonferroni([0.001, 0.03, 0.04])
        # 0.03 > 0.05/2 fails, so everything after the first failure fails
        assert list(reject) == [True, False, False]

    def test_all_tiny_rejected(self):
        reject, _ = holm_bonferroni([1e-12] * 9)
        assert all(reject)

    def test_invalid_pvalues(self):
        with pytest.raises(ValueError):
            holm_bonferroni([0.5, 1.5])


class TestBinomial:
    def test_exact_value_15_of_15(self):
        assert binomial_direction(15, 15) == 3.0517578125e-05

    def test_half(self):
        assert binomial_direction(0, 10) == 1.0

    def test_symmetry(self):
        # P(X >= k) + P(X >= n-k+1) == 1 for a fair coin
        assert binomial_direction(4, 10) + binomial_direction(7, 10) == pytest.approx(1.0)

    def test_bounds(self):
        with pytest.raises(ValueError):
            binomial_direction(11, 10)


class TestBlockBootstrap:
    def test_mean_and_determinism(self):
        rng = np.random.default_rng(2)
        delta = rng.normal(0.01, 0.05, (40, 40))
        mask = np.ones((40, 40), dtype=bool)
        r1 = spatial_block_bootstrap(delta, mask, block_size=10, iterations=500, seed=3)
        r2 = spatial_block_bootstrap(delta, mask, block_size=10, iterations=500, seed=3)
        assert r1.mean_delta == pytest.approx(delta.mean())
        assert r1.ci95 == r2.ci95
        assert r1.n_blocks == 16

    def test_partial_blocks_kept(self):
        delta = np.ones((25, 25))
        mask = np.ones((25, 25), dtype=bool)
        r = spatial_block_bootstrap(delta, mask, block_size=10, iterations=10, seed=0)
        assert r.n_blocks == 9

    def test_no_eval_cells(self):
        with pytest.raises(NoEvalBlocksError):
            spatial_block_bootstrap(np.ones((5, 5)), np.zeros((5, 5), dtype=bool))

    def test_well_separated_effect_stable_across_block_sizes(self):
        rng = np.random.default_rng(4)
        delta = rng.normal(0.5, 0.05, (60, 60))
        mask = np.ones((60, 60), dtype=bool)
        for b in (5, 10, 20):
            r = spatial_block_bootstrap(delta, mask, block_size=b,
                                        iterations=2000, seed=0)
            assert r.ci95[0] > 0.0  # verdict: clearly positive at every B


class TestBayesFactor:
    def test_null_favored_at_zero_mean(self):
        rng = np.random.default_rng(5)
        sample = PairedSample(rng.normal(0.0, 0.01, 15))
        assert bayes_factor_01(sample, prior_scale=0.02) > 1.0

    def test_alternative_favored_at_large_mean(self):
        sample = PairedSample(np.array([0.05, 0.052, 0.048, 0.051, 0.049] * 3))
        assert bayes_factor_01(sample, prior_scale=0.02) < 1.0

    def test_zero_variance_raises(self):
        with pytest.raises(DegenerateVarianceError):
            bayes_factor_01(PairedSample(np.ones(5)), prior_scale=0.02)
