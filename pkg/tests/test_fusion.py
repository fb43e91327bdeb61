import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridfuse.core import GridSpec
from gridfuse.fusion import (
    BBA,
    VACUOUS,
    BeliefGrid,
    DegenerateMassError,
    FusionParams,
    LogOddsCell,
    LogOddsGrid,
    TotalConflictError,
    apply_mof_floor,
    bayes_trajectory,
    bayes_update,
    betp,
    closed_form_consonant,
    combine_for_rule,
    dempster_combine,
    fuse_grids,
    logistic,
    logit,
    logodds_from_masses,
    make_grid,
    masses_from_logodds_betp,
    masses_from_logodds_ppl,
    matched_masses,
    ppl,
    yager_combine,
)

finite_l = st.floats(-30.0, 30.0, allow_nan=False)


def random_bba(rng):
    m = rng.dirichlet([1.0, 1.0, 1.0])
    return BBA(m[0], m[1], m[2])


class TestBBA:
    def test_sum_validated(self):
        with pytest.raises(ValueError):
            BBA(0.5, 0.5, 0.5)
        with pytest.raises(ValueError):
            BBA(-0.1, 0.6, 0.5)

    def test_vacuous_is_consonant(self):
        assert VACUOUS.is_consonant

    def test_consonance(self):
        assert BBA(0.3, 0.0, 0.7).is_consonant
        assert not BBA(0.3, 0.2, 0.5).is_consonant


class TestMatching:
    def test_betp_golden_occupied(self):
        m = masses_from_logodds_betp(2.0)
        assert m.m_o == pytest.approx(0.7616, abs=5e-5)
        assert m.m_f == 0.0
        assert m.m_of == pytest.approx(0.2384, abs=5e-5)
        assert betp(m) == pytest.approx(0.8808, abs=5e-5)

    def test_betp_golden_free(self):
        m = masses_from_logodds_betp(-0.5)
        assert m.m_o == 0.0
        assert m.m_f == pytest.approx(0.2449, abs=5e-5)
        assert m.m_of == pytest.approx(0.7551, abs=5e-5)
        assert betp(m) == pytest.approx(0.3775, abs=5e-5)

    def test_ppl_golden(self):
        # m_OF under PPl matching equals exp(-|l|)
        m = masses_from_logodds_ppl(2.0)
        assert m.m_o == pytest.approx(0.86466, abs=5e-5)
        assert m.m_of == pytest.approx(math.exp(-2.0), abs=1e-12)
        m = masses_from_logodds_ppl(-0.5)
        assert m.m_f == pytest.approx(0.39347, abs=5e-5)
        assert m.m_of == pytest.approx(math.exp(-0.5), abs=1e-12)

    def test_zero_logodds_maps_to_vacuous(self):
        for fn in (masses_from_logodds_betp, masses_from_logodds_ppl):
            m = fn(0.0)
            assert m.m_of == pytest.approx(1.0)

    @given(finite_l)
    def test_betp_identity(self, l):
        # the matching is defined so that BetP(m(l)) == sigma(l)
        m = masses_from_logodds_betp(l)
        assert abs(betp(m) - logistic(l)) < 1e-12

    @given(finite_l)
    def test_ppl_identity(self, l):
        m = masses_from_logodds_ppl(l)
        assert abs(ppl(m) - logistic(l)) < 1e-12

    @given(finite_l)
    def test_matched_masses_consonant(self, l):
        for matching in ("betp", "ppl"):
            assert matched_masses(l, matching).is_consonant

    def test_bijection_roundtrip_bulk(self):
        rng = np.random.default_rng(7)
        ls = rng.uniform(-15, 15, size=10_000)
        for l in ls:
            m = masses_from_logodds_betp(l)
            assert abs(logodds_from_masses(m) - l) < 1e-9

    def test_logodds_from_masses_degenerate(self):
        with pytest.raises(DegenerateMassError):
            logodds_from_masses(BBA(1.0, 0.0, 0.0))


class TestLogOdds:
    def test_logistic_logit_inverse(self):
        for l in (-5.0, 0.0, 3.7):
            assert logit(logistic(l)) == pytest.approx(l, abs=1e-9)

    def test_bayes_update_additive_and_clamped(self):
        assert bayes_update(LogOddsCell(1.0, 0), 2.0, 10.0) == LogOddsCell(3.0, 1)
        assert bayes_update(LogOddsCell(9.5, 3), 2.0, 10.0).L == 10.0
        assert bayes_update(LogOddsCell(-9.5, 3), -2.0, 10.0).L == -10.0

    def test_infinite_lmax_never_clamps(self):
        assert bayes_update(LogOddsCell(1e6, 0), 2.0, math.inf).L == 1e6 + 2.0

    def test_clamp_non_associativity_witness(self):
        # 6 occupied then 6 free, L_max=10: clamping makes order matter
        seq_a = [2.0] * 6 + [-2.0] * 6
        seq_b = [2.0, -2.0] * 6
        ca = cb = LogOddsCell()
        for a, b in zip(seq_a, seq_b):
            ca = bayes_update(ca, a, 10.0)
            cb = bayes_update(cb, b, 10.0)
        assert ca.L != cb.L

    def test_bayes_trajectory(self):
        assert bayes_trajectory(2.0, 10.0, 2) == 4.0
        assert bayes_trajectory(2.0, 10.0, 50) == 10.0


class TestCombination:
    def test_vacuous_identity(self):
        m = BBA(0.3, 0.2, 0.5)
        combined, k = dempster_combine(m, VACUOUS)
        assert k.K == 0.0
        assert combined.m_o == pytest.approx(m.m_o)
        assert combined.m_f == pytest.approx(m.m_f)

    def test_conflict_value(self):
        a = BBA(0.7616, 0.0, 0.2384)
        b = BBA(0.0, 0.2449, 0.7551)
        _, k = dempster_combine(a, b)
        assert k.K == pytest.approx(0.7616 * 0.2449)

    def test_total_conflict_raises(self):
        with pytest.raises(TotalConflictError):
            dempster_combine(BBA(1.0, 0.0, 0.0), BBA(0.0, 1.0, 0.0))

    def test_yager_total_conflict_is_vacuous(self):
        m = yager_combine(BBA(1.0, 0.0, 0.0), BBA(0.0, 1.0, 0.0))
        assert m.m_of == pytest.approx(1.0)

    def test_yager_conflict_to_ignorance(self):
        a = BBA(0.6, 0.1, 0.3)
        b = BBA(0.2, 0.5, 0.3)
        dm, dk = dempster_combine(a, b)
        ym = yager_combine(a, b)
        # Yager keeps the conflict as extra ignorance instead of renormalizing
        assert ym.m_of == pytest.approx(dm.m_of * (1 - dk.K) + dk.K)
        assert ym.m_o + ym.m_f + ym.m_of == pytest.approx(1.0)

    def test_commutativity(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            a, b = random_bba(rng), random_bba(rng)
            ab, _ = dempster_combine(a, b)
            ba, _ = dempster_combine(b, a)
            assert abs(ab.m_o - ba.m_o) < 1e-12
            assert abs(ab.m_of - ba.m_of) < 1e-12

    def test_associativity(self):
        rng = np.random.default_rng(4)
        for _ in range(500):
            a, b, c = (random_bba(rng) for _ in range(3))
            left, _ = dempster_combine(dempster_combine(a, b)[0], c)
            right, _ = dempster_combine(a, dempster_combine(b, c)[0])
            assert abs(left.m_o - right.m_o) < 1e-9
            assert abs(left.m_f - right.m_f) < 1e-9
            assert abs(left.m_of - right.m_of) < 1e-9

    def test_mof_strict_decay(self):
        # combining with any non-vacuous mass strictly reduces ignorance
        rng = np.random.default_rng(5)
        for _ in range(10_000):
            a, b = random_bba(rng), random_bba(rng)
            if a.m_of < 1e-12 or b.m_of > 1 - 1e-9 or b.m_o + b.m_f < 1e-12:
                continue
            combined, k = dempster_combine(a, b)
            assert combined.m_of < a.m_of

    def test_closed_form_matches_iterated(self):
        a = 0.7616
        obs = BBA(a, 0.0, 1.0 - a)
        acc = VACUOUS
        for n in range(1, 51):
            acc, _ = dempster_combine(acc, obs)
            closed = closed_form_consonant(a, n)
            assert abs(acc.m_o - closed.m_o) < 1e-9
            assert abs(acc.m_of - closed.m_of) < 1e-9

    def test_convergence_table_rows(self):
        # N = 1, 2, 5 accumulation of the matched l=2.0 observation
        a = betp(masses_from_logodds_betp(2.0)) * 2 - 1  # m_O = 2p-1
        expect = {1: (2.0, 0.8808, 0.7616, 0.2384, 0.8808),
                  2: (4.0, 0.9820, 0.9432, 0.0568, 0.9716),
                  5: (10.0, 0.999955, 0.9992, 0.0008, 0.9996)}
        for n, (L, p, m_o, m_of, bp) in expect.items():
            assert n * 2.0 == L
            tol = 1e-6 if n == 5 else 5e-5
            assert logistic(L) == pytest.approx(p, abs=tol)
            closed = closed_form_consonant(a, n)
            assert closed.m_o == pytest.approx(m_o, abs=5e-5)
            assert closed.m_of == pytest.approx(m_of, abs=5e-5)
            assert betp(closed) == pytest.approx(bp, abs=5e-5)

    def test_betp_minus_p_at_n2(self):
        a = 0.76159415595
        delta = betp(closed_form_consonant(a, 2)) - logistic(4.0)
        assert delta == pytest.approx(-0.0104, abs=5e-5)


class TestMofFloor:
    def test_above_floor_unchanged(self):
        m = BBA(0.9, 0.05, 0.05)
        assert apply_mof_floor(m, 0.01) is m

    def test_rescale(self):
        m = apply_mof_floor(BBA(0.995, 0.0, 0.005), 0.05)
        assert m.m_of == pytest.approx(0.05)
        assert m.m_o == pytest.approx(0.95)
        assert m.m_o + m.m_f + m.m_of == pytest.approx(1.0)

    def test_zero_floor_disabled(self):
        m = BBA(0.999, 0.001, 0.0)
        assert apply_mof_floor(m, 0.0) is m


class TestParams:
    def test_defaults(self):
        p = FusionParams()
        assert (p.l_occ, p.l_free, p.L_max, p.mof_floor) == (2.0, -0.5, 10.0, 0.0)
        assert p.rule == "bayes" and p.matching == "betp"

    def test_validation(self):
        with pytest.raises(ValueError):
            FusionParams(l_occ=-1.0)
        with pytest.raises(ValueError):
            FusionParams(l_free=0.5)
        with pytest.raises(ValueError):
            FusionParams(rule="nonsense")
        with pytest.raises(ValueError):
            FusionParams(mof_floor=1.5)


class TestGrids:
    @pytest.fixture
    def spec(self):
        return GridSpec(width_cells=8, height_cells=6, resolution=0.5)

    def test_make_grid_kinds(self, spec):
        assert isinstance(make_grid(spec, FusionParams(rule="bayes")), LogOddsGrid)
        assert isinstance(make_grid(spec, FusionParams(rule="dempster")), BeliefGrid)

    def test_prior_probabilities(self, spec):
        assert np.all(make_grid(spec, FusionParams()).probabilities() == 0.5)
        bg = make_grid(spec, FusionParams(rule="dempster"))
        assert np.all(bg.probabilities() == 0.5)

    def test_mixed_evidence_divergence(self):
        # 5 occupied then 5 free observations of one cell
        acc = VACUOUS
        for _ in range(5):
            acc, _ = dempster_combine(acc, masses_from_logodds_betp(2.0))
        for _ in range(5):
            acc, _ = dempster_combine(acc, masses_from_logodds_betp(-0.5))
        cell = LogOddsCell()
        for l in [2.0] * 5 + [-0.5] * 5:
            cell = bayes_update(cell, l, 10.0)
        assert betp(acc) == pytest.approx(0.9973, abs=5e-5)
        assert logistic(cell.L) == pytest.approx(0.9994, abs=5e-5)

    def test_fuse_logodds_additive(self, spec):
        a = make_grid(spec, FusionParams())
        b = make_grid(spec, FusionParams())
        a.L[2, 3] = 4.0
        b.L[2, 3] = 7.0
        fused = fuse_grids([a, b], FusionParams())
        assert fused.L[2, 3] == 10.0  # clamped sum

    def test_fuse_belief_identity(self, spec):
        params = FusionParams(rule="dempster")
        a = make_grid(spec, params)
        a.m_o[1, 1], a.m_of[1, 1] = 0.4, 0.6
        a.m_f[1, 1] = 0.0
        fused = fuse_grids([a], params)
        assert fused.probabilities()[1, 1] == pytest.approx(0.7)

    def test_combine_for_rule_dispatch(self):
        a = BBA(0.5, 0.0, 0.5)
        b = BBA(0.0, 0.5, 0.5)
        d = combine_for_rule(a, b, "dempster")
        y = combine_for_rule(a, b, "yager")
        assert d.m_o + d.m_f + d.m_of == pytest.approx(1.0)
        assert y.m_of > d.m_of
