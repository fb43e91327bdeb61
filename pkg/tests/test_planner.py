import heapq
import math

import numpy as np
import pytest

from oracles import brute_force_clearance, dijkstra_cost

from gridfuse.planner import (
    PlanQuery,
    clearance,
    clearance_field,
    compare_arms,
    plan_astar,
    sample_queries,
)

SQRT2 = math.sqrt(2.0)


class TestAstar:
    def test_straight_path_on_empty_grid(self):
        probs = np.zeros((10, 10))
        out = plan_astar(probs, PlanQuery((0, 0), (5, 0)))
        assert out.found
        assert out.cost == pytest.approx(5.0)
        assert out.path == [(i, 0) for i in range(6)]

    def test_enclosed_goal_not_found(self):
        probs = np.zeros((9, 9))
        probs[3:6, 3:6] = 0.9
        probs[4, 4] = 0.0
        out = plan_astar(probs, PlanQuery((0, 0), (4, 4)))
        assert not out.found
        assert out.path == []

    def test_blocked_start_or_goal(self):
        probs = np.zeros((5, 5))
        probs[0, 0] = 0.9
        assert not plan_astar(probs, PlanQuery((0, 0), (4, 4))).found

    def test_start_equals_goal_rejected(self):
        with pytest.raises(ValueError):
            PlanQuery((1, 1), (1, 1))

    def test_unobserved_prior_traversable(self):
        probs = np.full((5, 5), 0.5)
        assert plan_astar(probs, PlanQuery((0, 0), (4, 4))).found

    def test_costs_match_dijkstra_on_random_grids(self):
        rng = np.random.default_rng(0)
        for trial in range(50):
            probs = (rng.random((20, 20)) < 0.25).astype(float) * 0.9
            sx, sy, gx, gy = rng.integers(0, 20, size=4)
            if (sx, sy) == (gx, gy):
                continue
            out = plan_astar(probs, PlanQuery((int(sx), int(sy)), (int(gx), int(gy))))
            expect = dijkstra_cost(probs, (int(sx), int(sy)), (int(gx), int(gy)))
            if math.isinf(expect):
                assert not out.found
            else:
                assert out.cost == pytest.approx(expect, abs=1e-9)

    def test_deterministic_path(self):
        rng = np.random.default_rng(1)
        probs = (rng.random((15, 15)) < 0.2).astype(float) * 0.9
        probs[0, 0] = probs[14, 14] = 0.0
        q = PlanQuery((0, 0), (14, 14))
        p1 = plan_astar(probs, q).path
        p2 = plan_astar(probs, q).path
        assert p1 == p2


class TestClearance:
    def test_adjacent_to_wall(self):
        probs = np.zeros((5, 5))
        probs[2, :] = 0.9
        path = [(0, 1), (1, 1)]
        assert clearance(probs, path) == pytest.approx(1.0)

    def test_obstacle_free_sentinel(self):
        probs = np.zeros((6, 8))
        field = clearance_field(probs)
        assert np.all(field == math.hypot(8, 6))

    def test_empty_path_rejected(self):
        with pytest.raises(ValueError):
            clearance(np.zeros((3, 3)), [])

    @pytest.mark.parametrize("shape", [(10, 10), (30, 17), (50, 50)])
    def test_matches_brute_force(self, shape):
        rng = np.random.default_rng(shape[0])
        probs = (rng.random(shape) < 0.1).astype(float) * 0.9
        assert np.allclose(clearance_field(probs), brute_force_clearance(probs))


class TestCompareArms:
    def test_identical_grids_full_equivalence(self):
        rng = np.random.default_rng(5)
        probs = (rng.random((20, 20)) < 0.15).astype(float) * 0.9
        truth = probs > 0.5
        rep = compare_arms(probs, probs, truth, n_queries=40, seed=0)
        assert rep.path_equiv_rate == 1.0
        assert rep.clearance_delta_median == 0.0
        assert rep.frac_below_1cell == 1.0

    def test_fully_occupied_arm_no_shared_success(self):
        free = np.zeros((10, 10))
        full = np.full((10, 10), 0.9)
        truth = np.zeros((10, 10), dtype=bool)
        rep = compare_arms(free, full, truth, n_queries=10, seed=0)
        assert rep.shared_success == 0.0

    def test_seeded_queries_deterministic(self):
        truth = np.zeros((12, 12), dtype=bool)
        q1 = sample_queries(truth, 20, seed=3)
        q2 = sample_queries(truth, 20, seed=3)
        assert q1 == q2

    def test_queries_avoid_occupied_truth(self):
        truth = np.zeros((10, 10), dtype=bool)
        truth[:, :5] = True
        for q in sample_queries(truth, 30, seed=1):
            assert not truth[q.start[1], q.start[0]]
            assert not truth[q.goal[1], q.goal[0]]
