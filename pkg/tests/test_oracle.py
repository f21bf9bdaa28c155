import math

import numpy as np
import pytest

from cavecop.cave import Selection, cave_run
from cavecop.model import utility
from cavecop.oracle import (OracleError, SmallInstance, Violation,
                            brute_force_cave, brute_force_cavecop,
                            cop_lp_value, feasibility_check,
                            fractional_knapsack_oracle)
from cavecop.placement import Placement
from cavecop.sim import cav_placement

from util import (random_placement, random_small_scenario, sparse_placement,
                  tiny_scenario)


class TestBruteForceCave:
    def test_single_user_best_version(self):
        s = tiny_scenario(bitrates=(1.0, 4.5), users=1, alphas=[20.0],
                          cutoffs=[4.5])
        placement = sparse_placement(s, {1: [2]})
        result = brute_force_cave(SmallInstance(s), placement)
        assert result.best_z == {0: (1, 2)}
        assert result.best_utility == pytest.approx(utility(s.users[0], 4.5))

    def test_shared_link_enumeration(self):
        # two users share a 4.5 Mbps trunk; enumeration decides both sit
        # at 1 Mbps because U(1)+U(1) beats U(4.5)+U(0)
        s = tiny_scenario(bitrates=(1.0, 4.5), trunk_mbps=(4.5, 1000.0),
                          users=2, alphas=[20.0, 20.0], cutoffs=[4.5, 4.5])
        placement = Placement.root_only(s)
        result = brute_force_cave(SmallInstance(s), placement)
        both_low = 2 * utility(s.users[0], 1.0)
        high_and_null = utility(s.users[0], 4.5) + utility(s.users[0], 0.0)
        assert both_low > high_and_null  # the inequality the optimum relies on
        assert result.best_utility == pytest.approx(both_low)
        assert result.best_z == {0: (0, 1), 1: (0, 1)}

    def test_zero_capacity_forces_null(self):
        s = tiny_scenario(bitrates=(1.0, 4.5), trunk_mbps=(0.0, 1000.0),
                          users=2)
        placement = Placement.root_only(s)
        result = brute_force_cave(SmallInstance(s), placement)
        assert result.best_utility == pytest.approx(-200.0)
        assert result.best_z == {0: (0, 0), 1: (0, 0)}

    def test_lp_dominates_integer(self):
        rng = np.random.default_rng(71)
        for _ in range(20):
            s = random_small_scenario(rng)
            placement = random_placement(rng, s)
            result = brute_force_cave(SmallInstance(s), placement)
            assert result.lp_value >= result.best_utility - 1e-9


class TestBruteForceCaveCop:
    def test_places_best_version_at_edge(self):
        # the root path is capacity-limiting (1 Mbps), the edge budget fits
        # exactly the 4.5 Mbps version
        s = tiny_scenario(bitrates=(1.0, 4.5), trunk_mbps=(1.0, 1000.0),
                          users=1, alphas=[20.0], cutoffs=[4.5],
                          budgets=(math.inf, 4.5))
        result = brute_force_cavecop(SmallInstance(s))
        assert result.best_placement.stores(1, 2)
        assert result.best_utility == pytest.approx(utility(s.users[0], 4.5))

    def test_zero_budget_reduces_to_fixed_placement(self):
        s = tiny_scenario(bitrates=(1.0, 4.5), trunk_mbps=(4.5, 1000.0),
                          users=2, budgets=(math.inf, 0.0))
        joint = brute_force_cavecop(SmallInstance(s))
        fixed = brute_force_cave(SmallInstance(s), Placement.root_only(s))
        assert joint.best_utility == pytest.approx(fixed.best_utility)

    def test_dominates_cav_placement(self):
        rng = np.random.default_rng(73)
        for _ in range(10):
            s = random_small_scenario(rng)
            joint = brute_force_cavecop(SmallInstance(s))
            under_cav = brute_force_cave(SmallInstance(s), cav_placement(s))
            assert joint.best_utility >= under_cav.best_utility - 1e-9

    def test_dominated_by_joint_lp(self):
        rng = np.random.default_rng(79)
        for _ in range(10):
            s = random_small_scenario(rng)
            inst = SmallInstance(s)
            assert cop_lp_value(inst) >= \
                brute_force_cavecop(inst).best_utility - 1e-9


class TestKnapsackOracle:
    def test_example(self):
        assert fractional_knapsack_oracle(
            [(10.0, 2.0), (9.0, 3.0), (4.0, 4.0)], 5.0) == pytest.approx(19.0)

    def test_everything_fits(self):
        items = [(3.0, 1.0), (2.0, 2.0), (5.0, 1.5)]
        assert fractional_knapsack_oracle(items, 10.0) == pytest.approx(10.0)

    def test_zero_budget(self):
        assert fractional_knapsack_oracle([(10.0, 2.0)], 0.0) == 0.0

    def test_empty_items(self):
        assert fractional_knapsack_oracle([], 5.0) == 0.0

    def test_too_many_items_rejected(self):
        with pytest.raises(OracleError):
            fractional_knapsack_oracle([(1.0, 1.0)] * 13, 5.0)


class TestFeasibilityCheck:
    def test_oracle_solution_is_clean(self):
        rng = np.random.default_rng(83)
        s = random_small_scenario(rng)
        placement = random_placement(rng, s)
        result = brute_force_cave(SmallInstance(s), placement)
        z = {(u, c, v): 1.0 for u, (c, v) in result.best_z.items()}
        assert feasibility_check(s, z, placement) == []

    def test_overload_reports_negative_slack(self):
        s = tiny_scenario(bitrates=(30.0,), trunk_mbps=(25.0, 1000.0),
                          users=1, cutoffs=[30.0])
        placement = Placement.root_only(s)
        violations = feasibility_check(s, Selection({0: (0, 1)}), placement)
        assert len(violations) == 1
        assert violations[0].constraint == "capacity"
        assert violations[0].slack == pytest.approx(-5.0)

    def test_unstored_selection_flagged(self):
        s = tiny_scenario(bitrates=(1.0,), users=1)
        placement = sparse_placement(s, {})
        violations = feasibility_check(s, Selection({0: (1, 1)}), placement)
        kinds = {v.constraint for v in violations}
        assert "stored-coupling" in kinds

    def test_averaged_run_within_relative_slack(self):
        rng = np.random.default_rng(89)
        s = random_small_scenario(rng)
        placement = random_placement(rng, s)
        run = cave_run(s, placement, 2000, average_window=200)
        assert feasibility_check(s, run.averaged, placement,
                                 link_rel_tol=0.01) == []


class TestInstanceLimits:
    def test_too_many_users(self):
        s = tiny_scenario(users=5)
        with pytest.raises(OracleError):
            SmallInstance(s)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(97)
        s = random_small_scenario(rng)
        base = brute_force_cavecop(SmallInstance(s)).best_utility
        # relabel non-root caches by reversing their budgets and trunks
        budgets = [c.storage_mb for c in s.topology.caches]
        trunks = [l.capacity_mbps for l in s.topology.links]
        if len(budgets) == 3:
            swapped = tiny_scenario(
                bitrates=tuple(v.bitrate_mbps for v in s.catalog.versions[1:4]
                               if v.video_id == 0),
                trunk_mbps=(trunks[0], trunks[2], trunks[1]),
                users=len(s.users),
                alphas=[p.alpha for p in s.users],
                cutoffs=[p.cutoff_mbps for p in s.users],
                budgets=(budgets[0], budgets[2], budgets[1]),
            )
            other = brute_force_cavecop(SmallInstance(swapped)).best_utility
            assert other == pytest.approx(base)

    def test_user_order_invariance(self):
        rng = np.random.default_rng(101)
        s = random_small_scenario(rng)
        budgets = tuple(c.storage_mb for c in s.topology.caches)
        trunks = tuple(l.capacity_mbps for l in s.topology.links)
        rates = tuple(v.bitrate_mbps for v in s.catalog.versions
                      if v.video_id == 0)
        flipped = tiny_scenario(
            bitrates=rates, trunk_mbps=trunks, users=len(s.users),
            alphas=[p.alpha for p in reversed(s.users)],
            cutoffs=[p.cutoff_mbps for p in reversed(s.users)],
            budgets=budgets)
        a = brute_force_cavecop(SmallInstance(s)).best_utility
        b = brute_force_cavecop(SmallInstance(flipped)).best_utility
        assert a == pytest.approx(b)
