import json
import math

import numpy as np
import pytest

from cavecop.model import (ModelError, ScenarioParams, UserProfile,
                           generate_scenario, route_links, scenario_to_dict,
                           utility, validate, zipf_probabilities,
                           build_catalog)


TV = UserProfile(0, "tv", 60.0, 18.0, -100.0, 0)
PHONE = UserProfile(1, "smartphone", 20.0, 4.5, -100.0, 0)


class TestUtility:
    def test_tv_at_cutoff(self):
        # 60 * ln(18)
        assert utility(TV, 18.0) == pytest.approx(173.42230547376988)

    def test_cutoff_binds(self):
        # a phone watching 18 Mbps is capped at ln(4.5)
        assert utility(PHONE, 18.0) == pytest.approx(30.081547935525483)

    def test_zero_rate_is_stall_utility(self):
        assert utility(TV, 0.0) == -100.0
        assert utility(PHONE, 0.0) == -100.0

    def test_negative_rate_rejected(self):
        with pytest.raises(ModelError):
            utility(TV, -1.0)

    def test_monotone(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            a, b = sorted(rng.uniform(0.01, 40.0, size=2))
            assert utility(TV, a) <= utility(TV, b) + 1e-12

    def test_concave(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            x1, x2 = rng.uniform(0.01, 40.0, size=2)
            theta = rng.uniform(0.01, 0.99)
            mid = theta * x1 + (1 - theta) * x2
            assert utility(TV, mid) >= (theta * utility(TV, x1)
                                        + (1 - theta) * utility(TV, x2)) - 1e-9


class TestGenerate:
    def test_paper_defaults(self):
        s = generate_scenario(ScenarioParams(), seed=0)
        assert len(s.topology.caches) == 15
        assert len(s.users) == 160
        assert s.catalog.n_videos == 200
        assert len(s.catalog.versions) == 1001
        assert validate(s) == []

    def test_deterministic(self):
        a = generate_scenario(ScenarioParams(), seed=42)
        b = generate_scenario(ScenarioParams(), seed=42)
        assert json.dumps(scenario_to_dict(a), sort_keys=True) == \
            json.dumps(scenario_to_dict(b), sort_keys=True)

    def test_seed_changes_users(self):
        a = generate_scenario(ScenarioParams(), seed=1)
        b = generate_scenario(ScenarioParams(), seed=2)
        assert a.users != b.users

    def test_zipf_ratio(self):
        p = zipf_probabilities(200, 1.0)
        rng = np.random.default_rng(3)
        draws = rng.choice(200, size=100_000, p=p)
        ratio = (draws == 0).sum() / (draws == 1).sum()
        assert ratio == pytest.approx(2.0, rel=0.10)

    def test_rejects_bad_counts(self):
        with pytest.raises(ModelError):
            generate_scenario(ScenarioParams(n_videos=0), seed=0)
        with pytest.raises(ModelError):
            generate_scenario(ScenarioParams(fanouts=(2, 0, 2)), seed=0)
        with pytest.raises(ModelError):
            generate_scenario(ScenarioParams(users_per_edge=-1), seed=0)

    def test_storage_budgets(self):
        s = generate_scenario(ScenarioParams(), seed=0)
        one_video = sum(v * 3600.0 for v in (1.0, 2.5, 4.5, 9.0, 18.0))
        by_tier = {c.tier: c.storage_mb for c in s.topology.caches}
        assert math.isinf(by_tier["root"])
        assert by_tier["tertiary"] == pytest.approx(4 * one_video)
        assert by_tier["secondary"] == pytest.approx(2 * one_video)
        assert by_tier["edge"] == pytest.approx(1 * one_video)

    def test_link_capacities(self):
        s = generate_scenario(ScenarioParams(), seed=0)
        caps = sorted({l.capacity_mbps for l in s.topology.links})
        assert caps == [25.0, 100.0]
        access = [l for l in s.topology.links if l.capacity_mbps == 25.0]
        assert len(access) == 160  # one per user


class TestRoutes:
    def test_one_hop_to_own_edge(self):
        s = generate_scenario(ScenarioParams(), seed=0)
        # user 0 hangs off the first edge cache; find it via the 1-link route
        edges = [c.cache_id for c in s.topology.caches if c.tier == "edge"]
        own = [c for c in edges if len(route_links(s.topology, 0, c)) == 1]
        assert len(own) == 1

    def test_route_to_root_has_four_links(self):
        s = generate_scenario(ScenarioParams(), seed=0)
        assert len(route_links(s.topology, 0, s.topology.root_id)) == 4

    def test_unknown_pair_raises(self):
        s = generate_scenario(ScenarioParams(), seed=0)
        with pytest.raises(ModelError):
            route_links(s.topology, 0, 999)

    def test_routes_stable(self):
        s = generate_scenario(ScenarioParams(), seed=0)
        assert route_links(s.topology, 5, 3) == route_links(s.topology, 5, 3)


class TestValidate:
    def test_missing_root(self):
        s = generate_scenario(ScenarioParams(), seed=0)
        caches = tuple(
            c if not math.isinf(c.storage_mb) else
            type(c)(c.cache_id, c.tier, 100.0)
            for c in s.topology.caches)
        broken = s.__class__(
            topology=type(s.topology)(caches, s.topology.users,
                                      s.topology.links, s.topology.routes),
            catalog=s.catalog, users=s.users, rng_seed=s.rng_seed)
        assert any("root" in p for p in validate(broken))

    def test_null_version_with_bitrate(self):
        s = generate_scenario(ScenarioParams(), seed=0)
        versions = list(s.catalog.versions)
        versions[0] = type(versions[0])(-1, 0, 1.0, 0.0)
        cat = type(s.catalog)(tuple(versions), s.catalog.n_videos,
                              s.catalog.versions_per_video, 0,
                              s.catalog.duration_seconds)
        broken = s.__class__(topology=s.topology, catalog=cat,
                             users=s.users, rng_seed=s.rng_seed)
        assert validate(broken)

    def test_cutoff_must_match_a_version(self):
        s = generate_scenario(ScenarioParams(), seed=0)
        users = list(s.users)
        users[0] = UserProfile(users[0].user_id, "tv", 60.0, 7.77, -100.0, 0)
        broken = s.__class__(topology=s.topology, catalog=s.catalog,
                             users=tuple(users), rng_seed=s.rng_seed)
        assert any("cutoff" in p for p in validate(broken))


class TestCatalog:
    def test_version_sizes(self):
        cat = build_catalog(2, 3, (1.0, 2.0, 4.0), 10.0)
        assert cat.size(1) == pytest.approx(10.0)
        assert cat.bitrate(cat.null_version_id) == 0.0
        assert cat.versions_of(1) == (4, 5, 6)
        assert cat.interest_set(0) == (1, 2, 3, 0)

    def test_unknown_video(self):
        cat = build_catalog(2, 3, (1.0, 2.0, 4.0), 10.0)
        with pytest.raises(ModelError):
            cat.versions_of(7)
