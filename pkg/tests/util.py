"""Hand-built tiny scenarios for oracle-backed tests."""
from __future__ import annotations

import math

import numpy as np

from cavecop.model import (CacheNode, Catalog, Link, Scenario, Topology,
                           UserProfile, VideoVersion, build_catalog)
from cavecop.placement import Placement


def tiny_catalog(bitrates, duration_s=1.0, n_videos=1):
    return build_catalog(n_videos, len(bitrates), tuple(bitrates), duration_s)


def tiny_scenario(bitrates=(1.0, 4.5), trunk_mbps=(1000.0, 1000.0),
                  users=2, alphas=None, cutoffs=None, videos=None,
                  budgets=(math.inf, 10.0), duration_s=1.0, n_videos=1,
                  seed=0):
    """Star of caches, one shared trunk link per cache.

    budgets[0] must be inf (the root, cache id 0). Every user reaches
    cache c over that cache's single trunk link, so users contend there.
    """
    assert math.isinf(budgets[0])
    catalog = tiny_catalog(bitrates, duration_s, n_videos)
    caches = tuple(CacheNode(i, "root" if i == 0 else "edge", b)
                   for i, b in enumerate(budgets))
    links = tuple(Link(i, trunk_mbps[i]) for i in range(len(budgets)))
    routes = {(s, c.cache_id): (c.cache_id,) for s in range(users) for c in caches}
    alphas = alphas or [20.0] * users
    cutoffs = cutoffs or [bitrates[-1]] * users
    videos = videos or [0] * users
    profiles = tuple(UserProfile(s, "smartphone", alphas[s], cutoffs[s],
                                 -100.0, videos[s])
                     for s in range(users))
    return Scenario(
        topology=Topology(caches, tuple(range(users)), links, routes),
        catalog=catalog,
        users=profiles,
        rng_seed=seed,
        duration_ticks=10,
        tick_seconds=0.1,
        cop_period_ticks=1,
        placement_apply_tick=5,
    )


def random_small_scenario(rng: np.random.Generator, max_users=3,
                          congested=True):
    """Randomized tiny instance for property and acceptance tests."""
    n_versions = int(rng.integers(2, 4))
    bitrates = np.sort(rng.choice(
        [0.5, 1.0, 1.5, 2.5, 4.5, 6.0, 9.0], size=n_versions, replace=False))
    n_users = int(rng.integers(2, max_users + 1))
    n_free = int(rng.integers(1, 3))  # non-root caches

    demand = bitrates[-1] * n_users
    if congested:
        trunk = [float(rng.uniform(0.4, 0.9) * demand) for _ in range(1 + n_free)]
    else:
        trunk = [float(2.0 * demand) for _ in range(1 + n_free)]

    total_size = float(bitrates.sum())  # duration 1 s
    budgets = [math.inf] + [float(rng.uniform(0.2, 1.0) * total_size)
                            for _ in range(n_free)]
    alphas = [float(rng.uniform(10.0, 60.0)) for _ in range(n_users)]
    cutoffs = [float(rng.choice(bitrates)) for _ in range(n_users)]
    return tiny_scenario(
        bitrates=tuple(float(b) for b in bitrates),
        trunk_mbps=tuple(trunk),
        users=n_users,
        alphas=alphas,
        cutoffs=cutoffs,
        budgets=tuple(budgets),
    )


def sparse_placement(scenario, stored: dict) -> Placement:
    """Placement where the root holds only the null version; `stored`
    maps cache id -> version ids. Satisfies the selection precondition
    without the root masking every comparison."""
    placement = Placement.root_only(scenario)
    placement.matrix[:] = False
    root_row = placement.row_index(scenario.topology.root_id)
    placement.matrix[root_row, scenario.catalog.null_version_id] = True
    for cache_id, versions in stored.items():
        for v in versions:
            placement.matrix[placement.row_index(cache_id), v] = True
    return placement


def random_placement(rng: np.random.Generator, scenario) -> Placement:
    """Root-only plus a random feasible subset at each budgeted cache."""
    placement = Placement.root_only(scenario)
    cat = scenario.catalog
    for cache in scenario.topology.caches:
        if math.isinf(cache.storage_mb):
            continue
        remaining = cache.storage_mb
        versions = [v.version_id for v in cat.versions if v.file_size_mb > 0]
        rng.shuffle(versions)
        for v in versions:
            if rng.random() < 0.6 and cat.size(v) <= remaining:
                placement.matrix[placement.row_index(cache.cache_id), v] = True
                remaining -= cat.size(v)
    return placement
