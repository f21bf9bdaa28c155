"""Ground-truth solvers for small instances.

Everything here is built directly on the model layer (routes, utilities)
rather than on the solver's candidate arrays, so the two code paths can
check each other. Integer optima come from exhaustive enumeration with
load pruning; fractional optima come from scipy's LP solver.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .model import Scenario, route_links, utility
from .placement import Placement

MAX_USERS = 4
MAX_CACHES = 3
MAX_VERSIONS_PER_USER = 4
MAX_LINKS = 8
MAX_ASSIGNMENTS = 10_000_000


class OracleError(ValueError):
    """Instance too large or structurally unusable for enumeration."""


@dataclass(frozen=True)
class SmallInstance:
    """A scenario small enough to enumerate exactly."""

    scenario: Scenario

    def __post_init__(self):
        s = self.scenario
        if len(s.users) > MAX_USERS:
            raise OracleError(f"too many users ({len(s.users)} > {MAX_USERS})")
        if len(s.topology.caches) > MAX_CACHES:
            raise OracleError(f"too many caches ({len(s.topology.caches)} > {MAX_CACHES})")
        if len(s.topology.links) > MAX_LINKS:
            raise OracleError(f"too many links ({len(s.topology.links)} > {MAX_LINKS})")
        space = 1
        for profile in s.users:
            versions = s.catalog.versions_of(profile.interest_video)
            if len(versions) > MAX_VERSIONS_PER_USER:
                raise OracleError("too many versions per user")
            space *= len(s.topology.caches) * (len(versions) + 1)
        n_storable = sum(1 for v in s.catalog.versions if v.file_size_mb > 0)
        for cache in s.topology.caches:
            if not math.isinf(cache.storage_mb):
                space *= 2 ** n_storable
        if space > MAX_ASSIGNMENTS:
            raise OracleError(f"assignment space {space} exceeds {MAX_ASSIGNMENTS}")


def _user_options(scenario: Scenario, placement: Placement):
    """Per user: feasible (cache, version, utility, per-link load) tuples."""
    topo, cat = scenario.topology, scenario.catalog
    link_ids = sorted(l.link_id for l in topo.links)
    link_index = {l: i for i, l in enumerate(link_ids)}
    capacity = np.empty(len(link_ids))
    for l in topo.links:
        capacity[link_index[l.link_id]] = l.capacity_mbps

    options = []
    for profile in scenario.users:
        rows = []
        for cache_id in sorted(c.cache_id for c in topo.caches):
            for version_id in sorted(cat.interest_set(profile.interest_video)):
                if not placement.stores(cache_id, version_id):
                    continue
                rate = cat.bitrate(version_id)
                load = np.zeros(len(link_ids))
                for l in route_links(topo, profile.user_id, cache_id):
                    load[link_index[l]] += rate
                rows.append((cache_id, version_id, utility(profile, rate), load))
        if not rows:
            raise OracleError(f"user {profile.user_id} has no feasible option; "
                              "the root must store the null version")
        options.append(rows)
    return options, capacity


@dataclass
class CaveOracleResult:
    best_z: dict  # user_id -> (cache_id, version_id)
    best_utility: float
    lp_value: float

    @property
    def lp_integral(self) -> bool:
        scale = max(1.0, abs(self.best_utility))
        return abs(self.lp_value - self.best_utility) <= 1e-6 * scale


def brute_force_cave(instance: SmallInstance, placement: Placement) -> CaveOracleResult:
    """Exhaustive integer optimum of selection under a fixed placement,
    plus the LP relaxation value."""
    options, capacity = _user_options(instance.scenario, placement)
    best_z, best_utility = _search_integer(instance.scenario, options, capacity)
    lp_value = _cave_lp_value(options, capacity)
    return CaveOracleResult(best_z, best_utility, lp_value)


def _cave_lp_value(options, capacity) -> float:
    """LP relaxation over the same option sets, solved by HiGHS."""
    n_var = sum(len(rows) for rows in options)
    c = np.zeros(n_var)
    loads = np.zeros((capacity.size, n_var))
    a_eq = np.zeros((len(options), n_var))
    col = 0
    for i, rows in enumerate(options):
        for (_, _, u, row) in rows:
            c[col] = -u
            loads[:, col] = row
            a_eq[i, col] = 1.0
            col += 1
    res = linprog(c, A_ub=loads, b_ub=capacity, A_eq=a_eq,
                  b_eq=np.ones(len(options)), bounds=(0.0, 1.0), method="highs")
    if not res.success:
        raise OracleError(f"LP solve failed: {res.message}")
    return float(-res.fun)


def _storable_subsets(scenario: Scenario, cache_id: int):
    """All version subsets fitting one cache's budget."""
    cat = scenario.catalog
    budget = scenario.topology.cache(cache_id).storage_mb
    storable = [v.version_id for v in cat.versions if v.file_size_mb > 0]
    subsets = []
    for r in range(len(storable) + 1):
        for combo in itertools.combinations(storable, r):
            if sum(cat.size(v) for v in combo) <= budget + 1e-9:
                subsets.append(combo)
    return subsets


@dataclass
class CaveCopOracleResult:
    best_placement: Placement
    best_z: dict
    best_utility: float


def brute_force_cavecop(instance: SmallInstance) -> CaveCopOracleResult:
    """Global integer optimum over placements and selections."""
    scenario = instance.scenario
    root = scenario.topology.root_id
    free_caches = [c.cache_id for c in scenario.topology.caches
                   if not math.isinf(c.storage_mb)]
    per_cache = [_storable_subsets(scenario, c) for c in free_caches]

    best = None
    for combo in itertools.product(*per_cache) if free_caches else [()]:
        placement = Placement.from_stored(
            scenario, dict(zip(free_caches, combo)))
        result = brute_force_cave_integer(instance, placement)
        if best is None or result[1] > best[2]:
            best = (placement, result[0], result[1])
    placement, z, value = best
    return CaveCopOracleResult(placement, z, float(value))


def brute_force_cave_integer(instance: SmallInstance, placement: Placement):
    """Integer optimum only (no LP), for the inner placement loop."""
    options, capacity = _user_options(instance.scenario, placement)
    return _search_integer(instance.scenario, options, capacity)


def _search_integer(scenario: Scenario, options, capacity):
    """Depth-first enumeration; partial loads only grow, so prune early."""
    user_ids = [p.user_id for p in scenario.users]
    best_utility = -np.inf
    best_choice: list[int] = []

    def search(depth, load, value, picked):
        nonlocal best_utility, best_choice
        if depth == len(options):
            if value > best_utility:
                best_utility = value
                best_choice = picked.copy()
            return
        for idx, (_, _, u, row) in enumerate(options[depth]):
            new_load = load + row
            if (new_load > capacity + 1e-9).any():
                continue
            picked.append(idx)
            search(depth + 1, new_load, value + u, picked)
            picked.pop()

    search(0, np.zeros(capacity.size), 0.0, [])
    if not best_choice and options:
        raise OracleError("no feasible assignment despite the null fallback")
    best_z = {user_ids[i]: (options[i][k][0], options[i][k][1])
              for i, k in enumerate(best_choice)}
    return best_z, float(best_utility)


def fractional_knapsack_oracle(items, budget: float) -> float:
    """Exact fractional knapsack value by enumerating 0/1 subsets plus one
    fractional completion. Checks the greedy solver; keep items <= 12."""
    if len(items) > 12:
        raise OracleError("oracle enumerates subsets; use at most 12 items")
    if budget < 0:
        raise OracleError("budget must be nonnegative")
    if not items:
        return 0.0
    values = np.array([v for v, _ in items], dtype=float)
    weights = np.array([w for _, w in items], dtype=float)
    if (weights <= 0).any():
        raise OracleError("item weights must be positive")
    n = len(items)
    masks = (np.arange(2 ** n)[:, None] >> np.arange(n)) & 1
    subset_w = masks @ weights
    subset_v = masks @ values
    remaining = budget - subset_w
    feasible = remaining >= -1e-12
    take = np.minimum(1.0, np.maximum(0.0, remaining[:, None]) / weights[None, :])
    completion = np.where(masks == 0, values[None, :] * take, 0.0).max(axis=1)
    totals = np.where(feasible, subset_v + completion, -np.inf)
    return float(totals.max())


@dataclass
class Violation:
    constraint: str
    subject: str
    slack: float  # negative: violated by |slack|


def _as_z_dict(z) -> dict:
    """Accept a Selection, an AveragedSelection, or a raw (s,c,v)->value map."""
    if hasattr(z, "zbar"):
        return dict(z.zbar)
    if hasattr(z, "chosen"):
        return {(s, c, v): 1.0 for s, (c, v) in z.chosen.items()}
    return dict(z)


def feasibility_check(scenario: Scenario, z, placement: Placement,
                      abs_tol: float = 1e-6,
                      link_rel_tol: float = 0.0) -> list[Violation]:
    """Slack report for the storage, selection, coupling, and capacity
    constraints; only violated constraints are returned."""
    zmap = _as_z_dict(z)
    cat, topo = scenario.catalog, scenario.topology
    out: list[Violation] = []

    used = {c.cache_id: 0.0 for c in topo.caches}
    for cache_id in used:
        used[cache_id] = sum(cat.size(v) for v in placement.stored_versions(cache_id))
    for cache in topo.caches:
        if math.isinf(cache.storage_mb):
            continue
        slack = cache.storage_mb - used[cache.cache_id]
        if slack < -abs_tol:
            out.append(Violation("storage", f"cache {cache.cache_id}", slack))

    per_user = {p.user_id: 0.0 for p in scenario.users}
    for (s, _, _), val in zmap.items():
        per_user[s] += val
    for user_id, total in per_user.items():
        if abs(total - 1.0) > abs_tol:
            out.append(Violation("one-hot", f"user {user_id}", -abs(total - 1.0)))

    for (s, c, v), val in zmap.items():
        p = 1.0 if placement.stores(c, v) else 0.0
        slack = p - val
        if slack < -abs_tol:
            out.append(Violation("stored-coupling", f"({s}, {c}, {v})", slack))

    loads = {l.link_id: 0.0 for l in topo.links}
    for (s, c, v), val in zmap.items():
        rate = cat.bitrate(v)
        if rate == 0.0 or val == 0.0:
            continue
        for l in route_links(topo, s, c):
            loads[l] += rate * val
    for link in topo.links:
        limit = link.capacity_mbps * (1.0 + link_rel_tol) + abs_tol
        if loads[link.link_id] > limit:
            out.append(Violation("capacity", f"link {link.link_id}",
                                 link.capacity_mbps - loads[link.link_id]))
    return out


def cop_lp_value(instance: SmallInstance) -> float:
    """LP optimum of the joint relaxed selection-and-placement problem."""
    scenario = instance.scenario
    topo, cat = scenario.topology, scenario.catalog
    root = topo.root_id
    link_ids = sorted(l.link_id for l in topo.links)
    link_index = {l: i for i, l in enumerate(link_ids)}
    capacity = np.empty(len(link_ids))
    for l in topo.links:
        capacity[link_index[l.link_id]] = l.capacity_mbps

    cache_ids = sorted(c.cache_id for c in topo.caches)
    free_caches = [c for c in cache_ids if not math.isinf(topo.cache(c).storage_mb)]
    storable = [v.version_id for v in cat.versions if v.file_size_mb > 0]
    p_index = {(c, v): i for i, (c, v) in
               enumerate((c, v) for c in free_caches for v in storable)}

    z_cols = []  # (user, cache, version, util, load_row)
    for profile in scenario.users:
        for cache_id in cache_ids:
            for version_id in sorted(cat.interest_set(profile.interest_video)):
                rate = cat.bitrate(version_id)
                load = np.zeros(len(link_ids))
                for l in route_links(topo, profile.user_id, cache_id):
                    load[link_index[l]] += rate
                z_cols.append((profile.user_id, cache_id, version_id,
                               utility(profile, rate), load))

    n_z = len(z_cols)
    n_p = len(p_index)
    n_var = n_z + n_p
    c_obj = np.zeros(n_var)
    rows_ub, b_ub = [], []

    for j, (_, _, _, u, _) in enumerate(z_cols):
        c_obj[j] = -u

    # link capacities over z'
    for li in range(len(link_ids)):
        row = np.zeros(n_var)
        for j, (_, _, _, _, load) in enumerate(z_cols):
            row[j] = load[li]
        rows_ub.append(row)
        b_ub.append(capacity[li])

    # z' <= p' coupling for storable versions on budgeted caches;
    # the null version is free to hold anywhere (zero size)
    for j, (_, cache_id, version_id, _, _) in enumerate(z_cols):
        if cache_id == root or version_id not in storable:
            continue
        row = np.zeros(n_var)
        row[j] = 1.0
        row[n_z + p_index[(cache_id, version_id)]] = -1.0
        rows_ub.append(row)
        b_ub.append(0.0)

    # storage budgets over p'
    for cache_id in free_caches:
        row = np.zeros(n_var)
        for v in storable:
            row[n_z + p_index[(cache_id, v)]] = cat.size(v)
        rows_ub.append(row)
        b_ub.append(topo.cache(cache_id).storage_mb)

    a_eq = np.zeros((len(scenario.users), n_var))
    for i, profile in enumerate(scenario.users):
        for j, (user_id, _, _, _, _) in enumerate(z_cols):
            if user_id == profile.user_id:
                a_eq[i, j] = 1.0

    res = linprog(c_obj, A_ub=np.array(rows_ub), b_ub=np.array(b_ub),
                  A_eq=a_eq, b_eq=np.ones(len(scenario.users)),
                  bounds=(0.0, 1.0), method="highs")
    if not res.success:
        raise OracleError(f"LP solve failed: {res.message}")
    return float(-res.fun)
