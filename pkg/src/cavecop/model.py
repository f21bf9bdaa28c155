"""Domain model: catalog, topology, user profiles, and scenario generation.

All rates are in Mbps, all file sizes in megabits, all times in seconds.
Model objects are immutable after construction and safe to share between
threads.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

SCENARIO_FORMAT = 1

DEVICE_CLASSES = ("smartphone", "laptop", "tv")

# Per-class utility scale and cutoff resolution (distance from the top of
# the version ladder: tv = top, laptop = one below, smartphone = two below).
DEVICE_ALPHA = {"smartphone": 20.0, "laptop": 40.0, "tv": 60.0}
DEVICE_CUTOFF_OFFSET = {"smartphone": 2, "laptop": 1, "tv": 0}

# H.264-style ladder, Mbps per resolution step (360p .. 2160p).
DEFAULT_BITRATES_MBPS = (1.0, 2.5, 4.5, 9.0, 18.0)

DEFAULT_STALL_UTILITY = -100.0


class ModelError(ValueError):
    """Raised for malformed scenario parameters or lookups."""


@dataclass(frozen=True)
class VideoVersion:
    """One encoding of a video; the null version has zero rate and size."""

    video_id: int  # -1 for the null version
    version_id: int
    bitrate_mbps: float
    file_size_mb: float  # megabits: bitrate * duration


@dataclass(frozen=True)
class Catalog:
    versions: tuple[VideoVersion, ...]  # indexed by version_id
    n_videos: int
    versions_per_video: int
    null_version_id: int
    duration_seconds: float

    def bitrate(self, version_id: int) -> float:
        return self.versions[version_id].bitrate_mbps

    def size(self, version_id: int) -> float:
        return self.versions[version_id].file_size_mb

    def versions_of(self, video_id: int) -> tuple[int, ...]:
        """Version ids of one video, ascending bitrate."""
        if not 0 <= video_id < self.n_videos:
            raise ModelError(f"unknown video {video_id}")
        base = 1 + video_id * self.versions_per_video
        return tuple(range(base, base + self.versions_per_video))

    def interest_set(self, video_id: int) -> tuple[int, ...]:
        """All versions of the video plus the null version."""
        return self.versions_of(video_id) + (self.null_version_id,)


@dataclass(frozen=True)
class CacheNode:
    cache_id: int
    tier: str  # root | tertiary | secondary | edge
    storage_mb: float  # megabits; math.inf for the root


@dataclass(frozen=True)
class Link:
    link_id: int
    capacity_mbps: float


@dataclass(frozen=True)
class Topology:
    caches: tuple[CacheNode, ...]
    users: tuple[int, ...]
    links: tuple[Link, ...]
    routes: dict  # (user_id, cache_id) -> tuple of link ids, cache -> user order

    @property
    def root_id(self) -> int:
        for cache in self.caches:
            if math.isinf(cache.storage_mb):
                return cache.cache_id
        raise ModelError("topology has no infinite-storage root cache")

    def cache(self, cache_id: int) -> CacheNode:
        for c in self.caches:
            if c.cache_id == cache_id:
                return c
        raise ModelError(f"unknown cache {cache_id}")


@dataclass(frozen=True)
class UserProfile:
    user_id: int
    device_class: str
    alpha: float
    cutoff_mbps: float
    stall_utility: float
    interest_video: int


@dataclass(frozen=True)
class Scenario:
    topology: Topology
    catalog: Catalog
    users: tuple[UserProfile, ...]
    rng_seed: int
    duration_ticks: int = 400
    tick_seconds: float = 0.1
    cop_period_ticks: int = 2
    placement_apply_tick: int = 200


def utility(profile: UserProfile, bitrate_mbps: float) -> float:
    """Perceived utility of streaming at `bitrate_mbps`.

    Zero bitrate (the null version / a full stall) earns the profile's
    stall utility; otherwise alpha * ln(min(rate, cutoff)). Non-decreasing
    and concave on (0, inf).
    """
    if bitrate_mbps < 0:
        raise ModelError("bitrate must be nonnegative")
    if bitrate_mbps == 0.0:
        return profile.stall_utility
    return profile.alpha * math.log(min(bitrate_mbps, profile.cutoff_mbps))


def route_links(topology: Topology, user_id: int, cache_id: int) -> tuple[int, ...]:
    """The unique stored route between a user and a cache."""
    try:
        return topology.routes[(user_id, cache_id)]
    except KeyError:
        raise ModelError(f"no route for user {user_id} and cache {cache_id}") from None


def zipf_probabilities(n: int, shape: float = 1.0) -> np.ndarray:
    """P(rank k) proportional to 1/k**shape for k = 1..n."""
    if n <= 0:
        raise ModelError("need at least one item")
    weights = 1.0 / np.arange(1, n + 1, dtype=float) ** shape
    return weights / weights.sum()


@dataclass(frozen=True)
class ScenarioParams:
    """Knobs for the default three-tier scenario generator."""

    n_videos: int = 200
    versions_per_video: int = 5
    bitrates_mbps: tuple[float, ...] = DEFAULT_BITRATES_MBPS
    video_duration_s: float = 3600.0
    zipf_shape: float = 1.0
    # tree fan-outs below the root: tertiary, secondary, edge
    fanouts: tuple[int, int, int] = (2, 2, 2)
    users_per_edge: int = 20
    access_mbps: float = 25.0
    backbone_mbps: float = 100.0
    # storage budgets as multiples of one video's total size (all versions)
    storage_multiples: tuple[float, float, float] = (4.0, 2.0, 1.0)  # tertiary, secondary, edge
    stall_utility: float = DEFAULT_STALL_UTILITY
    # relative spread of the per-user utility scale around its class value;
    # exact per-class constants make same-class users flip selections in
    # lockstep, a degenerate symmetry real device populations do not have
    alpha_jitter: float = 0.05
    duration_ticks: int = 400
    tick_seconds: float = 0.1
    cop_period_ticks: int = 2
    placement_apply_tick: int = 200


def _check_params(params: ScenarioParams) -> None:
    if params.n_videos <= 0 or params.versions_per_video <= 0:
        raise ModelError("video and version counts must be positive")
    if any(f <= 0 for f in params.fanouts) or params.users_per_edge <= 0:
        raise ModelError("fan-outs and users per edge must be positive")
    if len(params.bitrates_mbps) != params.versions_per_video:
        raise ModelError("bitrate table length must match versions_per_video")
    if any(b <= 0 for b in params.bitrates_mbps):
        raise ModelError("bitrates must be positive")
    if list(params.bitrates_mbps) != sorted(set(params.bitrates_mbps)):
        raise ModelError("bitrates must be strictly increasing")
    if params.access_mbps <= 0 or params.backbone_mbps <= 0:
        raise ModelError("link capacities must be positive")
    if params.placement_apply_tick > params.duration_ticks:
        raise ModelError("placement_apply_tick must not exceed duration_ticks")
    if params.cop_period_ticks < 1:
        raise ModelError("cop_period_ticks must be >= 1")


def build_catalog(n_videos: int, versions_per_video: int,
                  bitrates_mbps: tuple[float, ...],
                  video_duration_s: float = 3600.0) -> Catalog:
    """Catalog with version id 0 reserved for the null version."""
    versions = [VideoVersion(-1, 0, 0.0, 0.0)]
    for video in range(n_videos):
        for j, rate in enumerate(bitrates_mbps):
            versions.append(VideoVersion(
                video_id=video,
                version_id=1 + video * versions_per_video + j,
                bitrate_mbps=rate,
                file_size_mb=rate * video_duration_s,
            ))
    return Catalog(
        versions=tuple(versions),
        n_videos=n_videos,
        versions_per_video=versions_per_video,
        null_version_id=0,
        duration_seconds=video_duration_s,
    )


def generate_scenario(params: ScenarioParams = ScenarioParams(), seed: int = 0) -> Scenario:
    """Deterministic scenario: tiered cache tree, Zipf interests, mixed devices.

    Default shape is root(1) -> tertiary(2) -> secondary(4) -> edge(8) with
    20 users per edge cache, per-user 25 Mbps access links and 100 Mbps
    links between caches. Each tree edge gets one link per direction so a
    route through a sibling subtree prices its uphill hops too.
    """
    _check_params(params)
    rng = np.random.default_rng(seed)
    catalog = build_catalog(params.n_videos, params.versions_per_video,
                            params.bitrates_mbps, params.video_duration_s)

    one_video_mb = sum(v * params.video_duration_s for v in params.bitrates_mbps)
    tier_budget = {
        "root": math.inf,
        "tertiary": params.storage_multiples[0] * one_video_mb,
        "secondary": params.storage_multiples[1] * one_video_mb,
        "edge": params.storage_multiples[2] * one_video_mb,
    }

    # caches, breadth first: root, tertiary, secondary, edge
    caches = [CacheNode(0, "root", tier_budget["root"])]
    parent: dict[int, int] = {}
    next_id = 1
    frontier = [0]
    for tier, fanout in zip(("tertiary", "secondary", "edge"), params.fanouts):
        new_frontier = []
        for node in frontier:
            for _ in range(fanout):
                caches.append(CacheNode(next_id, tier, tier_budget[tier]))
                parent[next_id] = node
                new_frontier.append(next_id)
                next_id += 1
        frontier = new_frontier
    edge_ids = frontier

    # one down and one up link per tree edge, then one access link per user
    links: list[Link] = []
    down_link: dict[tuple[int, int], int] = {}
    up_link: dict[tuple[int, int], int] = {}
    for child, par in sorted(parent.items()):
        down_link[(par, child)] = len(links)
        links.append(Link(len(links), params.backbone_mbps))
        up_link[(child, par)] = len(links)
        links.append(Link(len(links), params.backbone_mbps))

    users: list[int] = []
    access_link: dict[int, int] = {}
    user_edge: dict[int, int] = {}
    for edge_id in edge_ids:
        for _ in range(params.users_per_edge):
            uid = len(users)
            users.append(uid)
            user_edge[uid] = edge_id
            access_link[uid] = len(links)
            links.append(Link(len(links), params.access_mbps))

    def ancestors(node: int) -> list[int]:
        chain = [node]
        while chain[-1] in parent:
            chain.append(parent[chain[-1]])
        return chain

    # route from cache c down to user s: up-links from c to the common
    # ancestor, down-links to s's edge cache, then s's access link
    routes: dict[tuple[int, int], tuple[int, ...]] = {}
    for uid in users:
        edge_chain = ancestors(user_edge[uid])  # edge .. root
        depth = {node: i for i, node in enumerate(edge_chain)}
        for cache in caches:
            c = cache.cache_id
            hops: list[int] = []
            node = c
            while node not in depth:
                hops.append(up_link[(node, parent[node])])
                node = parent[node]
            down_path = edge_chain[:depth[node]]  # nodes strictly below the meet
            for child in down_path[::-1]:
                hops.append(down_link[(parent[child], child)])
            hops.append(access_link[uid])
            routes[(uid, c)] = tuple(hops)

    interest_p = zipf_probabilities(params.n_videos, params.zipf_shape)
    profiles = []
    top = params.versions_per_video - 1
    if not 0.0 <= params.alpha_jitter < 1.0:
        raise ModelError("alpha_jitter must be in [0, 1)")
    for uid in users:
        device = DEVICE_CLASSES[rng.integers(0, len(DEVICE_CLASSES))]
        cutoff_idx = max(0, top - DEVICE_CUTOFF_OFFSET[device])
        video = int(rng.choice(params.n_videos, p=interest_p))
        spread = params.alpha_jitter * rng.uniform(-1.0, 1.0)
        profiles.append(UserProfile(
            user_id=uid,
            device_class=device,
            alpha=DEVICE_ALPHA[device] * (1.0 + spread),
            cutoff_mbps=params.bitrates_mbps[cutoff_idx],
            stall_utility=params.stall_utility,
            interest_video=video,
        ))

    topology = Topology(
        caches=tuple(caches),
        users=tuple(users),
        links=tuple(links),
        routes=routes,
    )
    return Scenario(
        topology=topology,
        catalog=catalog,
        users=tuple(profiles),
        rng_seed=seed,
        duration_ticks=params.duration_ticks,
        tick_seconds=params.tick_seconds,
        cop_period_ticks=params.cop_period_ticks,
        placement_apply_tick=params.placement_apply_tick,
    )


def validate(scenario: Scenario) -> list[str]:
    """Check every structural invariant; violations are data, not errors."""
    problems: list[str] = []
    cat = scenario.catalog
    topo = scenario.topology

    for i, v in enumerate(cat.versions):
        if v.version_id != i:
            problems.append(f"version list index {i} holds version_id {v.version_id}")
    nulls = [v for v in cat.versions
             if v.bitrate_mbps == 0.0 and v.file_size_mb == 0.0]
    if len(nulls) != 1:
        problems.append(f"expected exactly one null version, found {len(nulls)}")
    null = cat.versions[cat.null_version_id]
    if null.bitrate_mbps != 0.0 or null.file_size_mb != 0.0:
        problems.append("null version must have zero bitrate and size")
    for v in cat.versions:
        if v.version_id == cat.null_version_id:
            continue
        if v.bitrate_mbps <= 0 or v.file_size_mb < 0:
            problems.append(f"version {v.version_id} has non-positive bitrate")
        expected = v.bitrate_mbps * cat.duration_seconds
        if not math.isclose(v.file_size_mb, expected, rel_tol=1e-9):
            problems.append(f"version {v.version_id} size {v.file_size_mb} != "
                            f"bitrate x duration {expected}")
    for video in range(cat.n_videos):
        rates = [cat.bitrate(v) for v in cat.versions_of(video)]
        if any(later <= earlier for later, earlier in zip(rates[1:], rates)):
            problems.append(f"video {video} bitrates not strictly increasing")

    roots = [c for c in topo.caches if math.isinf(c.storage_mb)]
    if len(roots) != 1:
        problems.append("missing root" if not roots else
                        f"expected one infinite-storage root, found {len(roots)}")
    link_ids = {l.link_id for l in topo.links}
    for s in topo.users:
        for c in topo.caches:
            route = topo.routes.get((s, c.cache_id))
            if route is None:
                problems.append(f"missing route user {s} -> cache {c.cache_id}")
            elif any(l not in link_ids for l in route):
                problems.append(f"route user {s} -> cache {c.cache_id} uses unknown link")

    version_rates = {v.bitrate_mbps for v in cat.versions if v.version_id != cat.null_version_id}
    positive_rates = sorted(version_rates)
    for profile in scenario.users:
        if profile.device_class not in DEVICE_CLASSES:
            problems.append(f"user {profile.user_id} has unknown device class")
        if profile.alpha <= 0:
            problems.append(f"user {profile.user_id} alpha must be positive")
        if profile.cutoff_mbps not in version_rates:
            problems.append(f"user {profile.user_id} cutoff {profile.cutoff_mbps} "
                            "matches no catalog version")
        if positive_rates:
            floor = profile.alpha * math.log(positive_rates[0])
            if profile.stall_utility >= floor:
                problems.append(f"user {profile.user_id} stall utility must stay "
                                "below every regular utility")
        if not 0 <= profile.interest_video < cat.n_videos:
            problems.append(f"user {profile.user_id} wants unknown video")

    if scenario.placement_apply_tick > scenario.duration_ticks:
        problems.append("placement_apply_tick exceeds duration_ticks")
    if scenario.cop_period_ticks < 1:
        problems.append("cop_period_ticks must be >= 1")
    return problems


# --- JSON round trip ------------------------------------------------------

def scenario_to_dict(scenario: Scenario) -> dict:
    topo = scenario.topology
    return {
        "format": SCENARIO_FORMAT,
        "seed": scenario.rng_seed,
        "topology": {
            "caches": [{"id": c.cache_id, "tier": c.tier,
                        "storage_mb": None if math.isinf(c.storage_mb) else c.storage_mb}
                       for c in topo.caches],
            "users": list(topo.users),
            "links": [{"id": l.link_id, "capacity_mbps": l.capacity_mbps}
                      for l in topo.links],
            "routes": [{"user": s, "cache": c, "links": list(route)}
                       for (s, c), route in sorted(topo.routes.items())],
        },
        "catalog": {
            "n_videos": scenario.catalog.n_videos,
            "versions_per_video": scenario.catalog.versions_per_video,
            "null_version_id": scenario.catalog.null_version_id,
            "duration_seconds": scenario.catalog.duration_seconds,
            "versions": [{"video": v.video_id, "id": v.version_id,
                          "bitrate_mbps": v.bitrate_mbps, "size_mb": v.file_size_mb}
                         for v in scenario.catalog.versions],
        },
        "users": [{"id": u.user_id, "device": u.device_class, "alpha": u.alpha,
                   "cutoff_mbps": u.cutoff_mbps, "stall_utility": u.stall_utility,
                   "video": u.interest_video}
                  for u in scenario.users],
        "schedule": {
            "duration_ticks": scenario.duration_ticks,
            "tick_seconds": scenario.tick_seconds,
            "cop_period_ticks": scenario.cop_period_ticks,
            "placement_apply_tick": scenario.placement_apply_tick,
        },
    }


def scenario_from_dict(doc: dict) -> Scenario:
    if doc.get("format") != SCENARIO_FORMAT:
        raise ModelError(f"unsupported scenario format {doc.get('format')!r}")
    topo_doc = doc["topology"]
    topology = Topology(
        caches=tuple(CacheNode(c["id"], c["tier"],
                               math.inf if c["storage_mb"] is None else c["storage_mb"])
                     for c in topo_doc["caches"]),
        users=tuple(topo_doc["users"]),
        links=tuple(Link(l["id"], l["capacity_mbps"]) for l in topo_doc["links"]),
        routes={(r["user"], r["cache"]): tuple(r["links"]) for r in topo_doc["routes"]},
    )
    cat_doc = doc["catalog"]
    catalog = Catalog(
        versions=tuple(VideoVersion(v["video"], v["id"], v["bitrate_mbps"], v["size_mb"])
                       for v in cat_doc["versions"]),
        n_videos=cat_doc["n_videos"],
        versions_per_video=cat_doc["versions_per_video"],
        null_version_id=cat_doc["null_version_id"],
        duration_seconds=cat_doc["duration_seconds"],
    )
    users = tuple(UserProfile(u["id"], u["device"], u["alpha"], u["cutoff_mbps"],
                              u["stall_utility"], u["video"])
                  for u in doc["users"])
    sched = doc["schedule"]
    return Scenario(
        topology=topology,
        catalog=catalog,
        users=users,
        rng_seed=doc["seed"],
        duration_ticks=sched["duration_ticks"],
        tick_seconds=sched["tick_seconds"],
        cop_period_ticks=sched["cop_period_ticks"],
        placement_apply_tick=sched["placement_apply_tick"],
    )


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))
