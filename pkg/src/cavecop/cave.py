"""Cache-version selection by dual decomposition.

Each round, every user picks the (cache, version) pair maximizing
utility minus the priced traffic of its route; every link then nudges its
price along the capacity subgradient with a diminishing step. Prices are
kept nonnegative by projection. A weighted average of the one-hot
selections recovers a near-optimal fractional solution.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .candidates import CandidateSpace
from .model import Catalog, Scenario, Topology, UserProfile, route_links, utility
from .placement import Placement

SCORE_TOL = 1e-9


@dataclass(frozen=True)
class StepSchedule:
    """h_t = h0 / (1 + t) ** gamma; diverging sum, vanishing steps."""

    h0: float = 0.2
    gamma: float = 0.5

    def __post_init__(self):
        if self.h0 <= 0:
            raise ValueError("h0 must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1] so the step sum diverges")

    def step(self, t: int) -> float:
        return self.h0 / (1.0 + t) ** self.gamma


@dataclass
class CaveDualState:
    """Link prices (utility per Mbps) and the iteration counter."""

    lam: np.ndarray
    link_ids: tuple[int, ...]
    iteration: int = 0
    schedule: StepSchedule = field(default_factory=StepSchedule)

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        self._col = {l: i for i, l in enumerate(self.link_ids)}

    def price(self, link_id: int) -> float:
        return float(self.lam[self._col[link_id]])

    def prices(self) -> dict[int, float]:
        return {l: float(self.lam[i]) for i, l in enumerate(self.link_ids)}

    @classmethod
    def initial(cls, topology: Topology,
                schedule: StepSchedule | None = None) -> "CaveDualState":
        link_ids = tuple(sorted(l.link_id for l in topology.links))
        return cls(np.zeros(len(link_ids)), link_ids, 0, schedule or StepSchedule())


@dataclass
class Selection:
    """One (cache, version) pair per user: the one-hot selection round."""

    chosen: dict[int, tuple[int, int]]

    def pair(self, user_id: int) -> tuple[int, int]:
        return self.chosen[user_id]


@dataclass
class AveragedSelection:
    """Step-weighted average of one-hot selections; sums to 1 per user."""

    zbar: dict[tuple[int, int, int], float]
    window_weight: float


def selection_score(profile: UserProfile, version_id: int, cache_id: int,
                    price_of, topology: Topology, catalog: Catalog) -> float:
    """Utility minus priced route traffic for one candidate pair."""
    rate = catalog.bitrate(version_id)
    route_price = sum(price_of(l) for l in route_links(topology, profile.user_id, cache_id))
    return utility(profile, rate) - rate * route_price


def cave_user_select(profile: UserProfile, placement: Placement,
                     dual: CaveDualState, topology: Topology,
                     catalog: Catalog) -> tuple[int, int]:
    """Best stored (cache, version) for one user at the current prices.

    Ties within 1e-9 go to the lowest cache id, then lowest version id.
    """
    candidates = []
    for cache_id in sorted(c.cache_id for c in topology.caches):
        for version_id in sorted(catalog.interest_set(profile.interest_video)):
            if not placement.stores(cache_id, version_id):
                continue
            score = selection_score(profile, version_id, cache_id,
                                    dual.price, topology, catalog)
            candidates.append((score, cache_id, version_id))
    if not candidates:
        raise ValueError("no stored candidate; the root must store the null version")
    best = max(score for score, _, _ in candidates)
    for score, cache_id, version_id in candidates:
        if score >= best - SCORE_TOL:
            return cache_id, version_id
    raise AssertionError("unreachable")


def selection_loads(selection: Selection, topology: Topology,
                    catalog: Catalog) -> dict[int, float]:
    """Traffic per link id under a one-hot selection."""
    loads = {l.link_id: 0.0 for l in topology.links}
    for user_id, (cache_id, version_id) in selection.chosen.items():
        rate = catalog.bitrate(version_id)
        if rate == 0.0:
            continue
        for l in route_links(topology, user_id, cache_id):
            loads[l] += rate
    return loads


def cave_link_update(dual: CaveDualState, selection: Selection,
                     topology: Topology, catalog: Catalog) -> CaveDualState:
    """One synchronous price round: lam <- [lam + h_t (load - R)]+."""
    h = dual.schedule.step(dual.iteration)
    loads = selection_loads(selection, topology, catalog)
    capacity = {l.link_id: l.capacity_mbps for l in topology.links}
    lam = np.array([max(0.0, dual.price(l) + h * (loads[l] - capacity[l]))
                    for l in dual.link_ids])
    return CaveDualState(lam, dual.link_ids, dual.iteration + 1, dual.schedule)


def cave_dual_value(dual: CaveDualState, placement: Placement,
                    scenario: Scenario) -> float:
    """D(lambda): per-user max scores plus the priced capacity term."""
    topo, cat = scenario.topology, scenario.catalog
    total = 0.0
    for profile in scenario.users:
        best = -np.inf
        for cache_id in sorted(c.cache_id for c in topo.caches):
            for version_id in cat.interest_set(profile.interest_video):
                if placement.stores(cache_id, version_id):
                    best = max(best, selection_score(profile, version_id, cache_id,
                                                     dual.price, topo, cat))
        total += best
    total += sum(dual.price(l.link_id) * l.capacity_mbps for l in topo.links)
    return total


def cave_average(history, window: int) -> AveragedSelection:
    """Step-weighted average of the most recent `window` selections."""
    if window == 0:
        raise ValueError("window must be positive")
    if window > len(history):
        raise ValueError("window exceeds history length")
    zbar: dict[tuple[int, int, int], float] = {}
    total_h = 0.0
    for selection, h in history[-window:]:
        total_h += h
        for user_id, (cache_id, version_id) in selection.chosen.items():
            key = (user_id, cache_id, version_id)
            zbar[key] = zbar.get(key, 0.0) + h
    if total_h <= 0:
        raise ValueError("window has zero total step weight")
    return AveragedSelection({k: w / total_h for k, w in zbar.items()}, total_h)


@dataclass
class CaveTraceRow:
    iteration: int
    dual_value: float
    total_utility: float
    max_link_overload: float


@dataclass
class CaveRunResult:
    dual: CaveDualState
    averaged: AveragedSelection
    trace: list[CaveTraceRow]
    final_selection: Selection
    space: CandidateSpace


def cave_run(scenario: Scenario, placement: Placement, iterations: int,
             schedule: StepSchedule | None = None, average_window: int = 200,
             space: CandidateSpace | None = None) -> CaveRunResult:
    """Iterate the selection and price rounds for a fixed placement."""
    if iterations < 1:
        raise ValueError("need at least one iteration")
    space = space or CandidateSpace.from_scenario(scenario)
    schedule = schedule or StepSchedule()
    feasible = space.placement_mask(placement)
    masked_util = np.where(feasible, space.util, -np.inf)

    lam = np.zeros(space.n_links)
    trace: list[CaveTraceRow] = []
    window = min(average_window, iterations)
    kept: list[tuple[np.ndarray, float]] = []
    chosen = None
    for t in range(iterations):
        scores = masked_util - space.rate * space.route_prices(lam)
        chosen, best = space.first_choice(scores)
        loads = space.loads(chosen)
        h = schedule.step(t)
        trace.append(CaveTraceRow(
            iteration=t,
            dual_value=float(best.sum() + lam @ space.capacity),
            total_utility=float(space.util[chosen].sum()),
            max_link_overload=float(max(0.0, (loads - space.capacity).max())),
        ))
        kept.append((chosen, h))
        if len(kept) > window:
            kept.pop(0)
        lam = np.maximum(0.0, lam + h * (loads - space.capacity))

    weights = np.zeros(space.n_candidates)
    total_h = 0.0
    for sel, h in kept:
        np.add.at(weights, sel, h)
        total_h += h
    zbar = {}
    for k in np.flatnonzero(weights):
        cache_id, version_id = space.as_pair(k)
        zbar[(space.user_ids[space.cand_user[k]], cache_id, version_id)] = \
            weights[k] / total_h

    dual = CaveDualState(lam, space.link_ids, iterations, schedule)
    return CaveRunResult(
        dual=dual,
        averaged=AveragedSelection(zbar, total_h),
        trace=trace,
        final_selection=Selection(space.selection_dict(chosen)),
        space=space,
    )
