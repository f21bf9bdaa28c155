"""Two-timescale policy simulator with fluid link sharing.

Each 0.1 s tick: users select, links reprice, traffic is rationed
proportionally on overloaded links with bottleneck-min composition, and
playback buffers advance. Placement recomputation runs on pseudo-state
every couple of ticks and is applied once, part-way through the run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .candidates import CandidateSpace
from .cave import Selection, StepSchedule, selection_loads
from .cop import CopEngine, round_placement
from .model import Catalog, Scenario, Topology, UserProfile, route_links, utility
from .placement import Placement


class PolicyKind(Enum):
    CAVE_COP = "cavecop"
    CAVE_CAV = "cavecav"
    GREEDY_COP = "greedycop"


# Simulation pricing wants a big first step (choke the cold-start rush
# within a tick or two) and then a fast decay so prices park; the generic
# solver default is tuned for long offline runs instead.
DEFAULT_SIM_SCHEDULE = StepSchedule(h0=0.08, gamma=1.0)


@dataclass
class FlowState:
    """Per-user playback accounting; buffer_mb holds received, unplayed bits."""

    buffer_mb: float = 0.0
    current_selection: tuple[int, int] | None = None
    cumulative_stall_s: float = 0.0
    cumulative_utility: float = 0.0


@dataclass
class MetricsRow:
    tick: int
    time_s: float
    policy: str
    total_utility: float
    pct_stall: float


@dataclass
class PolicySummary:
    policy: str
    mean_total_utility: float
    mean_pct_stall: float


def link_loads(selection: Selection, topology: Topology,
               catalog: Catalog) -> dict[int, float]:
    """Traffic per link id under the tick's selections."""
    return selection_loads(selection, topology, catalog)


def delivered_rates(loads: dict[int, float], selection: Selection,
                    topology: Topology, catalog: Catalog) -> dict[int, float]:
    """Per-user goodput: the selected rate scaled by the route bottleneck."""
    capacity = {l.link_id: l.capacity_mbps for l in topology.links}
    rates = {}
    for user_id, (cache_id, version_id) in selection.chosen.items():
        rate = catalog.bitrate(version_id)
        factor = 1.0
        for l in route_links(topology, user_id, cache_id):
            if loads[l] > 0:
                factor = min(factor, min(1.0, capacity[l] / loads[l]))
        rates[user_id] = rate * factor
    return rates


def step_playback(flow: FlowState, goodput_mbps: float, tick_seconds: float,
                  profile: UserProfile, bitrate_mbps: float) -> FlowState:
    """Advance one user's playback by one tick.

    The tick's utility blends the selected version's utility and the stall
    utility by the fraction of the tick actually played.
    """
    if goodput_mbps < 0:
        raise ValueError("goodput must be nonnegative")
    delivered = goodput_mbps * tick_seconds
    available = flow.buffer_mb + delivered
    need = bitrate_mbps * tick_seconds
    if need > 0:
        consumed = min(need, available)
        stall_frac = 1.0 - consumed / need
    else:
        consumed = 0.0
        stall_frac = 1.0
    tick_utility = ((1.0 - stall_frac) * utility(profile, bitrate_mbps)
                    + stall_frac * utility(profile, 0.0))
    return FlowState(
        buffer_mb=available - consumed,
        current_selection=flow.current_selection,
        cumulative_stall_s=flow.cumulative_stall_s + stall_frac * tick_seconds,
        cumulative_utility=flow.cumulative_utility + tick_utility,
    )


def cav_placement(scenario: Scenario) -> Placement:
    """Cache-all-versions baseline: most popular videos, whole ladders,
    greedily per cache until the budget refuses the next video."""
    placement = Placement.root_only(scenario)
    cat = scenario.catalog
    for cache in scenario.topology.caches:
        if math.isinf(cache.storage_mb):
            continue
        budget = cache.storage_mb
        row = placement.row_index(cache.cache_id)
        for video in range(cat.n_videos):
            versions = cat.versions_of(video)
            size = sum(cat.size(v) for v in versions)
            if size > budget + 1e-9:
                break
            for v in versions:
                placement.matrix[row, v] = True
            budget -= size
    return placement


class _GreedyChooser:
    """Cutoff-rate version from the nearest cache that stores it."""

    def __init__(self, space: CandidateSpace):
        scenario = space.scenario
        topo, cat = scenario.topology, scenario.catalog
        n_users, n_caches = space.n_users, len(space.cache_ids)
        self.rank_cand = np.empty((n_users, n_caches), dtype=np.int64)
        for ui, profile in enumerate(scenario.users):
            versions = cat.versions_of(profile.interest_video)
            cutoff = next(v for v in versions
                          if cat.bitrate(v) == profile.cutoff_mbps)
            order = sorted(space.cache_ids,
                           key=lambda c: (len(route_links(topo, profile.user_id, c)), c))
            for rank, cache_id in enumerate(order):
                self.rank_cand[ui, rank] = space.candidate_of(
                    profile.user_id, cache_id, cutoff)

    def choose(self, space: CandidateSpace, placement: Placement) -> np.ndarray:
        stored = placement.matrix[space.cand_cache[self.rank_cand],
                                  space.cand_version[self.rank_cand]]
        first = stored.argmax(axis=1)  # root stores everything, so one exists
        return self.rank_cand[np.arange(len(first)), first]


def _bottleneck_factors(space: CandidateSpace, chosen: np.ndarray,
                        loads: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        ratio = np.minimum(1.0, np.where(loads > 0, space.capacity / loads, np.inf))
    on_route = space.route_matrix[chosen] > 0
    return np.where(on_route, ratio[None, :], 1.0).min(axis=1)


def run_policy(scenario: Scenario, policy: PolicyKind,
               cave_schedule: StepSchedule | None = None,
               cop_schedule: StepSchedule | None = None,
               space: CandidateSpace | None = None,
               price_log: list | None = None,
               restart_cave_at_apply: bool = True,
               utilization_target: float = 0.8) -> list[MetricsRow]:
    """Simulate one policy over the scenario's full tick schedule.

    Applying a placement changes the selection problem, so by default the
    price schedule restarts there (prices themselves stay warm). Prices
    steer load toward `utilization_target` of each link's capacity; the
    margin absorbs the load granularity of one-hot selections, standing in
    for the queueing slack of a packet network. Transport itself always
    enforces the physical capacities.
    """
    if not isinstance(policy, PolicyKind):
        policy = PolicyKind(policy)
    space = space or CandidateSpace.from_scenario(scenario)
    dt = scenario.tick_seconds
    runs_cave = policy in (PolicyKind.CAVE_COP, PolicyKind.CAVE_CAV)
    runs_cop = policy in (PolicyKind.CAVE_COP, PolicyKind.GREEDY_COP)

    placement = (cav_placement(scenario) if policy is PolicyKind.CAVE_CAV
                 else Placement.root_only(scenario))
    feasible = space.placement_mask(placement)
    masked_util = np.where(feasible, space.util, -np.inf)

    cave_schedule = cave_schedule or DEFAULT_SIM_SCHEDULE
    cop_schedule = cop_schedule or DEFAULT_SIM_SCHEDULE
    lam = np.zeros(space.n_links)
    cave_iter = 0
    if not 0.0 < utilization_target <= 1.0:
        raise ValueError("utilization_target must be in (0, 1]")
    priced_capacity = utilization_target * space.capacity
    cop = (CopEngine(scenario, cop_schedule, space, priced_capacity)
           if runs_cop else None)
    greedy = _GreedyChooser(space) if policy is PolicyKind.GREEDY_COP else None

    stall_util = np.array([p.stall_utility for p in scenario.users])
    buffers = np.zeros(space.n_users)
    cum_stall = np.zeros(space.n_users)
    rows: list[MetricsRow] = []

    for tick in range(scenario.duration_ticks):
        if runs_cop and tick == scenario.placement_apply_tick:
            placement = round_placement(cop.pseudo, scenario)
            feasible = space.placement_mask(placement)
            masked_util = np.where(feasible, space.util, -np.inf)
            if restart_cave_at_apply and runs_cave:
                # the pseudo problem already priced the post-placement
                # congestion pattern; hand its prices over and restart steps
                cave_iter = 0
                lam = cop.lam.copy()

        if runs_cave:
            scores = masked_util - space.rate * space.route_prices(lam)
            chosen, _ = space.first_choice(scores)
        else:
            chosen = greedy.choose(space, placement)

        loads = space.loads(chosen)
        if runs_cave:
            h = cave_schedule.step(cave_iter)
            cave_iter += 1
            lam = np.maximum(0.0, lam + h * (loads - priced_capacity))
        if price_log is not None:
            price_log.append(lam.copy())

        if runs_cop and tick % scenario.cop_period_ticks == 0:
            if policy is PolicyKind.CAVE_COP:
                cop_chosen, _ = cop.select()
            else:
                cop_chosen = chosen
            cop.round(cop_chosen)

        # fluid transport and playback
        bitrate = space.rate[chosen]
        goodput = bitrate * _bottleneck_factors(space, chosen, loads)
        delivered = goodput * dt
        available = buffers + delivered
        need = bitrate * dt
        with np.errstate(invalid="ignore"):
            consumed = np.minimum(need, available)
            stall = np.where(need > 0, 1.0 - consumed / np.maximum(need, 1e-300), 1.0)
        buffers = available - consumed
        cum_stall += stall * dt
        tick_util = (1.0 - stall) * space.util[chosen] + stall * stall_util

        elapsed = (tick + 1) * dt
        rows.append(MetricsRow(
            tick=tick,
            time_s=elapsed,
            policy=policy.value,
            total_utility=float(tick_util.sum()),
            pct_stall=float(100.0 * (cum_stall / elapsed).mean()),
        ))
    return rows


def compare_policies(scenario: Scenario,
                     cave_schedule: StepSchedule | None = None,
                     cop_schedule: StepSchedule | None = None
                     ) -> dict[str, PolicySummary]:
    """All three policies on the identical scenario; summaries cover the
    final quarter of the run."""
    space = CandidateSpace.from_scenario(scenario)
    out = {}
    tail = max(1, scenario.duration_ticks // 4)
    for policy in PolicyKind:
        rows = run_policy(scenario, policy, cave_schedule, cop_schedule, space)
        last = rows[-tail:]
        out[policy.value] = PolicySummary(
            policy=policy.value,
            mean_total_utility=float(np.mean([r.total_utility for r in last])),
            mean_pct_stall=float(np.mean([r.pct_stall for r in last])),
        )
    return out
