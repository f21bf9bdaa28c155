"""Content placement by dual decomposition over pseudo-variables.

Pseudo-selections z' and pseudo-placements p' evolve on the fast
timescale: users pick the pair maximizing utility minus priced traffic
minus the consistency price mu'; links reprice capacity; each cache
reprices consistency and refills its storage by a greedy fractional
knapsack on mu' mass per megabit. The real placement is the rounding of
p', applied rarely.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .candidates import CandidateSpace
from .cave import (SCORE_TOL, AveragedSelection, Selection, StepSchedule,
                   selection_loads)
from .model import Catalog, Scenario, Topology, UserProfile, route_links, utility
from .placement import Placement, PseudoPlacement


@dataclass
class CopDualState:
    """Link prices lambda' plus per-(user, cache, version) prices mu'.

    mu' is materialized only over each user's interest set (everything
    else stays at zero: its subgradient is -p' <= 0 under projection).
    """

    lam: np.ndarray
    mu: np.ndarray  # per candidate of `space`
    space: CandidateSpace
    iteration: int = 0
    schedule: StepSchedule = field(default_factory=StepSchedule)

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float)
        self._col = {l: i for i, l in enumerate(self.space.link_ids)}

    def price(self, link_id: int) -> float:
        return float(self.lam[self._col[link_id]])

    def mu_value(self, user_id: int, cache_id: int, version_id: int) -> float:
        return float(self.mu[self.space.candidate_of(user_id, cache_id, version_id)])

    def set_mu(self, user_id: int, cache_id: int, version_id: int, value: float):
        self.mu[self.space.candidate_of(user_id, cache_id, version_id)] = value

    @classmethod
    def initial(cls, space: CandidateSpace,
                schedule: StepSchedule | None = None) -> "CopDualState":
        return cls(np.zeros(space.n_links), np.zeros(space.n_candidates),
                   space, 0, schedule or StepSchedule())


def cop_user_select(profile: UserProfile, dual: CopDualState,
                    topology: Topology, catalog: Catalog) -> tuple[int, int]:
    """Best pseudo pair for one user; storage feasibility is not required here."""
    candidates = []
    for cache_id in sorted(c.cache_id for c in topology.caches):
        route_price = sum(dual.price(l)
                          for l in route_links(topology, profile.user_id, cache_id))
        for version_id in sorted(catalog.interest_set(profile.interest_video)):
            rate = catalog.bitrate(version_id)
            score = (utility(profile, rate) - rate * route_price
                     - dual.mu_value(profile.user_id, cache_id, version_id))
            candidates.append((score, cache_id, version_id))
    best = max(score for score, _, _ in candidates)
    for score, cache_id, version_id in candidates:
        if score >= best - SCORE_TOL:
            return cache_id, version_id
    raise AssertionError("unreachable")


def cop_link_update(dual: CopDualState, selection: Selection,
                    topology: Topology, catalog: Catalog) -> CopDualState:
    """lambda' <- [lambda' + h_t (pseudo load - R)]+ and advance the round."""
    h = dual.schedule.step(dual.iteration)
    loads = selection_loads(selection, topology, catalog)
    capacity = {l.link_id: l.capacity_mbps for l in topology.links}
    lam = np.array([max(0.0, dual.price(l) + h * (loads[l] - capacity[l]))
                    for l in dual.space.link_ids])
    return CopDualState(lam, dual.mu.copy(), dual.space,
                        dual.iteration + 1, dual.schedule)


def greedy_fractional_fill(values: np.ndarray, sizes: np.ndarray,
                           budget: float) -> np.ndarray:
    """Fractional knapsack by value density; at most one fractional item.

    Ties in density go to the lower index. Sizes must be positive.
    """
    values = np.asarray(values, dtype=float)
    sizes = np.asarray(sizes, dtype=float)
    if (sizes <= 0).any():
        raise ValueError("knapsack item sizes must be positive")
    order = np.lexsort((np.arange(values.size), -values / sizes))
    frac = np.zeros(values.size)
    remaining = budget
    for i in order:
        if remaining <= 0:
            break
        if sizes[i] <= remaining:
            frac[i] = 1.0
            remaining -= sizes[i]
        else:
            frac[i] = remaining / sizes[i]
            remaining = 0.0
    return frac


def _mu_sums(space: CandidateSpace, mu: np.ndarray, n_versions: int) -> np.ndarray:
    """Sum of mu' over users, per (cache, version) cell."""
    flat = space.cand_cache * n_versions + space.cand_version
    sums = np.bincount(flat, weights=mu, minlength=len(space.cache_ids) * n_versions)
    return sums.reshape(len(space.cache_ids), n_versions)


def _refill_cache(pseudo: PseudoPlacement, cache_index: int, values: np.ndarray,
                  catalog: Catalog, budget: float) -> None:
    """Recompute one cache's p' row; the null version is excluded (zero size)."""
    sizes = np.array([v.file_size_mb for v in catalog.versions])
    items = np.flatnonzero(sizes > 0)
    row = np.zeros(len(catalog.versions))
    if np.isinf(budget):
        row[items] = 1.0
    else:
        row[items] = greedy_fractional_fill(values[items], sizes[items], budget)
    pseudo.matrix[cache_index] = row


def cop_cache_update(cache_id: int, dual: CopDualState, selection: Selection,
                     pseudo: PseudoPlacement) -> tuple[CopDualState, PseudoPlacement]:
    """One cache's round: reprice consistency, then refill storage greedily.

    The round counter advances in cop_link_update, so every cache in a
    round shares the same step size.
    """
    space = dual.space
    scenario = space.scenario
    root = scenario.topology.root_id
    if cache_id == root:
        raise ValueError("the root placement is fixed; no update to run")
    h = dual.schedule.step(dual.iteration)
    ci = space.cache_ids.index(cache_id)

    mu = dual.mu.copy()
    mask = space.cand_cache == ci
    z = np.zeros(space.n_candidates)
    for user_id, (sel_cache, sel_version) in selection.chosen.items():
        if sel_cache == cache_id:
            z[space.candidate_of(user_id, sel_cache, sel_version)] = 1.0
    p_cand = space.pseudo_values(pseudo)
    mu[mask] = np.maximum(0.0, mu[mask] + h * (z[mask] - p_cand[mask]))

    new_dual = CopDualState(dual.lam.copy(), mu, space, dual.iteration, dual.schedule)
    new_pseudo = pseudo.copy()
    n_versions = len(scenario.catalog.versions)
    values = _mu_sums(space, mu, n_versions)[ci]
    budget = scenario.topology.cache(cache_id).storage_mb
    _refill_cache(new_pseudo, ci, values, scenario.catalog, budget)
    return new_dual, new_pseudo


def round_placement(pseudo: PseudoPlacement, scenario: Scenario) -> Placement:
    """Keep only whole copies: p = 1 iff p' >= 1 - 1e-9; root keeps everything."""
    matrix = pseudo.matrix >= 1.0 - 1e-9
    placement = Placement(matrix, pseudo.cache_ids)
    root_row = pseudo.cache_ids.index(scenario.topology.root_id)
    placement.matrix[root_row] = True
    return placement


@dataclass
class CopTraceRow:
    iteration: int
    dual_value: float
    total_utility: float
    max_link_overload: float


@dataclass
class CopRunResult:
    pseudo: PseudoPlacement
    placement: Placement
    trace: list[CopTraceRow]
    dual: CopDualState
    averaged: AveragedSelection
    averaged_utility: float
    final_selection: Selection
    space: CandidateSpace


class CopEngine:
    """Vectorized synchronous rounds of the three pseudo updates."""

    def __init__(self, scenario: Scenario, schedule: StepSchedule | None = None,
                 space: CandidateSpace | None = None,
                 priced_capacity: np.ndarray | None = None):
        self.space = space or CandidateSpace.from_scenario(scenario)
        self.scenario = scenario
        self.schedule = schedule or StepSchedule()
        self.priced_capacity = (self.space.capacity if priced_capacity is None
                                else np.asarray(priced_capacity, dtype=float))
        self.lam = np.zeros(self.space.n_links)
        self.mu = np.zeros(self.space.n_candidates)
        self.iteration = 0
        self.pseudo = PseudoPlacement.initial(scenario)
        self.n_versions = len(scenario.catalog.versions)
        self.sizes = np.array([v.file_size_mb for v in scenario.catalog.versions])
        self.items = np.flatnonzero(self.sizes > 0)
        self.root_index = self.pseudo.cache_ids.index(scenario.topology.root_id)
        self.budgets = [scenario.topology.cache(c).storage_mb
                        for c in self.pseudo.cache_ids]

    def select(self) -> tuple[np.ndarray, np.ndarray]:
        scores = (self.space.util - self.space.rate * self.space.route_prices(self.lam)
                  - self.mu)
        return self.space.first_choice(scores)

    def dual_value(self, best: np.ndarray) -> float:
        sums = _mu_sums(self.space, self.mu, self.n_versions)
        return float(best.sum() + (self.pseudo.matrix * sums).sum()
                     + self.lam @ self.space.capacity)

    def round(self, chosen: np.ndarray) -> None:
        """Price and placement updates for one round's pseudo-selections."""
        h = self.schedule.step(self.iteration)
        loads = self.space.loads(chosen)
        z = np.zeros(self.space.n_candidates)
        z[chosen] = 1.0
        p_cand = self.space.pseudo_values(self.pseudo)
        self.mu = np.maximum(0.0, self.mu + h * (z - p_cand))
        sums = _mu_sums(self.space, self.mu, self.n_versions)
        for ci in range(len(self.pseudo.cache_ids)):
            if ci == self.root_index:
                continue
            row = np.zeros(self.n_versions)
            row[self.items] = greedy_fractional_fill(
                sums[ci, self.items], self.sizes[self.items], self.budgets[ci])
            self.pseudo.matrix[ci] = row
        self.lam = np.maximum(0.0, self.lam + h * (loads - self.priced_capacity))
        self.iteration += 1

    def dual_state(self) -> CopDualState:
        return CopDualState(self.lam.copy(), self.mu.copy(), self.space,
                            self.iteration, self.schedule)


def cop_run(scenario: Scenario, iterations: int,
            schedule: StepSchedule | None = None, average_window: int = 200,
            space: CandidateSpace | None = None) -> CopRunResult:
    """Iterate pseudo-selection, link, and cache rounds from cold state."""
    if iterations < 1:
        raise ValueError("need at least one iteration")
    engine = CopEngine(scenario, schedule, space)
    space = engine.space
    trace: list[CopTraceRow] = []
    window = min(average_window, iterations)
    kept: list[tuple[np.ndarray, float]] = []
    chosen = None
    for t in range(iterations):
        chosen, best = engine.select()
        loads = space.loads(chosen)
        trace.append(CopTraceRow(
            iteration=t,
            dual_value=engine.dual_value(best),
            total_utility=float(space.util[chosen].sum()),
            max_link_overload=float(max(0.0, (loads - space.capacity).max())),
        ))
        kept.append((chosen, engine.schedule.step(t)))
        if len(kept) > window:
            kept.pop(0)
        engine.round(chosen)

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

    return CopRunResult(
        pseudo=engine.pseudo,
        placement=round_placement(engine.pseudo, scenario),
        trace=trace,
        dual=engine.dual_state(),
        averaged=AveragedSelection(zbar, total_h),
        averaged_utility=float((weights / total_h) @ space.util),
        final_selection=Selection(space.selection_dict(chosen)),
        space=space,
    )
