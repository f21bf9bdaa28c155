"""Flattened (user, cache, version) candidate arrays for vectorized rounds.

Every per-user argmax in the selection algorithms runs over the same
candidate universe: the user's interest set crossed with all caches.
Candidates are laid out user-major, then ascending cache id, then
ascending version id, so "first index within tolerance of the max" is
exactly the lexicographic tie-break rule.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Scenario, route_links, utility
from .placement import Placement, PseudoPlacement


@dataclass
class CandidateSpace:
    scenario: Scenario
    user_ids: tuple[int, ...]
    cache_ids: tuple[int, ...]
    link_ids: tuple[int, ...]
    cand_user: np.ndarray     # user index per candidate
    cand_cache: np.ndarray    # cache index (into cache_ids)
    cand_version: np.ndarray  # version id
    util: np.ndarray          # U_s(X_v) per candidate
    rate: np.ndarray          # X_v per candidate
    user_start: np.ndarray    # candidate offsets, len n_users + 1
    route_matrix: np.ndarray  # (n_cand, n_links) 0/1, link on candidate route
    capacity: np.ndarray      # R_l per link index

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_links(self) -> int:
        return len(self.link_ids)

    @property
    def n_candidates(self) -> int:
        return self.cand_user.size

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "CandidateSpace":
        topo = scenario.topology
        cat = scenario.catalog
        cache_ids = tuple(sorted(c.cache_id for c in topo.caches))
        link_ids = tuple(sorted(l.link_id for l in topo.links))
        link_index = {l: i for i, l in enumerate(link_ids)}
        capacity = np.empty(len(link_ids))
        for l in topo.links:
            capacity[link_index[l.link_id]] = l.capacity_mbps

        cand_user, cand_cache, cand_version = [], [], []
        util_col, rate_col, starts = [], [], [0]
        rows = []
        for ui, profile in enumerate(scenario.users):
            iset = sorted(cat.interest_set(profile.interest_video))
            for ci, cache_id in enumerate(cache_ids):
                route = [link_index[l] for l in route_links(topo, profile.user_id, cache_id)]
                for v in iset:
                    cand_user.append(ui)
                    cand_cache.append(ci)
                    cand_version.append(v)
                    rate_col.append(cat.bitrate(v))
                    util_col.append(utility(profile, cat.bitrate(v)))
                    row = np.zeros(len(link_ids))
                    row[route] = 1.0
                    rows.append(row)
            starts.append(len(cand_user))

        return cls(
            scenario=scenario,
            user_ids=tuple(p.user_id for p in scenario.users),
            cache_ids=cache_ids,
            link_ids=link_ids,
            cand_user=np.array(cand_user, dtype=np.int64),
            cand_cache=np.array(cand_cache, dtype=np.int64),
            cand_version=np.array(cand_version, dtype=np.int64),
            util=np.array(util_col),
            rate=np.array(rate_col),
            user_start=np.array(starts, dtype=np.int64),
            route_matrix=np.vstack(rows),
            capacity=capacity,
        )

    # -- per-round primitives ------------------------------------------------

    def route_prices(self, lam: np.ndarray) -> np.ndarray:
        """Sum of link prices along each candidate's route."""
        return self.route_matrix @ lam

    def first_choice(self, scores: np.ndarray, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
        """Per-user argmax with lexicographic tie-break within `tol`.

        Returns (chosen candidate index per user, max score per user).
        """
        best = np.maximum.reduceat(scores, self.user_start[:-1])
        if np.isneginf(best).any():
            raise ValueError("a user has no feasible candidate; the root must "
                             "store the null version")
        eligible = scores >= (best[self.cand_user] - tol)
        ranked = np.where(eligible, np.arange(scores.size), scores.size)
        chosen = np.minimum.reduceat(ranked, self.user_start[:-1])
        return chosen.astype(np.int64), best

    def loads(self, chosen: np.ndarray) -> np.ndarray:
        """Per-link traffic (Mbps) induced by one candidate per user."""
        return self.route_matrix[chosen].T @ self.rate[chosen]

    def placement_mask(self, placement: Placement) -> np.ndarray:
        if placement.cache_ids != self.cache_ids:
            raise ValueError("placement cache ids do not match the scenario")
        return placement.matrix[self.cand_cache, self.cand_version]

    def pseudo_values(self, pseudo: PseudoPlacement) -> np.ndarray:
        """p'[c, v] gathered per candidate."""
        if pseudo.cache_ids != self.cache_ids:
            raise ValueError("pseudo placement cache ids do not match the scenario")
        return pseudo.matrix[self.cand_cache, self.cand_version]

    def as_pair(self, candidate: int) -> tuple[int, int]:
        """(cache_id, version_id) of a candidate index."""
        return (self.cache_ids[self.cand_cache[candidate]],
                int(self.cand_version[candidate]))

    def selection_dict(self, chosen: np.ndarray) -> dict[int, tuple[int, int]]:
        return {self.user_ids[ui]: self.as_pair(c)
                for ui, c in enumerate(chosen)}

    def candidate_of(self, user_id: int, cache_id: int, version_id: int) -> int:
        ui = self.user_ids.index(user_id)
        ci = self.cache_ids.index(cache_id)
        lo, hi = self.user_start[ui], self.user_start[ui + 1]
        for k in range(lo, hi):
            if self.cand_cache[k] == ci and self.cand_version[k] == version_id:
                return k
        raise KeyError(f"({user_id}, {cache_id}, {version_id}) is not a candidate")
