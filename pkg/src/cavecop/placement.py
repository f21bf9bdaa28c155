"""Placement state: which cache stores which video version.

Rows follow the topology's caches sorted by id; columns are version ids.
The root cache always stores everything (it has infinite storage), and the
null version lives only at the root, so selecting it is always feasible
and moves no traffic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Catalog, ModelError, Scenario


def _sorted_cache_ids(scenario: Scenario) -> tuple[int, ...]:
    return tuple(sorted(c.cache_id for c in scenario.topology.caches))


@dataclass
class Placement:
    """Binary storage matrix p[c, v]."""

    matrix: np.ndarray  # bool, shape (n_caches, n_versions)
    cache_ids: tuple[int, ...]

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=bool)
        self._row = {c: i for i, c in enumerate(self.cache_ids)}

    def row_index(self, cache_id: int) -> int:
        return self._row[cache_id]

    def stores(self, cache_id: int, version_id: int) -> bool:
        return bool(self.matrix[self._row[cache_id], version_id])

    def stored_versions(self, cache_id: int) -> tuple[int, ...]:
        return tuple(np.flatnonzero(self.matrix[self._row[cache_id]]))

    def storage_used_mb(self, catalog: Catalog) -> np.ndarray:
        sizes = np.array([v.file_size_mb for v in catalog.versions])
        return self.matrix @ sizes

    def copy(self) -> "Placement":
        return Placement(self.matrix.copy(), self.cache_ids)

    @classmethod
    def root_only(cls, scenario: Scenario) -> "Placement":
        """Initial state: only the root holds content (all of it)."""
        ids = _sorted_cache_ids(scenario)
        matrix = np.zeros((len(ids), len(scenario.catalog.versions)), dtype=bool)
        matrix[ids.index(scenario.topology.root_id)] = True
        return cls(matrix, ids)

    @classmethod
    def from_stored(cls, scenario: Scenario, stored: dict) -> "Placement":
        """Build from {cache_id: iterable of version ids}; root is forced full."""
        placement = cls.root_only(scenario)
        root = scenario.topology.root_id
        for cache_id, versions in stored.items():
            if cache_id == root:
                continue
            for v in versions:
                placement.matrix[placement._row[cache_id], v] = True
        return placement


@dataclass
class PseudoPlacement:
    """Relaxed storage matrix p'[c, v] in [0, 1]."""

    matrix: np.ndarray  # float64
    cache_ids: tuple[int, ...]

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        self._row = {c: i for i, c in enumerate(self.cache_ids)}

    def value(self, cache_id: int, version_id: int) -> float:
        return float(self.matrix[self._row[cache_id], version_id])

    def copy(self) -> "PseudoPlacement":
        return PseudoPlacement(self.matrix.copy(), self.cache_ids)

    @classmethod
    def initial(cls, scenario: Scenario) -> "PseudoPlacement":
        ids = _sorted_cache_ids(scenario)
        matrix = np.zeros((len(ids), len(scenario.catalog.versions)))
        matrix[ids.index(scenario.topology.root_id)] = 1.0
        return cls(matrix, ids)


def check_budgets(matrix: np.ndarray, cache_ids, scenario: Scenario,
                  tol: float = 1e-9) -> list[str]:
    """Storage-budget violations of a (pseudo) placement matrix."""
    problems = []
    sizes = np.array([v.file_size_mb for v in scenario.catalog.versions])
    used = matrix @ sizes
    budget = {c.cache_id: c.storage_mb for c in scenario.topology.caches}
    for i, cache_id in enumerate(cache_ids):
        cap = budget.get(cache_id)
        if cap is None:
            problems.append(f"placement row for unknown cache {cache_id}")
        elif not math.isinf(cap) and used[i] > cap + tol:
            problems.append(f"cache {cache_id} stores {used[i]:.3f} Mb over budget {cap:.3f}")
    return problems
