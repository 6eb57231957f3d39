"""Interchangeable scheduling policies: callables (graph, q, r) -> Schedule."""

from __future__ import annotations

import numpy as np

from .gcn import LEAKY_SLOPE, GcnParams, forward
from .graph import ConflictGraph, normalized_laplacian
from .solvers import (Schedule, baseline_utility, exact_mwis,
                      greedy_centralized, lgs)


def policy_utility(queues, rates, kind: str) -> np.ndarray:
    """Utility selector for the handcrafted policies.

    ``product`` and ``min`` combine backlog and rate; ``queue`` uses the raw
    backlog (the classic myopic weight).
    """
    if kind == "queue":
        return np.asarray(queues, dtype=np.float64)
    return baseline_utility(queues, rates, kind)


class LgsPolicy:
    """Baseline distributed scheduler: local greedy on a q/r utility."""

    def __init__(self, utility_kind: str = "product"):
        self.utility_kind = utility_kind

    def __call__(self, graph: ConflictGraph, q, r) -> Schedule:
        return lgs(graph, policy_utility(q, r, self.utility_kind))


class GreedyPolicy:
    """Centralized sequential greedy scheduler."""

    def __init__(self, utility_kind: str = "product"):
        self.utility_kind = utility_kind

    def __call__(self, graph: ConflictGraph, q, r) -> Schedule:
        return greedy_centralized(graph, policy_utility(q, r, self.utility_kind))


class ExactPolicy:
    """Per-slot optimal scheduler; only viable on small graphs."""

    def __init__(self, utility_kind: str = "product", max_nodes: int = 40):
        self.utility_kind = utility_kind
        self.max_nodes = max_nodes

    def __call__(self, graph: ConflictGraph, q, r) -> Schedule:
        return exact_mwis(graph, policy_utility(q, r, self.utility_kind),
                          max_nodes=self.max_nodes)


class GcnLgsPolicy:
    """GCN-derived utilities fed to the distributed local greedy solver.

    The node features are the baseline utility; the Laplacian of the most
    recently seen graph is cached, which covers the per-episode and
    per-instance usage patterns.
    """

    def __init__(self, params: GcnParams, slope: float = LEAKY_SLOPE,
                 feature_kind: str = "product"):
        self.params = params
        self.slope = slope
        self.feature_kind = feature_kind
        self._graph: ConflictGraph | None = None
        self._laplacian: np.ndarray | None = None

    def laplacian_for(self, graph: ConflictGraph) -> np.ndarray:
        if graph is not self._graph:
            self._graph = graph
            self._laplacian = normalized_laplacian(graph)
        return self._laplacian

    def utilities(self, graph: ConflictGraph, q, r) -> np.ndarray:
        features = policy_utility(q, r, self.feature_kind)[:, None]
        u, _ = forward(self.params, self.laplacian_for(graph), features,
                       self.slope)
        return u

    def __call__(self, graph: ConflictGraph, q, r) -> Schedule:
        return lgs(graph, self.utilities(graph, q, r))
