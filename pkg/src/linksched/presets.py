"""Named conflict-graph families used throughout the experiments.

Recognized names (case-insensitive):

    star<X>   star graph with X peripheral links (X+1 nodes)
    ba-m<X>   Barabasi-Albert graph on 70 nodes, X edges per new node
    ba-mix    BA graphs with size drawn from {100,150,...,300} and
              attachment from {2,5,10,15,20}, sampled independently
    er        Erdos-Renyi graph, 50 nodes, edge probability 0.1
    tree      power-law tree, 50 nodes, exponent 3
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .graph import (ConflictGraph, as_rng, generate_ba, generate_er,
                    generate_power_law_tree, generate_star)

BA_NODES = 70
BA_MIX_SIZES = (100, 150, 200, 250, 300)
BA_MIX_ATTACH = (2, 5, 10, 15, 20)
ER_NODES = 50
ER_EDGE_PROB = 0.1
TREE_NODES = 50
TREE_EXPONENT = 3.0


@dataclass(frozen=True)
class GraphConfig:
    """A named random-graph family; ``build`` draws one instance."""

    name: str
    max_nodes: int
    _builder: Callable[[np.random.Generator], ConflictGraph]

    def build(self, rng: np.random.Generator | int | None = None) -> ConflictGraph:
        return self._builder(as_rng(rng))


def _ba_mix(gen: np.random.Generator) -> ConflictGraph:
    n = int(gen.choice(BA_MIX_SIZES))
    m = int(gen.choice(BA_MIX_ATTACH))
    return generate_ba(n, m, gen)


def parse_graph_config(name: str) -> GraphConfig:
    """Resolve a configuration name into a :class:`GraphConfig`."""
    key = name.strip().lower()
    star = re.fullmatch(r"star(\d+)", key)
    if star:
        x = int(star.group(1))
        if x < 1:
            raise ValueError(f"{name}: star needs at least one peripheral")
        return GraphConfig(key, x + 1, lambda gen, x=x: generate_star(x))
    ba = re.fullmatch(r"ba-m(\d+)", key)
    if ba:
        m = int(ba.group(1))
        if not 1 <= m < BA_NODES:
            raise ValueError(f"{name}: attachment count must lie in [1, {BA_NODES})")
        return GraphConfig(key, BA_NODES,
                           lambda gen, m=m: generate_ba(BA_NODES, m, gen))
    if key == "ba-mix":
        return GraphConfig(key, max(BA_MIX_SIZES), _ba_mix)
    if key == "er":
        return GraphConfig(key, ER_NODES,
                           lambda gen: generate_er(ER_NODES, ER_EDGE_PROB, gen))
    if key == "tree":
        return GraphConfig(
            key, TREE_NODES,
            lambda gen: generate_power_law_tree(TREE_NODES, TREE_EXPONENT, gen))
    raise ValueError(f"unknown graph configuration: {name!r}")
