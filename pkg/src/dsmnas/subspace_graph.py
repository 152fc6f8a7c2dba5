"""Candidate subspaces as a directed graph pointing from weaker to better centers."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .bench_oracle import QueryBudget, TabularBenchmark, query_val
from .search_space import format_arch


@dataclass
class SubspaceNode:
    node_id: int
    center: tuple
    val_metric: float


def strict_order_edges(metrics) -> set:
    """Every ordered pair (i, j) with metrics[i] < metrics[j]."""
    n = len(metrics)
    return {(i, j) for i in range(n) for j in range(n) if metrics[i] < metrics[j]}


class SubspaceGraph:
    """K subspace nodes; edge (i, j) exists iff node i's metric < node j's.

    ``edge_mode="nearest"`` keeps, for every node, only the edges to the
    ``nearest_k`` strictly better nodes closest in metric.
    """

    def __init__(self, nodes, edge_mode: str = "complete", nearest_k: int = 2):
        if not nodes:
            raise ValueError("graph needs at least one node")
        if edge_mode not in ("complete", "nearest"):
            raise ValueError(f"unknown edge mode {edge_mode!r}")
        self.nodes = list(nodes)
        self.edge_mode = edge_mode
        self.nearest_k = nearest_k
        self.edges = self._expected_edges()

    def __len__(self):
        return len(self.nodes)

    @property
    def metrics(self) -> list:
        return [n.val_metric for n in self.nodes]

    @property
    def centers(self) -> list:
        return [n.center for n in self.nodes]

    def _expected_edges(self) -> set:
        full = strict_order_edges(self.metrics)
        if self.edge_mode == "complete":
            return full
        kept = set()
        for i in range(len(self.nodes)):
            better = sorted((j for (a, j) in full if a == i),
                            key=lambda j: (self.nodes[j].val_metric, j))
            kept.update((i, j) for j in better[: self.nearest_k])
        return kept

    def incoming(self, j: int) -> list:
        return sorted(i for (i, k) in self.edges if k == j)

    def check_invariants(self) -> None:
        if self.edges != self._expected_edges():
            raise AssertionError("edge set out of sync with node metrics")
        if any(i == j for i, j in self.edges):
            raise AssertionError("self edge present")

    def snapshot(self, iteration: int) -> str:
        return json.dumps({
            "iteration": iteration,
            "centers": [format_arch(n.center) for n in self.nodes],
            "metrics": self.metrics,
            "edges": sorted([list(e) for e in self.edges]),
        })


def init_graph(centers, benchmark: TabularBenchmark, budget: QueryBudget, **kwargs) -> SubspaceGraph:
    """Query each center's validation metric and build the edge set."""
    nodes = [SubspaceNode(i, tuple(c), query_val(benchmark, budget, c)) for i, c in enumerate(centers)]
    return SubspaceGraph(nodes, **kwargs)


def update_center(graph: SubspaceGraph, node_id: int, new_center, new_val: float) -> bool:
    """Replace a node's center when ``new_val`` strictly improves on it."""
    node = graph.nodes[node_id]
    if not new_val > node.val_metric:
        return False
    node.center = tuple(new_center)
    node.val_metric = float(new_val)
    if graph.edge_mode == "complete":
        graph.edges = {e for e in graph.edges if node_id not in e}
        for other in graph.nodes:
            j = other.node_id
            if j == node_id:
                continue
            if other.val_metric < node.val_metric:
                graph.edges.add((j, node_id))
            elif node.val_metric < other.val_metric:
                graph.edges.add((node_id, j))
    else:
        graph.edges = graph._expected_edges()
    return True


def best_center(graph: SubspaceGraph) -> tuple:
    """(center, metric) of the best node; lowest id wins ties."""
    best = graph.nodes[0]
    for node in graph.nodes[1:]:
        if node.val_metric > best.val_metric:
            best = node
    return best.center, best.val_metric
