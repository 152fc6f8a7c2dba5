import itertools

import numpy as np
import pytest

from dsmnas.bench_oracle import QueryBudget, TabularBenchmark, default_synthetic_spec, generate_synthetic
from dsmnas.search_space import SearchSpaceSpec, random_architecture
from dsmnas.subspace_graph import (
    SubspaceGraph,
    SubspaceNode,
    best_center,
    init_graph,
    strict_order_edges,
    update_center,
)


def make_graph(metrics, **kwargs):
    return SubspaceGraph([SubspaceNode(i, (i,), m) for i, m in enumerate(metrics)], **kwargs)


def brute_edges(metrics):
    edges = set()
    for i in range(len(metrics)):
        for j in range(len(metrics)):
            if metrics[i] < metrics[j]:
                edges.add((i, j))
    return edges


def test_init_edges_point_to_better_centers():
    space = SearchSpaceSpec.uniform(1, 4)
    bench = TabularBenchmark(space, {(0,): (0.6, 0.6), (1,): (0.7, 0.7), (2,): (0.8, 0.8), (3,): (0.5, 0.5)})
    budget = QueryBudget(10)
    g = init_graph([(0,), (1,), (2,)], bench, budget)
    assert budget.used == 3
    assert g.edges == {(0, 1), (0, 2), (1, 2)}
    assert g.incoming(2) == [0, 1]
    assert g.incoming(0) == []


@pytest.mark.parametrize("metrics", [[0.5], [0.5, 0.5, 0.5], [0.3, 0.7, 0.3, 0.9], [0.2, 0.2, 0.8, 0.8]])
def test_edges_with_ties_match_brute_force(metrics):
    g = make_graph(metrics)
    assert g.edges == brute_edges(metrics) == strict_order_edges(metrics)
    assert all(i != j for i, j in g.edges)


def test_all_tied_graph_has_no_edges():
    assert make_graph([0.4] * 4).edges == set()


def test_update_requires_strict_improvement():
    g = make_graph([0.3, 0.6])
    assert not update_center(g, 0, (9,), 0.3)
    assert g.nodes[0].center == (0,)
    assert not update_center(g, 0, (9,), 0.1)
    assert update_center(g, 0, (9,), 0.8)
    assert g.nodes[0].center == (9,) and g.nodes[0].val_metric == 0.8
    assert g.edges == {(1, 0)}


def test_update_to_perfect_metric_makes_sink():
    g = make_graph([0.1, 0.5, 0.7, 0.2])
    update_center(g, 1, (8,), 1.0)
    assert g.incoming(1) == [0, 2, 3]
    assert not any(i == 1 for i, _ in g.edges)


@pytest.mark.parametrize("mode", ["complete", "nearest"])
def test_invariant_after_random_updates(mode):
    rng = np.random.default_rng(0)
    g = make_graph(list(rng.random(6)), edge_mode=mode)
    history = [g.metrics]
    for _ in range(500):
        node = int(rng.integers(6))
        update_center(g, node, (int(rng.integers(100)),), float(rng.random()))
        g.check_invariants()
        history.append(g.metrics)
    for prev, cur in zip(history, history[1:]):
        assert all(b >= a for a, b in zip(prev, cur))


def test_nearest_mode_is_subset_of_complete():
    rng = np.random.default_rng(1)
    metrics = list(rng.random(7))
    near = make_graph(metrics, edge_mode="nearest", nearest_k=2)
    assert near.edges <= brute_edges(metrics)
    for i in range(7):
        assert len([e for e in near.edges if e[0] == i]) <= 2


def test_best_center_is_argmax_with_lowest_id_on_ties():
    rng = np.random.default_rng(2)
    for _ in range(200):
        metrics = list(rng.integers(0, 4, size=5) / 4)
        center, val = best_center(make_graph(metrics))
        assert val == max(metrics)
        assert center == (metrics.index(max(metrics)),)


def test_best_center_invariant_under_permutation():
    metrics = [0.3, 0.9, 0.5, 0.1]
    for perm in itertools.permutations(range(4)):
        nodes = [SubspaceNode(k, (perm[k],), metrics[perm[k]]) for k in range(4)]
        assert best_center(SubspaceGraph(nodes)) == ((1,), 0.9)


def test_snapshot_is_json_and_stable():
    import json
    g = make_graph([0.2, 0.4])
    snap = json.loads(g.snapshot(3))
    assert snap["iteration"] == 3 and snap["edges"] == [[0, 1]]
    assert g.snapshot(3) == g.snapshot(3)


def test_init_graph_on_synthetic():
    bench = generate_synthetic(default_synthetic_spec(0))
    rng = np.random.default_rng(0)
    centers = [random_architecture(bench.spec, rng) for _ in range(4)]
    g = init_graph(centers, bench, QueryBudget(4))
    g.check_invariants()
    assert g.metrics == [bench.lookup(c)[0] for c in centers]
