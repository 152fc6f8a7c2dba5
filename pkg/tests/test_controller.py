import numpy as np
import pytest

from dsmnas import nn
from dsmnas.bench_oracle import TabularBenchmark
from dsmnas.controller import Controller
from dsmnas.nn.gradcheck import check_gradients
from dsmnas.search_space import SearchSpaceSpec, apply_modification, distance, random_architecture
from dsmnas.subspace_graph import SubspaceGraph, SubspaceNode


def graph_of(centers, metrics):
    return SubspaceGraph([SubspaceNode(i, tuple(c), m) for i, (c, m) in enumerate(zip(centers, metrics))])


SPACE = SearchSpaceSpec.uniform(6, 5)


@pytest.fixture(scope="module")
def ctrl():
    return Controller(SPACE, 4, np.random.default_rng(0))


@pytest.fixture(scope="module")
def graph():
    rng = np.random.default_rng(1)
    return graph_of([random_architecture(SPACE, rng) for _ in range(4)], [0.3, 0.7, 0.5, 0.7])


def test_embedding_dimension_and_slice_locality(ctrl):
    P = ctrl.store.params
    a = (0, 1, 2, 3, 4, 0)
    e = ctrl.embed_architecture(P, a).value
    assert e.shape == (6 * 8,)
    for pos in range(6):
        b = list(a)
        b[pos] = (a[pos] + 1) % 5
        diff = ctrl.embed_architecture(P, tuple(b)).value - e
        changed = {i // 8 for i in np.flatnonzero(diff)}
        assert changed == {pos}


def test_edge_feature_antisymmetric_and_masked(ctrl):
    P = ctrl.store.params
    rng = np.random.default_rng(2)
    for _ in range(1000):
        a, b = random_architecture(SPACE, rng), random_architecture(SPACE, rng)
        ab = ctrl.edge_feature(P, a, b).value
        assert np.array_equal(ab, -ctrl.edge_feature(P, b, a).value)
        for pos in range(6):
            if a[pos] == b[pos]:
                assert not ab[pos * 8:(pos + 1) * 8].any()


def test_single_node_graph_runs():
    c = Controller(SPACE, 1, np.random.default_rng(3))
    s = c.sample(graph_of([(0,) * 6], [0.5]), 2, np.random.default_rng(0))
    assert s.subspace == 0 and s.num_terms == 5


def test_gnn_permutation_equivariance(ctrl, graph):
    P = ctrl.store.params
    feats = [f.value for f in ctrl.gnn_forward(P, graph)]
    perm = [2, 0, 3, 1]
    permuted = graph_of([graph.centers[p] for p in perm], [graph.metrics[p] for p in perm])
    pfeats = [f.value for f in ctrl.gnn_forward(P, permuted)]
    for k, p in enumerate(perm):
        assert np.allclose(pfeats[k], feats[p], atol=1e-12)


def test_pointwise_mode_ignores_edges():
    rng = np.random.default_rng(4)
    c = Controller(SPACE, 3, np.random.default_rng(5), graph_mode="pointwise")
    centers = [random_architecture(SPACE, rng) for _ in range(3)]
    f1 = [f.value for f in c.gnn_forward(c.store.params, graph_of(centers, [0.1, 0.2, 0.3]))]
    f2 = [f.value for f in c.gnn_forward(c.store.params, graph_of(centers, [0.3, 0.2, 0.1]))]
    assert all(np.array_equal(a, b) for a, b in zip(f1, f2))


def full_controller_errors(hidden=16, embed_dim=4, graph_mode="gnn"):
    space = SearchSpaceSpec.uniform(3, 3)
    c = Controller(space, 2, np.random.default_rng(6), embed_dim=embed_dim, hidden=hidden, graph_mode=graph_mode)
    # scale up from U(-0.1, 0.1) so gradients are not vanishingly small
    for name in c.store.names():
        c.store[name][...] *= 5
    g = graph_of([(0, 1, 2), (2, 2, 0)], [0.4, 0.6])
    forced = (1, [(2, 1)])

    def build(P):
        _, _, logps, ents = c.forward(P, g, 1, np.random.default_rng(0), forced)
        return nn.add(nn.add_n(logps), nn.scale(nn.add_n(ents), 0.3))

    return check_gradients(build, {k: v.copy() for k, v in c.store.params.items()})


def test_full_controller_gradient_check():
    errors = full_controller_errors()
    assert max(errors.values()) <= 1e-4, errors


def test_dominant_global_logit(ctrl, graph):
    c = Controller(SPACE, 4, np.random.default_rng(0))
    c.store["global/b"][2] += 30.0
    rng = np.random.default_rng(7)
    hits = sum(c.sample(graph, 1, rng).subspace == 2 for _ in range(1000))
    assert hits >= 999


def test_samples_stay_in_ball_and_terms_are_valid(ctrl, graph):
    rng = np.random.default_rng(8)
    radius = 3
    for _ in range(2000):
        s = ctrl.sample(graph, radius, rng)
        beta = apply_modification(graph.centers[s.subspace], s.modification, SPACE)
        assert distance(graph.centers[s.subspace], beta) <= radius
        assert s.num_terms == 1 + 2 * radius
        assert s.log_prob.item() <= 0 and s.entropy.item() >= 0


def test_forced_scoring_matches_sampling(ctrl, graph):
    s = ctrl.sample(graph, 2, np.random.default_rng(9))
    forced = (s.subspace, list(s.modification.steps))
    again = ctrl.sample(graph, 2, np.random.default_rng(123), forced=forced)
    assert again.modification == s.modification
    assert again.log_prob.item() == pytest.approx(s.log_prob.item(), abs=1e-12)


def test_sampling_deterministic(ctrl, graph):
    a = [ctrl.sample(graph, 2, np.random.default_rng(10)).modification for _ in range(2)]
    assert a[0] == a[1]


def test_rejects_wrong_graph_size(ctrl):
    with pytest.raises(ValueError):
        ctrl.sample(graph_of([(0,) * 6], [0.5]), 1, np.random.default_rng(0))


def test_describe_lists_parameters(ctrl):
    text = ctrl.describe()
    assert "lstm/w" in text and f"total parameters: {ctrl.store.num_parameters()}" in text


def test_batch_sampler_log_probs_match_tape(ctrl, graph):
    for k, mod, logp in ctrl.sample_batch(graph, 3, np.random.default_rng(11), 50):
        scored = ctrl.sample(graph, 3, np.random.default_rng(0), forced=(k, list(mod.steps)))
        assert scored.log_prob.item() == pytest.approx(logp, abs=1e-10)


def test_batch_sampler_distribution_matches_exact_probabilities():
    space = SearchSpaceSpec.uniform(2, 2)
    c = Controller(space, 2, np.random.default_rng(12), embed_dim=2, hidden=4)
    for name in c.store.names():
        c.store[name][...] *= 10
    g = graph_of([(0, 0), (1, 1)], [0.2, 0.6])
    outcomes = [(k, ((p, v),)) for k in range(2) for p in range(2) for v in range(2)]
    exact = {o: np.exp(c.sample(g, 1, np.random.default_rng(0), forced=(o[0], list(o[1]))).log_prob.item())
             for o in outcomes}
    assert sum(exact.values()) == pytest.approx(1.0, abs=1e-12)
    n = 40_000
    counts = dict.fromkeys(outcomes, 0)
    for k, mod, _ in c.sample_batch(g, 1, np.random.default_rng(13), n):
        counts[(k, mod.steps)] += 1
    for o, p in exact.items():
        assert abs(counts[o] - n * p) < 4 * np.sqrt(n * p * (1 - p)) + 1
