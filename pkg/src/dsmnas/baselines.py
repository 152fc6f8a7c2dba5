"""Comparison searches sharing the benchmark/budget contract of the trainer."""

from __future__ import annotations

from dataclasses import asdict

import numpy as np

from . import _kernels, nn
from .bench_oracle import BudgetExhausted, QueryBudget, TabularBenchmark, query_test, query_val
from .nn import Tape, Tensor
from .search_space import format_arch, random_architecture, sample_ball
from .subspace_graph import best_center, init_graph, update_center
from .trainer import SearchConfig, SearchResult, initial_centers, reinforce_update, seed_streams


class _Tracker:
    """Best-by-val bookkeeping and trajectory records for baseline loops."""

    def __init__(self, benchmark, budget):
        self.benchmark = benchmark
        self.budget = budget
        self.best = None
        self.best_val = -np.inf
        self.trajectory = []

    def query(self, arch, subspace_id=None, center=None):
        charged = self.budget.would_charge(arch)
        val = query_val(self.benchmark, self.budget, arch)
        if val > self.best_val:
            self.best, self.best_val = arch, val
        return val, charged

    def record(self, arch, val, charged, subspace_id=None, center=None, reward=None,
               updated=False, best_val=None):
        self.trajectory.append({
            "iteration": len(self.trajectory) + 1,
            "subspace_id": subspace_id,
            "center": format_arch(center) if center is not None else None,
            "beta": format_arch(arch),
            "beta_val": val,
            "reward": val if reward is None else reward,
            "updated": updated,
            "charged": charged,
            "budget_used": self.budget.used,
            "best_val": self.best_val if best_val is None else best_val,
        })


def _cap(budget: int, max_iterations):
    return max_iterations if max_iterations is not None else 2 * budget


def random_search(benchmark: TabularBenchmark, budget: int, seed: int,
                  memoize: bool = True, max_iterations: int | None = None) -> SearchResult:
    """Uniform samples from the whole space; best validation metric wins."""
    rng = seed_streams(seed)[2]
    tracker = _Tracker(benchmark, QueryBudget(budget, memoize=memoize))
    cap = _cap(budget, max_iterations)
    while not tracker.budget.exhausted and len(tracker.trajectory) < cap:
        arch = random_architecture(benchmark.spec, rng)
        val, charged = tracker.query(arch)
        tracker.record(arch, val, charged)
    return SearchResult("random", seed, tracker.best, tracker.best_val,
                        query_test(benchmark, tracker.best), tracker.budget.used, 0,
                        len(tracker.trajectory), 0, tracker.trajectory,
                        {"budget": budget, "seed": seed, "memoize": memoize})


def random_in_subspace(benchmark: TabularBenchmark, budget: int, center, radius: int, seed: int,
                       memoize: bool = True, max_iterations: int | None = None) -> SearchResult:
    """Uniform samples from the distance-``radius`` ball of a fixed center."""
    center = benchmark.spec.validate(center)
    rng = seed_streams(seed)[2]
    tracker = _Tracker(benchmark, QueryBudget(budget, memoize=memoize))
    cap = _cap(budget, max_iterations)
    while not tracker.budget.exhausted and len(tracker.trajectory) < cap:
        arch = sample_ball(benchmark.spec, center, radius, rng)
        val, charged = tracker.query(arch)
        tracker.record(arch, val, charged, subspace_id=0, center=center, reward=val)
    return SearchResult("random-sub", seed, tracker.best, tracker.best_val,
                        query_test(benchmark, tracker.best), tracker.budget.used, 0,
                        len(tracker.trajectory), 1, tracker.trajectory,
                        {"budget": budget, "seed": seed, "radius": radius,
                         "center": format_arch(center), "memoize": memoize})


def random_with_subspace_update(benchmark: TabularBenchmark, budget: int, num_subspaces: int,
                                radius: int, seed: int, memoize: bool = True,
                                max_iterations: int | None = None) -> SearchResult:
    """Uniform node choice, uniform ball sample, strict-improvement center update."""
    center_rng, _, rng = seed_streams(seed)
    qb = QueryBudget(budget, memoize=memoize)
    graph = init_graph(initial_centers(benchmark, num_subspaces, center_rng), benchmark, qb)
    init_queries = qb.used
    seen = set(graph.centers)
    tracker = _Tracker(benchmark, qb)
    cap = _cap(budget, max_iterations)
    while not qb.exhausted and len(tracker.trajectory) < cap:
        k = int(rng.integers(num_subspaces))
        node = graph.nodes[k]
        alpha, alpha_val = node.center, node.val_metric
        arch = sample_ball(benchmark.spec, alpha, radius, rng)
        val, charged = tracker.query(arch)
        updated = update_center(graph, k, arch, val)
        if updated:
            seen.add(arch)
        tracker.record(arch, val, charged, subspace_id=k, center=alpha, reward=val - alpha_val,
                       updated=updated, best_val=best_center(graph)[1])
    arch, val = best_center(graph)
    return SearchResult("random-update", seed, arch, val, query_test(benchmark, arch), qb.used,
                        init_queries, len(tracker.trajectory), len(seen), tracker.trajectory,
                        {"budget": budget, "seed": seed, "num_subspaces": num_subspaces,
                         "radius": radius, "memoize": memoize})


class SequencePolicy:
    """LSTM that emits one code per position, left to right."""

    def __init__(self, spec, rng: np.random.Generator, hidden: int = 64):
        self.spec = spec
        self.hidden = hidden
        store = nn.ParamStore()
        shapes = {"lstm/w": (4 * hidden, 2 * hidden), "lstm/b": (4 * hidden,), "start": (hidden,)}
        for i, size in enumerate(spec.sizes):
            shapes[f"op/{i}/w"] = (size, hidden)
            shapes[f"op/{i}/b"] = (size,)
            shapes[f"op_in/{i}"] = (size, hidden)
        for name, shape in shapes.items():
            store.add(name, rng.uniform(-0.1, 0.1, size=shape))
        self.store = store

    def sample(self, rng: np.random.Generator, forced=None):
        tape = Tape()
        P = tape.watch(self.store.params)
        h = c = Tensor(np.zeros(self.hidden))
        x = P["start"]
        arch, logps, ents = [], [], []
        for i in range(self.spec.num_positions):
            h, c = nn.recurrent_cell(x, h, c, P["lstm/w"], P["lstm/b"])
            logits = nn.dense(h, P[f"op/{i}/w"], P[f"op/{i}/b"])
            f = self.spec.index_of(i, forced[i]) if forced is not None else None
            k, logp, ent = nn.categorical_sample(logits, rng, f)
            arch.append(self.spec.candidates[i][k])
            logps.append(logp)
            ents.append(ent)
            x = nn.take(P[f"op_in/{i}"], k)
        return _Sample(tuple(arch), nn.add_n(logps), nn.add_n(ents), len(logps), tape, P)

    def probabilities(self, position: int = 0, prefix=()) -> np.ndarray:
        """Softmax over codes at ``position`` given the codes chosen in ``prefix``."""
        P = self.store.params
        h = c = np.zeros(self.hidden)
        x = P["start"]
        for i in range(position + 1):
            z = P["lstm/w"] @ np.concatenate([x, h]) + P["lstm/b"]
            h, c, _ = _kernels.lstm_gates_forward(z, c)
            if i < position:
                x = P[f"op_in/{i}"][self.spec.index_of(i, prefix[i])]
        logits = P[f"op/{position}/w"] @ h + P[f"op/{position}/b"]
        e = np.exp(logits - logits.max())
        return e / e.sum()


class _Sample:
    __slots__ = ("arch", "log_prob", "entropy", "num_terms", "tape", "leaves")

    def __init__(self, arch, log_prob, entropy, num_terms, tape, leaves):
        self.arch = arch
        self.log_prob = log_prob
        self.entropy = entropy
        self.num_terms = num_terms
        self.tape = tape
        self.leaves = leaves


def reinforce_whole_space(benchmark: TabularBenchmark, budget: int,
                          config: SearchConfig | None = None) -> SearchResult:
    """Policy over full architectures trained on the absolute validation metric."""
    config = config or SearchConfig(budget=budget)
    _, param_rng, rng = seed_streams(config.seed)
    policy = SequencePolicy(benchmark.spec, param_rng, config.hidden)
    qb = QueryBudget(budget, memoize=config.memoize)
    tracker = _Tracker(benchmark, qb)
    cap = _cap(budget, config.max_iterations)
    baseline = 0.0
    while not qb.exhausted and len(tracker.trajectory) < cap:
        sample = policy.sample(rng)
        try:
            val, charged = tracker.query(sample.arch)
        except BudgetExhausted:
            break
        advantage = val - baseline if config.use_baseline else val
        reinforce_update(policy.store, sample, advantage, config.entropy_weight, config.lr, config.clip_norm)
        if config.use_baseline:
            baseline = config.baseline_decay * baseline + (1.0 - config.baseline_decay) * val
        tracker.record(sample.arch, val, charged)
    cfg = asdict(config)
    cfg["budget"] = budget
    cfg["warm_start_centers"] = None
    result = SearchResult("reinforce", config.seed, tracker.best, tracker.best_val,
                          query_test(benchmark, tracker.best), qb.used, 0,
                          len(tracker.trajectory), 0, tracker.trajectory, cfg)
    result.policy = policy
    return result
