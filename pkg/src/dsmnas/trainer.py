"""Search loop: sample a subspace and a modification, reward, update, repeat.

Runs until the query budget is spent. Every run is fully determined by its
config and the benchmark table.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .bench_oracle import BudgetExhausted, QueryBudget, TabularBenchmark, query_test, query_val
from .controller import GRAPH_MODES, Controller
from .search_space import apply_modification, format_arch, random_architecture
from .subspace_graph import best_center, init_graph, update_center

REWARD_MODES = ("improvement", "absolute")


class ConfigError(ValueError):
    pass


@dataclass
class SearchConfig:
    num_subspaces: int = 4
    radius: int = 4
    budget: int = 1000
    lr: float = 1e-2
    entropy_weight: float = 7.5e-4
    baseline_decay: float = 0.95
    use_baseline: bool = True
    clip_norm: float = 5.0
    seed: int = 0
    subspace_update: bool = True
    reward_mode: str = "improvement"
    graph_mode: str = "gnn"
    warm_start_centers: list | None = None
    memoize: bool = True
    max_iterations: int | None = None
    embed_dim: int = 8
    hidden: int = 64
    edge_mode: str = "complete"

    @classmethod
    def large_space(cls, **overrides) -> "SearchConfig":
        """Defaults for MobileNet-sized spaces (K=10, M=3, lr 3e-4)."""
        base = dict(num_subspaces=10, radius=3, lr=3e-4, entropy_weight=1e-3)
        base.update(overrides)
        return cls(**base)

    def validate(self, num_positions: int, subspaces: bool = True) -> None:
        """``subspaces=False`` skips the K/M checks for whole-space algorithms."""
        if self.budget < 1:
            raise ConfigError("budget must be at least 1")
        if subspaces:
            if self.num_subspaces < 1:
                raise ConfigError("K must be at least 1")
            if not 1 <= self.radius <= num_positions:
                raise ConfigError(f"M must be in [1, {num_positions}], got {self.radius}")
            if self.budget < self.num_subspaces:
                raise ConfigError(f"budget {self.budget} cannot cover K={self.num_subspaces} initial queries")
        if self.reward_mode not in REWARD_MODES:
            raise ConfigError(f"reward_mode must be one of {REWARD_MODES}")
        if self.graph_mode not in GRAPH_MODES:
            raise ConfigError(f"graph_mode must be one of {GRAPH_MODES}")
        if self.lr <= 0 or self.entropy_weight < 0 or not 0 <= self.baseline_decay < 1:
            raise ConfigError("lr must be positive, entropy weight non-negative, decay in [0, 1)")

    @property
    def iteration_cap(self) -> int:
        return self.max_iterations if self.max_iterations is not None else 2 * self.budget


@dataclass
class SearchResult:
    algorithm: str
    seed: int
    arch: tuple
    val: float
    test: float
    queries_used: int
    init_queries: int
    iterations: int
    distinct_centers: int
    trajectory: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "arch": format_arch(self.arch),
            "val": self.val,
            "test": self.test,
            "queries_used": self.queries_used,
            "init_queries": self.init_queries,
            "iterations": self.iterations,
            "distinct_centers": self.distinct_centers,
            "config": self.config,
        }


def write_run(result: SearchResult, outdir, graph_log: list | None = None) -> None:
    """``trajectory.jsonl`` (one record per iteration) and ``summary.json``."""
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "trajectory.jsonl"), "w", encoding="utf-8", newline="\n") as fh:
        for rec in result.trajectory:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(os.path.join(outdir, "summary.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(result.summary(), sort_keys=True, indent=2) + "\n")
    if graph_log is not None:
        with open(os.path.join(outdir, "graph.jsonl"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("".join(line + "\n" for line in graph_log))


def seed_streams(seed: int, n: int = 3) -> list:
    """Independent generators for (centers, parameters, sampling)."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def initial_centers(benchmark: TabularBenchmark, k: int, rng, warm_start=None) -> list:
    centers = [benchmark.spec.validate(a) for a in (warm_start or [])][:k]
    while len(centers) < k:
        centers.append(random_architecture(benchmark.spec, rng))
    return centers


def compute_reward(beta_val: float, alpha_val: float, mode: str = "improvement") -> float:
    if mode == "improvement":
        return beta_val - alpha_val
    if mode == "absolute":
        return beta_val
    raise ConfigError(f"unknown reward mode {mode!r}")


def reinforce_update(store: nn.ParamStore, sample, advantage: float, entropy_weight: float,
                     lr: float, clip_norm: float) -> dict:
    """Loss = -advantage * sum log pi - c * sum entropy; one clipped Adam step."""
    loss = nn.add(nn.scale(sample.log_prob, -advantage), nn.scale(sample.entropy, -entropy_weight))
    sample.tape.backward(loss)
    grads = sample.tape.gradients(sample.leaves)
    nn.adam_step(store, nn.clip_global_norm(grads, clip_norm), lr=lr)
    return grads


class SearchState:
    """Mutable state of one run."""

    def __init__(self, benchmark: TabularBenchmark, config: SearchConfig):
        config.validate(benchmark.spec.num_positions)
        self.benchmark = benchmark
        self.config = config
        center_rng, param_rng, self.rng = seed_streams(config.seed)
        self.budget = QueryBudget(config.budget, memoize=config.memoize)
        centers = initial_centers(benchmark, config.num_subspaces, center_rng, config.warm_start_centers)
        self.graph = init_graph(centers, benchmark, self.budget, edge_mode=config.edge_mode)
        self.init_queries = self.budget.used
        self.controller = Controller(benchmark.spec, config.num_subspaces, param_rng,
                                     config.embed_dim, config.hidden, config.graph_mode)
        self.baseline = 0.0
        self.iteration = 0
        self.seen_centers = set(self.graph.centers)
        self.trajectory = []

    @property
    def done(self) -> bool:
        return self.budget.exhausted or self.iteration >= self.config.iteration_cap


def train_step(state: SearchState) -> dict:
    cfg = state.config
    sample = state.controller.sample(state.graph, cfg.radius, state.rng)
    node = state.graph.nodes[sample.subspace]
    alpha, alpha_val = node.center, node.val_metric
    beta = apply_modification(alpha, sample.modification, state.benchmark.spec)
    charged = state.budget.would_charge(beta)
    beta_val = query_val(state.benchmark, state.budget, beta)
    reward = compute_reward(beta_val, alpha_val, cfg.reward_mode)
    advantage = reward - state.baseline if cfg.use_baseline else reward
    reinforce_update(state.controller.store, sample, advantage, cfg.entropy_weight, cfg.lr, cfg.clip_norm)
    if cfg.use_baseline:
        state.baseline = cfg.baseline_decay * state.baseline + (1.0 - cfg.baseline_decay) * reward
    updated = False
    if cfg.subspace_update and beta_val > alpha_val:
        updated = update_center(state.graph, sample.subspace, beta, beta_val)
        state.seen_centers.add(beta)
    state.iteration += 1
    record = {
        "iteration": state.iteration,
        "subspace_id": sample.subspace,
        "center": format_arch(alpha),
        "beta": format_arch(beta),
        "beta_val": beta_val,
        "reward": reward,
        "updated": updated,
        "charged": charged,
        "budget_used": state.budget.used,
        "best_val": best_center(state.graph)[1],
    }
    state.trajectory.append(record)
    return record


def run_search(benchmark: TabularBenchmark, config: SearchConfig, algorithm: str = "dsm",
               graph_log: list | None = None) -> SearchResult:
    state = SearchState(benchmark, config)
    if graph_log is not None:
        graph_log.append(state.graph.snapshot(0))
    while not state.done:
        try:
            train_step(state)
        except BudgetExhausted:
            break
        if graph_log is not None:
            graph_log.append(state.graph.snapshot(state.iteration))
    arch, val = best_center(state.graph)
    cfg = asdict(config)
    if cfg["warm_start_centers"] is not None:
        cfg["warm_start_centers"] = [format_arch(a) for a in cfg["warm_start_centers"]]
    return SearchResult(
        algorithm=algorithm,
        seed=config.seed,
        arch=arch,
        val=val,
        test=query_test(benchmark, arch),
        queries_used=state.budget.used,
        init_queries=state.init_queries,
        iterations=state.iteration,
        distinct_centers=len(state.seen_centers),
        trajectory=state.trajectory,
        config=cfg,
    )
