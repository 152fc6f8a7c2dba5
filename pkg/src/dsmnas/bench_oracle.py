"""Tabular benchmark oracle with query-budget metering.

Benchmark file format (UTF-8, LF)::

    #space L=6
    #pos 0 codes=0|1|2|3|4
    ...
    #name optional free text
    0,1,2,3,4,0 0.9123 0.9087

One record per line: architecture text, validation metric, test metric.
Metrics are fractions in [0, 1].
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .search_space import (
    MAX_BALL,
    BallTooLargeError,
    EncodingError,
    SearchSpaceSpec,
    format_arch,
    parse_arch,
)


class BenchmarkFormatError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class BenchmarkInvariantError(ValueError):
    pass


class MissingEntryError(KeyError):
    pass


class BudgetExhausted(RuntimeError):
    pass


class TabularBenchmark:
    """Immutable map architecture -> (val_metric, test_metric)."""

    def __init__(self, spec: SearchSpaceSpec, entries: dict, name: str = "benchmark"):
        self.spec = spec
        self.name = name
        clean = {}
        for arch, (val, test) in entries.items():
            try:
                arch = spec.validate(arch)
            except EncodingError as exc:
                raise BenchmarkInvariantError(str(exc)) from None
            val, test = float(val), float(test)
            for m in (val, test):
                if not (math.isfinite(m) and 0.0 <= m <= 1.0):
                    raise BenchmarkInvariantError(
                        f"metric {m} for {format_arch(arch)} outside [0, 1]")
            clean[arch] = (val, test)
        self._entries = clean

    def __len__(self):
        return len(self._entries)

    def __contains__(self, arch):
        return tuple(arch) in self._entries

    @property
    def entries(self) -> dict:
        return dict(self._entries)

    def architectures(self) -> list:
        return list(self._entries)

    @property
    def is_exhaustive(self) -> bool:
        return len(self._entries) == self.spec.size

    def lookup(self, arch: Sequence[int]) -> tuple:
        try:
            return self._entries[tuple(arch)]
        except KeyError:
            raise MissingEntryError(f"no entry for {format_arch(arch)}") from None

    def dense_val(self) -> np.ndarray:
        """Validation metrics in candidate-index product order (exhaustive only)."""
        cached = getattr(self, "_dense", None)
        if cached is None:
            if not self.is_exhaustive:
                raise BenchmarkInvariantError("dense view needs an exhaustive benchmark")
            cached = np.array([self._entries[a][0] for a in itertools.product(*self.spec.candidates)])
            self._dense = cached
        return cached

    def best(self, metric: str = "val") -> tuple:
        k = 0 if metric == "val" else 1
        arch = max(self._entries, key=lambda a: (self._entries[a][k], [-c for c in a]))
        return arch, self._entries[arch][k]


@dataclass
class QueryBudget:
    """Counts validation lookups; memoized repeats are free by default."""

    limit: int
    memoize: bool = True
    used: int = 0
    seen: set = field(default_factory=set)

    def __post_init__(self):
        if self.limit < 1:
            raise ValueError("budget limit must be positive")

    @property
    def remaining(self) -> int:
        return self.limit - self.used

    @property
    def exhausted(self) -> bool:
        return self.used >= self.limit

    def would_charge(self, arch) -> bool:
        return not (self.memoize and tuple(arch) in self.seen)


def query_val(benchmark: TabularBenchmark, budget: QueryBudget, arch) -> float:
    """Validation metric of ``arch``; charges one query unless memoized."""
    arch = tuple(arch)
    charge = budget.would_charge(arch)
    if charge and budget.exhausted:
        raise BudgetExhausted(f"query budget of {budget.limit} exhausted")
    val = benchmark.lookup(arch)[0]
    if charge:
        budget.used += 1
    budget.seen.add(arch)
    return val


def query_test(benchmark: TabularBenchmark, arch) -> float:
    """Test metric for final reporting; never charged."""
    return benchmark.lookup(arch)[1]


# --- file format ----------------------------------------------------------

def save_benchmark(benchmark: TabularBenchmark, path) -> None:
    spec = benchmark.spec
    lines = [f"#space L={spec.num_positions}"]
    for i, cands in enumerate(spec.candidates):
        lines.append(f"#pos {i} codes={'|'.join(str(c) for c in cands)}")
    lines.append(f"#name {benchmark.name}")
    for arch, (val, test) in benchmark.entries.items():
        lines.append(f"{format_arch(arch)} {val!r} {test!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_benchmark(path) -> TabularBenchmark:
    num_positions = None
    positions = {}
    name = os.path.splitext(os.path.basename(str(path)))[0]
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#space"):
                try:
                    key, value = line.split()[1].split("=")
                    assert key == "L"
                    num_positions = int(value)
                except (IndexError, ValueError, AssertionError):
                    raise BenchmarkFormatError("expected '#space L=<int>'", lineno) from None
            elif line.startswith("#pos"):
                try:
                    _, idx, codes = line.split()
                    key, value = codes.split("=")
                    assert key == "codes"
                    positions[int(idx)] = tuple(int(c) for c in value.split("|"))
                except (ValueError, AssertionError):
                    raise BenchmarkFormatError("expected '#pos <i> codes=<c1|c2|...>'", lineno) from None
            elif line.startswith("#name"):
                name = line[len("#name"):].strip() or name
            elif line.startswith("#"):
                continue
            else:
                parts = line.split()
                if len(parts) != 3:
                    raise BenchmarkFormatError("expected '<arch> <val> <test>'", lineno)
                try:
                    arch = parse_arch(parts[0])
                    val, test = float(parts[1]), float(parts[2])
                except (EncodingError, ValueError):
                    raise BenchmarkFormatError(f"unparseable record {line!r}", lineno) from None
                for m in (val, test):
                    if not (math.isfinite(m) and 0.0 <= m <= 1.0):
                        raise BenchmarkFormatError(f"metric {m} outside [0, 1]", lineno)
                records.append((lineno, arch, val, test))
    if num_positions is None:
        raise BenchmarkFormatError("missing '#space' header")
    if sorted(positions) != list(range(num_positions)):
        raise BenchmarkFormatError(f"expected '#pos' lines for positions 0..{num_positions - 1}")
    try:
        spec = SearchSpaceSpec(tuple(positions[i] for i in range(num_positions)))
    except EncodingError as exc:
        raise BenchmarkFormatError(str(exc)) from None
    entries = {}
    for lineno, arch, val, test in records:
        try:
            arch = spec.validate(arch)
        except EncodingError as exc:
            raise BenchmarkFormatError(str(exc), lineno) from None
        if arch in entries:
            raise BenchmarkFormatError(f"duplicate record for {format_arch(arch)}", lineno)
        entries[arch] = (val, test)
    return TabularBenchmark(spec, entries, name=name)


# --- synthetic generator --------------------------------------------------

def ring_pairs(num_positions: int) -> tuple:
    if num_positions < 2:
        return ()
    if num_positions == 2:
        return ((0, 1),)
    return tuple((i, (i + 1) % num_positions) for i in range(num_positions))


@dataclass(frozen=True)
class SyntheticBenchSpec:
    """Additive utilities plus pairwise interactions, squashed by a logistic.

    ``score = sum_i u_i(a_i) + interaction * sum_(i,j) w_ij(a_i, a_j) + noise``
    with ``u`` and ``w`` drawn from N(0, utility_scale**2).
    """

    space: SearchSpaceSpec
    utility_scale: float = 0.4
    interaction: float = 0.5
    pairs: tuple = None
    noise: float = 0.02
    test_gap: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.pairs is None:
            object.__setattr__(self, "pairs", ring_pairs(self.space.num_positions))
        object.__setattr__(self, "pairs", tuple((int(i), int(j)) for i, j in self.pairs))
        for name in ("utility_scale", "interaction", "noise", "test_gap"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
        if self.interaction < 0 or self.noise < 0 or self.test_gap < 0:
            raise ValueError("interaction, noise and test_gap must be non-negative")
        n = self.space.num_positions
        for i, j in self.pairs:
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise ValueError(f"bad interaction pair ({i}, {j})")


def default_synthetic_spec(seed: int = 0) -> SyntheticBenchSpec:
    return SyntheticBenchSpec(SearchSpaceSpec.uniform(6, 5), interaction=0.5, noise=0.02, seed=seed)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class SyntheticTerms:
    """The seeded random tables behind a synthetic benchmark."""

    def __init__(self, s: SyntheticBenchSpec):
        rng = np.random.default_rng(s.seed)
        width = max(s.space.sizes)
        n = s.space.num_positions
        self.unary = rng.normal(0.0, s.utility_scale, size=(n, width))
        self.pair_tables = rng.normal(0.0, s.utility_scale, size=(len(s.pairs), width, width))
        self.pairs = np.asarray(s.pairs, dtype=np.int64).reshape(-1, 2)
        self.interaction = s.interaction
        self.rng = rng

    def scores(self, index: np.ndarray) -> np.ndarray:
        return _kernels.additive_scores(index, self.unary, self.pairs, self.pair_tables, self.interaction)


def generate_synthetic(s: SyntheticBenchSpec, name: str | None = None) -> TabularBenchmark:
    space = s.space
    if space.size > MAX_BALL:
        raise BallTooLargeError(f"space has {space.size} members, guard is {MAX_BALL}")
    terms = SyntheticTerms(s)
    index = np.array(list(itertools.product(*[range(c) for c in space.sizes])), dtype=np.int64)
    index = index.reshape(len(index), space.num_positions)
    score = terms.scores(index) + terms.rng.normal(0.0, 1.0, size=len(index)) * s.noise
    test_score = score + terms.rng.normal(0.0, 1.0, size=len(index)) * s.test_gap
    val, test = _sigmoid(score), _sigmoid(test_score)
    entries = {space.from_index(row): (float(v), float(t)) for row, v, t in zip(index, val, test)}
    return TabularBenchmark(space, entries, name=name or f"synthetic-seed{s.seed}")


# --- locality -------------------------------------------------------------

@dataclass(frozen=True)
class LocalityRow:
    distance: int
    mean: float
    std: float
    count: int


def locality_report(benchmark: TabularBenchmark, num_pairs: int,
                    rng: np.random.Generator) -> list:
    """Mean and std of |val difference| for architecture pairs at each distance.

    Exhaustive benchmarks are sampled per distance: an anchor is drawn
    uniformly and ``d`` of its positions are switched to different codes, so
    every distance bucket gets ``num_pairs // D`` pairs. Sparse tables fall
    back to random entry pairs grouped by their distance.
    """
    if num_pairs < 100:
        raise ValueError("num_pairs must be at least 100")
    spec = benchmark.spec
    sizes = np.asarray(spec.sizes, dtype=np.int64)
    if benchmark.is_exhaustive:
        mutable = np.flatnonzero(sizes > 1)
        if len(mutable) == 0:
            return []
        dense = benchmark.dense_val()
        strides = np.ones(len(sizes), dtype=np.int64)
        for i in range(len(sizes) - 2, -1, -1):
            strides[i] = strides[i + 1] * sizes[i + 1]
        per = num_pairs // len(mutable)
        rows = []
        for d in range(1, len(mutable) + 1):
            anchor = rng.integers(0, sizes[None, :], size=(per, len(sizes)))
            keys = rng.random((per, len(mutable)))
            chosen = mutable[np.argsort(keys, axis=1)[:, :d]]
            partner = anchor.copy()
            r = np.arange(per)[:, None]
            shift = rng.integers(1, sizes[chosen])
            partner[r, chosen] = (anchor[r, chosen] + shift) % sizes[chosen]
            diff = np.abs(dense[anchor @ strides] - dense[partner @ strides])
            rows.append(LocalityRow(d, float(diff.mean()), float(diff.std(ddof=1)) if per > 1 else 0.0, per))
        return rows
    archs = benchmark.architectures()
    codes = np.asarray(archs, dtype=np.int64)
    vals = np.array([benchmark.lookup(a)[0] for a in archs])
    a = rng.integers(0, len(archs), size=num_pairs)
    b = rng.integers(0, len(archs), size=num_pairs)
    d = _kernels.hamming_pairs(codes[a], codes[b])
    diff = np.abs(vals[a] - vals[b])
    rows = []
    for dist in range(1, spec.num_positions + 1):
        sel = diff[d == dist]
        if len(sel):
            rows.append(LocalityRow(dist, float(sel.mean()),
                                    float(sel.std(ddof=1)) if len(sel) > 1 else 0.0, len(sel)))
    return rows
