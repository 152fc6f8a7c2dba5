"""Architecture encoding, Hamming distance and subspace (ball) utilities.

An architecture is a tuple of ``L`` small integer codes, one per position.
Each position has its own candidate set, so spaces where some layers may be
absent (code 0 as placeholder) and cell spaces with a fixed operation list
share a single representation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels

PLACEHOLDER = 0
MAX_BALL = 10**6

Architecture = tuple  # tuple[int, ...]


class EncodingError(ValueError):
    """Architecture text or codes do not fit the search space."""


class ModificationError(ValueError):
    """A modification step references an illegal position or code."""


class BallTooLargeError(ValueError):
    """Enumeration would exceed the size guard."""


@dataclass(frozen=True)
class SearchSpaceSpec:
    """Per-position candidate code sets."""

    candidates: tuple

    def __post_init__(self):
        cands = tuple(tuple(int(c) for c in pos) for pos in self.candidates)
        if not cands:
            raise EncodingError("search space needs at least one position")
        for i, pos in enumerate(cands):
            if not pos:
                raise EncodingError(f"position {i} has no candidates")
            if len(set(pos)) != len(pos):
                raise EncodingError(f"position {i} has duplicate codes")
            if min(pos) < 0:
                raise EncodingError(f"position {i} has a negative code")
        object.__setattr__(self, "candidates", cands)
        lookup = tuple({c: k for k, c in enumerate(pos)} for pos in cands)
        object.__setattr__(self, "_lookup", lookup)

    @classmethod
    def uniform(cls, num_positions: int, num_codes: int) -> "SearchSpaceSpec":
        """``num_positions`` positions, each with codes ``0..num_codes-1``."""
        if num_positions < 1 or num_codes < 1:
            raise EncodingError("need at least one position and one code")
        return cls(tuple(tuple(range(num_codes)) for _ in range(num_positions)))

    @property
    def num_positions(self) -> int:
        return len(self.candidates)

    @property
    def sizes(self) -> tuple:
        return tuple(len(c) for c in self.candidates)

    @property
    def size(self) -> int:
        return math.prod(self.sizes)

    def index_of(self, position: int, code: int) -> int:
        try:
            return self._lookup[position][code]
        except (KeyError, IndexError):
            raise EncodingError(f"code {code} not legal at position {position}") from None

    def is_legal(self, position: int, code: int) -> bool:
        return 0 <= position < self.num_positions and code in self._lookup[position]

    def validate(self, arch: Sequence[int]) -> Architecture:
        arch = tuple(int(c) for c in arch)
        if len(arch) != self.num_positions:
            raise EncodingError(
                f"architecture has {len(arch)} codes, space has {self.num_positions} positions")
        for i, c in enumerate(arch):
            if c not in self._lookup[i]:
                raise EncodingError(f"code {c} not legal at position {i}")
        return arch

    def to_index(self, arch: Sequence[int]) -> tuple:
        return tuple(self._lookup[i][c] for i, c in enumerate(arch))

    def from_index(self, index: Sequence[int]) -> Architecture:
        return tuple(self.candidates[i][k] for i, k in enumerate(index))

    def index_matrix(self, archs: Iterable[Sequence[int]]) -> np.ndarray:
        rows = [self.to_index(a) for a in archs]
        return np.asarray(rows, dtype=np.int64).reshape(len(rows), self.num_positions)


@dataclass(frozen=True)
class Modification:
    """Ordered (position, new code) steps; later steps override earlier ones."""

    steps: tuple

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple((int(p), int(c)) for p, c in self.steps))

    def __len__(self):
        return len(self.steps)


def format_arch(arch: Sequence[int]) -> str:
    return ",".join(str(int(c)) for c in arch)


def parse_arch(text: str, spec: SearchSpaceSpec | None = None) -> Architecture:
    """Parse ``"3,0,5,5,1,2"``; validates against ``spec`` when given."""
    try:
        arch = tuple(int(tok) for tok in text.strip().split(","))
    except ValueError:
        raise EncodingError(f"bad architecture text {text!r}") from None
    return spec.validate(arch) if spec is not None else arch


def distance(a: Sequence[int], b: Sequence[int]) -> int:
    """Number of positions where ``a`` and ``b`` carry different codes."""
    if len(a) != len(b):
        raise EncodingError(f"length mismatch: {len(a)} vs {len(b)}")
    return sum(1 for x, y in zip(a, b) if x != y)


def distances_to(codes: np.ndarray, ref: Sequence[int]) -> np.ndarray:
    """Vectorized :func:`distance` from every row of ``codes`` to ``ref``."""
    codes = np.asarray(codes, dtype=np.int64)
    if codes.ndim != 2 or codes.shape[1] != len(ref):
        raise EncodingError("code matrix width does not match reference length")
    return _kernels.hamming_rows(codes, np.asarray(ref, dtype=np.int64))


def in_subspace(center: Sequence[int], candidate: Sequence[int], radius: int) -> bool:
    if radius < 0:
        raise ValueError("radius must be non-negative")
    return distance(center, candidate) <= radius


def apply_modification(center: Sequence[int], delta: Modification,
                       spec: SearchSpaceSpec | None = None) -> Architecture:
    """Apply each step of ``delta`` to ``center`` in order.

    Steps that re-select the current code are no-ops, so the result is always
    within distance ``len(delta)`` of the center.
    """
    out = list(center)
    for pos, code in delta.steps:
        if not 0 <= pos < len(out):
            raise ModificationError(f"position {pos} out of range for length {len(out)}")
        if spec is not None and not spec.is_legal(pos, code):
            raise ModificationError(f"code {code} not legal at position {pos}")
        out[pos] = code
    return tuple(out)


def random_architecture(spec: SearchSpaceSpec, rng: np.random.Generator) -> Architecture:
    return tuple(cands[int(rng.integers(len(cands)))] for cands in spec.candidates)


def exact_distance_counts(spec: SearchSpaceSpec) -> list:
    """``counts[k]`` = number of architectures at exactly distance k from any center.

    Coefficients of prod_i (1 + (c_i - 1) x); independent of the center.
    """
    poly = [1]
    for c in spec.sizes:
        nxt = [0] * (len(poly) + 1)
        for k, v in enumerate(poly):
            nxt[k] += v
            nxt[k + 1] += v * (c - 1)
        poly = nxt
    return poly


def ball_size(spec: SearchSpaceSpec, radius: int) -> int:
    """Exact number of architectures within ``radius`` of any center."""
    return sum(exact_distance_counts(spec)[: max(radius, -1) + 1])


def enumerate_ball(spec: SearchSpaceSpec, center: Sequence[int], radius: int) -> list:
    """All architectures within ``radius`` of ``center``, each exactly once."""
    center = spec.validate(center)
    if radius < 0:
        raise ValueError("radius must be non-negative")
    predicted = ball_size(spec, radius)
    if predicted > MAX_BALL:
        raise BallTooLargeError(f"ball has {predicted} members, guard is {MAX_BALL}")
    out = []
    positions = range(spec.num_positions)
    for k in range(min(radius, spec.num_positions) + 1):
        for chosen in itertools.combinations(positions, k):
            alternatives = [[c for c in spec.candidates[p] if c != center[p]] for p in chosen]
            for repl in itertools.product(*alternatives):
                arch = list(center)
                for p, c in zip(chosen, repl):
                    arch[p] = c
                out.append(tuple(arch))
    return out


def sample_ball(spec: SearchSpaceSpec, center: Sequence[int], radius: int,
                rng: np.random.Generator) -> Architecture:
    """Uniform draw from the distance-``radius`` ball around ``center``.

    Walks positions left to right, changing position i with probability
    proportional to the number of ball members that do so.
    """
    sizes = spec.sizes
    n = len(sizes)
    radius = min(radius, n)
    # ways[i][r]: completions of positions i.. using at most r changes
    ways = [[0] * (radius + 1) for _ in range(n + 1)]
    ways[n] = [1] * (radius + 1)
    for i in range(n - 1, -1, -1):
        for r in range(radius + 1):
            ways[i][r] = ways[i + 1][r] + ((sizes[i] - 1) * ways[i + 1][r - 1] if r else 0)
    out = list(center)
    left = radius
    for i in range(n):
        change = (sizes[i] - 1) * ways[i + 1][left - 1] if left else 0
        if change and rng.random() * ways[i][left] < change:
            others = [c for c in spec.candidates[i] if c != center[i]]
            out[i] = others[int(rng.integers(len(others)))]
            left -= 1
    return tuple(out)


def modification_space_size(num_positions: int, num_codes: int, radius: int) -> int:
    """Count of M-step modification patterns, C(L, M) * C**M."""
    if radius > num_positions:
        raise ValueError(f"radius {radius} exceeds number of positions {num_positions}")
    if radius < 0:
        raise ValueError("radius must be non-negative")
    return math.comb(num_positions, radius) * num_codes**radius


def all_architectures(spec: SearchSpaceSpec) -> list:
    if spec.size > MAX_BALL:
        raise BallTooLargeError(f"space has {spec.size} members, guard is {MAX_BALL}")
    return [tuple(a) for a in itertools.product(*spec.candidates)]
