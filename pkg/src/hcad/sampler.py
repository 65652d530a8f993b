"""Random-walk-with-restart subgraphs and positive/negative instance pairs.

Every pair draws its randomness from its own generator keyed by
(seed, purpose, round, target, polarity), so a pair never depends on which
other pairs were sampled before it.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.sparse.csgraph import connected_components

from .graph import AttributedGraph

POSITIVE = 1
NEGATIVE = 0

TRAIN_STREAM = 0
SCORE_STREAM = 1

MAX_NEGATIVE_RESAMPLES = 16


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class RwrConfig:
    subgraph_size: int = 4
    restart_prob: float = 0.1
    max_steps: int | None = None  # defaults to 64 * subgraph_size
    seed: int = 0

    def __post_init__(self):
        if self.subgraph_size < 1:
            raise ValueError("subgraph_size must be >= 1")
        if not 0.0 < self.restart_prob < 1.0:
            raise ValueError("restart_prob must lie in (0, 1)")
        if self.max_steps is not None and self.max_steps < self.subgraph_size:
            raise ValueError("max_steps must be >= subgraph_size")

    @property
    def steps(self) -> int:
        return 64 * self.subgraph_size if self.max_steps is None else self.max_steps


@dataclass(frozen=True, eq=False)
class InstancePair:
    target: int
    members: np.ndarray  # length c, members[0] is the walk start
    n_distinct: int  # members[n_distinct:] are padding copies of the start
    A_sub: np.ndarray  # c x c, induced adjacency among the distinct prefix
    X_sub: np.ndarray  # c x d, row 0 and padding rows zeroed
    polarity: int

    @property
    def label(self) -> int:
        return self.polarity


def pair_rng(seed: int, stream: int, round_index: int, target: int, polarity: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream, int(round_index), int(target), int(polarity)])


@lru_cache(maxsize=8)
def _component_sizes(g: AttributedGraph) -> np.ndarray:
    _, comp = connected_components(g.adjacency, directed=False)
    return np.bincount(comp)[comp]


@lru_cache(maxsize=8)
def _edge_keys(g: AttributedGraph) -> frozenset:
    return frozenset((g.edges[:, 0] * g.n + g.edges[:, 1]).tolist())


def rwr_subgraph(g: AttributedGraph, start: int, cfg: RwrConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Distinct nodes visited by a restarting walk from ``start``, padded with ``start`` to length c."""
    if not 0 <= start < g.n:
        raise SamplingError(f"start node {start} outside [0, {g.n})")
    if rng is None:
        rng = pair_rng(cfg.seed, TRAIN_STREAM, 0, start, POSITIVE)
    c = cfg.subgraph_size
    reachable = min(c, int(_component_sizes(g)[start]))
    indptr, indices = g.adjacency.indptr, g.adjacency.indices
    members = [start]
    seen = {start}
    cur = start
    steps = cfg.steps
    draws = rng.random((steps, 2))
    for step in range(steps):
        if len(members) >= reachable:
            break
        if draws[step, 0] < cfg.restart_prob:
            cur = start
            continue
        lo, hi = indptr[cur], indptr[cur + 1]
        cur = int(indices[lo + int(draws[step, 1] * (hi - lo))])
        if cur not in seen:
            seen.add(cur)
            members.append(cur)
    members.extend([start] * (c - len(members)))
    return np.asarray(members, dtype=np.int64)


def _build_pair(g: AttributedGraph, target: int, members: np.ndarray, polarity: int) -> InstancePair:
    c = members.size
    distinct = c
    for i in range(1, c):
        if members[i] == members[0]:
            distinct = i
            break
    A_sub = np.zeros((c, c))
    keys = _edge_keys(g)
    prefix = members[:distinct].tolist()
    for i in range(distinct):
        for j in range(i + 1, distinct):
            a, b = prefix[i], prefix[j]
            if (min(a, b) * g.n + max(a, b)) in keys:
                A_sub[i, j] = A_sub[j, i] = 1.0
    X_sub = np.zeros((c, g.d))
    X_sub[1:distinct] = g.X[members[1:distinct]]
    return InstancePair(int(target), members, distinct, A_sub, X_sub, polarity)


def make_pair(g: AttributedGraph, target: int, polarity: int, cfg: RwrConfig, rng: np.random.Generator | None = None) -> InstancePair:
    """Positive: subgraph around the target. Negative: subgraph around another node.

    The start node's attribute row is masked in both cases.
    """
    if rng is None:
        rng = pair_rng(cfg.seed, TRAIN_STREAM, 0, target, polarity)
    if polarity == POSITIVE:
        return _build_pair(g, target, rwr_subgraph(g, target, cfg, rng), POSITIVE)
    if polarity != NEGATIVE:
        raise ValueError(f"unknown polarity {polarity!r}")
    if g.n < 2:
        raise SamplingError("a negative pair needs at least two nodes")
    for _ in range(MAX_NEGATIVE_RESAMPLES):
        start = int(rng.integers(g.n - 1))
        start += start >= target
        members = rwr_subgraph(g, start, cfg, rng)
        if target not in members:
            break
    return _build_pair(g, target, members, NEGATIVE)


def sample_epoch(g: AttributedGraph, cfg: RwrConfig, epoch: int = 0, stream: int = TRAIN_STREAM) -> list[InstancePair]:
    """One positive and one negative pair per node, nodes in a seeded random order."""
    order = np.random.default_rng([int(cfg.seed), stream, int(epoch)]).permutation(g.n)
    pairs = []
    for v in order:
        v = int(v)
        for polarity in (POSITIVE, NEGATIVE):
            pairs.append(make_pair(g, v, polarity, cfg, pair_rng(cfg.seed, stream, epoch, v, polarity)))
    return pairs
