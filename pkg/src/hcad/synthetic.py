"""Synthetic attributed graphs for tests, fixtures and desk-scale experiments."""
from __future__ import annotations

import numpy as np

from .graph import AttributedGraph, from_edges


def community_graph(n: int = 200, communities: int = 4, d: int = 32, avg_degree: float = 6.0,
                    mixing: float = 0.05, topic_prob: float = 0.6, noise_prob: float = 0.02,
                    seed: int = 0) -> AttributedGraph:
    """Stochastic block model with community-specific bag-of-words attributes.

    Each community owns a disjoint block of d // communities attribute columns;
    a node switches on each column of its own block with ``topic_prob`` and any
    other column with ``noise_prob``. ``mixing`` is the fraction of expected
    edges that cross communities.
    """
    rng = np.random.default_rng(seed)
    comm = np.arange(n) % communities
    rng.shuffle(comm)
    size = n / communities
    p_in = avg_degree * (1 - mixing) / max(size - 1, 1)
    p_out = avg_degree * mixing / max(n - size, 1)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(comm[iu] == comm[ju], p_in, p_out)
    keep = rng.random(iu.size) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)

    block = d // communities
    X = (rng.random((n, d)) < noise_prob).astype(np.float64)
    for c in range(communities):
        rows = np.flatnonzero(comm == c)
        cols = slice(c * block, (c + 1) * block)
        X[rows, cols] = (rng.random((rows.size, block)) < topic_prob).astype(np.float64)
    return from_edges(n, edges, X)


def cora_sized_graph(seed: int = 0) -> AttributedGraph:
    """Same node count, edge density and attribute width as the CORA citation graph."""
    return community_graph(n=2708, communities=7, d=1433, avg_degree=4.0, mixing=0.2,
                           topic_prob=0.05, noise_prob=0.008, seed=seed)


def star_graph(leaves: int, d: int = 2) -> AttributedGraph:
    edges = [(0, i) for i in range(1, leaves + 1)]
    return from_edges(leaves + 1, edges, np.zeros((leaves + 1, d)))


def cycle_graph(n: int, d: int = 2) -> AttributedGraph:
    edges = [(i, (i + 1) % n) for i in range(n)]
    return from_edges(n, edges, np.zeros((n, d)))


def path_graph(n: int, d: int = 2) -> AttributedGraph:
    edges = [(i, i + 1) for i in range(n - 1)]
    return from_edges(n, edges, np.zeros((n, d)))


def tree_like_graph(n: int = 300, extra_edges: int = 5, d: int = 4, seed: int = 0) -> AttributedGraph:
    """Random recursive tree plus a few shortcut edges: small four-point delta."""
    rng = np.random.default_rng(seed)
    parents = [int(rng.integers(i)) for i in range(1, n)]
    edges = [(p, i) for i, p in zip(range(1, n), parents)]
    for _ in range(extra_edges):
        a, b = rng.choice(n, size=2, replace=False)
        edges.append((int(a), int(b)))
    return from_edges(n, edges, rng.random((n, d)))


def grid_graph(side: int = 18, d: int = 4, seed: int = 0) -> AttributedGraph:
    """side x side lattice: delta grows linearly with the side length."""
    rng = np.random.default_rng(seed)
    idx = np.arange(side * side).reshape(side, side)
    edges = [(int(idx[i, j]), int(idx[i, j + 1])) for i in range(side) for j in range(side - 1)]
    edges += [(int(idx[i, j]), int(idx[i + 1, j])) for i in range(side - 1) for j in range(side)]
    return from_edges(side * side, edges, rng.random((side * side, d)))
