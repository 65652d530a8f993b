"""Benchmark ground truth: clique (structural) and attribute-swap anomalies."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import AttributedGraph


class InjectionError(ValueError):
    pass


@dataclass(frozen=True)
class InjectionConfig:
    clique_size: int = 15  # p
    cliques: int = 0  # q
    attr_count: int | None = None  # k, defaults to p * q
    candidate_size: int = 50
    seed: int = 0

    @property
    def k(self) -> int:
        return self.clique_size * self.cliques if self.attr_count is None else self.attr_count

    def validate(self, n: int) -> None:
        if self.clique_size < 2:
            raise InjectionError("clique size must be >= 2")
        if self.cliques < 0 or self.k < 0:
            raise InjectionError("clique count and attribute count must be >= 0")
        if self.candidate_size < 1:
            raise InjectionError("candidate size must be >= 1")
        if self.clique_size * self.cliques + self.k > n:
            raise InjectionError(
                f"{self.clique_size}*{self.cliques} + {self.k} anomalies exceed the {n} available nodes"
            )


@dataclass(frozen=True)
class InjectionReport:
    structural_nodes: list[int]
    attribute_nodes: list[int]
    edges_added: int

    def to_dict(self) -> dict:
        return {
            "structural_nodes": self.structural_nodes,
            "attribute_nodes": self.attribute_nodes,
            "edges_added": self.edges_added,
            "anomalies": len(self.structural_nodes) + len(self.attribute_nodes),
        }


def _base_labels(g: AttributedGraph) -> np.ndarray:
    return np.zeros(g.n, dtype=np.int64) if g.labels is None else g.labels.copy()


def inject_structural(g: AttributedGraph, p: int, q: int, seed: int) -> tuple[AttributedGraph, list[int]]:
    """Pick q disjoint node sets of size p and make each a clique."""
    if p * q > g.n:
        raise InjectionError(f"need {p * q} clique nodes, graph has {g.n}")
    labels = _base_labels(g)
    if q == 0:
        return g.with_(labels=labels), []
    rng = np.random.default_rng(seed)
    chosen = rng.choice(g.n, size=p * q, replace=False)
    iu, ju = np.triu_indices(p, k=1)
    new_edges = [g.edges]
    for c in range(q):
        members = chosen[c * p:(c + 1) * p]
        new_edges.append(np.stack([members[iu], members[ju]], axis=1))
    labels[chosen] = 1
    out = g.with_(edges=np.concatenate(new_edges), labels=labels)
    return out, [int(v) for v in chosen]


def inject_attribute(
    g: AttributedGraph, k: int, candidate_size: int, seed: int, exclude=()
) -> tuple[AttributedGraph, list[int]]:
    """Overwrite k rows with the attributes of the farthest of candidate_size sampled nodes."""
    exclude = np.asarray(sorted(set(int(v) for v in exclude)), dtype=np.int64)
    pool = np.setdiff1d(np.arange(g.n), exclude)
    if k > pool.size:
        raise InjectionError(f"need {k} attribute targets, only {pool.size} eligible nodes")
    labels = _base_labels(g)
    if k == 0:
        return g.with_(labels=labels), []
    rng = np.random.default_rng(seed)
    targets = rng.choice(pool, size=k, replace=False)
    X_src = g.X
    X = g.X.copy()
    for v in targets:
        others = pool[pool != v]
        if others.size == 0:
            raise InjectionError("no candidate donors available")
        cand = rng.choice(others, size=min(candidate_size, others.size), replace=False)
        dist = np.linalg.norm(X_src[cand] - X_src[v], axis=1)
        X[v] = X_src[cand[int(np.argmax(dist))]]
    labels[targets] = 1
    return g.with_(X=X, labels=labels), [int(v) for v in targets]


def inject_combined(g: AttributedGraph, config: InjectionConfig) -> tuple[AttributedGraph, InjectionReport]:
    """Structural injection first, then attribute injection on the remaining nodes."""
    config.validate(g.n)
    g = g.with_(labels=None)
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    s_seed = int(seeds[0].generate_state(1)[0])
    a_seed = int(seeds[1].generate_state(1)[0])
    g1, structural = inject_structural(g, config.clique_size, config.cliques, s_seed)
    g2, attribute = inject_attribute(g1, config.k, config.candidate_size, a_seed, exclude=structural)
    report = InjectionReport(structural, attribute, g2.num_edges - g.num_edges)
    return g2, report
