"""Attributed graph container, text I/O, adjacency normalization and Gromov hyperbolicity."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path

log = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """Malformed input line, out-of-range node index or inconsistent file lengths."""


@dataclass(frozen=True, eq=False)
class AttributedGraph:
    """Undirected, unweighted graph with a dense attribute matrix.

    ``edges`` holds each undirected edge once as (i, j) with i < j, sorted.
    """

    n: int
    edges: np.ndarray
    X: np.ndarray
    labels: np.ndarray | None = None
    self_loops_dropped: int = field(default=0, compare=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != self.n:
            raise GraphFormatError(f"attribute matrix has {X.shape[0] if X.ndim else 0} rows, expected {self.n}")
        if not np.isfinite(X).all():
            raise GraphFormatError("attribute matrix has non-finite entries")
        if edges.size and (edges.min() < 0 or edges.max() >= self.n):
            raise GraphFormatError(f"edge endpoint outside [0, {self.n})")
        edges = _canonical_edges(edges)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "X", X)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if labels.shape[0] != self.n:
                raise GraphFormatError(f"label vector has length {labels.shape[0]}, expected {self.n}")
            if not np.isin(labels, (0, 1)).all():
                raise GraphFormatError("labels must be 0 or 1")
            object.__setattr__(self, "labels", labels)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency in CSR form with sorted column indices."""
        i, j = self.edges[:, 0], self.edges[:, 1]
        rows = np.concatenate([i, j])
        cols = np.concatenate([j, i])
        A = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(self.n, self.n))
        A.sort_indices()
        return A

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    def neighbors(self, v: int) -> np.ndarray:
        A = self.adjacency
        return A.indices[A.indptr[v]:A.indptr[v + 1]]

    def with_(self, **changes) -> "AttributedGraph":
        return replace(self, **changes)


def _canonical_edges(edges: np.ndarray) -> np.ndarray:
    if edges.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    keep = lo != hi
    pairs = np.unique(np.stack([lo[keep], hi[keep]], axis=1), axis=0)
    return pairs.reshape(-1, 2)


def from_edges(n: int, edges, X, labels=None) -> AttributedGraph:
    """Build a graph, dropping self-loops and duplicate/reversed edges."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    loops = int((edges[:, 0] == edges[:, 1]).sum()) if edges.size else 0
    return AttributedGraph(n, edges, X, labels, self_loops_dropped=loops)


def _read_edges(path: Path) -> list[tuple[int, int]]:
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphFormatError(f"{path}:{lineno}: expected two node indices, got {line!r}")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-integer node index in {line!r}") from None
            if a < 0 or b < 0:
                raise GraphFormatError(f"{path}:{lineno}: negative node index in {line!r}")
            edges.append((a, b))
    return edges


def _read_attributes(path: Path) -> np.ndarray:
    rows = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-numeric attribute value") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise GraphFormatError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
            rows.append(row)
    if not rows:
        raise GraphFormatError(f"{path}: no attribute rows")
    X = np.asarray(rows, dtype=np.float64)
    if not np.isfinite(X).all():
        raise GraphFormatError(f"{path}: non-finite attribute value")
    return X


def _read_labels(path: Path) -> np.ndarray:
    labels = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line not in ("0", "1"):
                raise GraphFormatError(f"{path}:{lineno}: label must be 0 or 1, got {line!r}")
            labels.append(int(line))
    return np.asarray(labels, dtype=np.int64)


def load_graph(edge_path, attr_path, label_path=None) -> AttributedGraph:
    """Read the edge list, attribute CSV and optional label file."""
    edge_path, attr_path = Path(edge_path), Path(attr_path)
    X = _read_attributes(attr_path)
    n = X.shape[0]
    edges = _read_edges(edge_path)
    for a, b in edges:
        if a >= n or b >= n:
            raise GraphFormatError(f"{edge_path}: node index {max(a, b)} out of range for n={n}")
    labels = None
    if label_path is not None:
        labels = _read_labels(Path(label_path))
        if labels.shape[0] != n:
            raise GraphFormatError(
                f"{label_path}: {labels.shape[0]} labels but {attr_path} has {n} rows"
            )
    g = from_edges(n, edges, X, labels)
    if g.self_loops_dropped:
        log.warning("dropped %d self-loop(s) from %s", g.self_loops_dropped, edge_path)
    return g


def save_graph(g: AttributedGraph, edge_path, attr_path, label_path=None) -> None:
    with open(edge_path, "w", encoding="utf-8", newline="\n") as fh:
        for a, b in g.edges:
            fh.write(f"{a} {b}\n")
    with open(attr_path, "w", encoding="utf-8", newline="\n") as fh:
        for row in g.X:
            fh.write(",".join(repr(float(v)) if not float(v).is_integer() else str(int(v)) for v in row))
            fh.write("\n")
    if label_path is not None:
        if g.labels is None:
            raise GraphFormatError("graph has no labels to write")
        with open(label_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(f"{int(y)}\n" for y in g.labels)


def normalize_adjacency(g: AttributedGraph) -> sp.csr_matrix:
    """D~^{-1/2} (A + I) D~^{-1/2} with D~ the degree matrix of A + I."""
    return normalize_dense_or_sparse(g.adjacency)


def normalize_dense_or_sparse(A):
    # each entry as a_ij / sqrt(d_i * d_j): the product commutes, so the result is bitwise symmetric
    if sp.issparse(A):
        A_hat = (A + sp.eye(A.shape[0], format="csr")).tocoo()
        deg = np.asarray(A_hat.sum(axis=1)).ravel()
        data = A_hat.data / np.sqrt(deg[A_hat.row] * deg[A_hat.col])
        out = sp.csr_matrix((data, (A_hat.row, A_hat.col)), shape=A_hat.shape)
        out.sort_indices()
        return out
    A = np.asarray(A, dtype=np.float64)
    A_hat = A + np.eye(A.shape[-1])
    deg = A_hat.sum(-1)
    return A_hat / np.sqrt(deg[..., :, None] * deg[..., None, :])


def shortest_paths(g: AttributedGraph, sources) -> np.ndarray:
    """Hop distances from each source (rows) to every node; unreachable is ``np.inf``."""
    sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    if sources.size == 0:
        return np.zeros((0, g.n))
    return shortest_path(g.adjacency, method="D", unweighted=True, directed=False, indices=sources)


@dataclass(frozen=True)
class HyperbolicityReport:
    delta: float
    quadruples_examined: int
    exact: bool

    def to_dict(self) -> dict:
        return {"delta": self.delta, "quadruples_examined": self.quadruples_examined, "exact": self.exact}


def largest_component(g: AttributedGraph) -> np.ndarray:
    """Node ids of the largest connected component (smallest label wins ties)."""
    _, comp = connected_components(g.adjacency, directed=False)
    sizes = np.bincount(comp)
    return np.flatnonzero(comp == int(np.argmax(sizes)))


def _quad_delta(D01, D23, D02, D13, D03, D12) -> np.ndarray:
    s = np.sort(np.stack([D01 + D23, D02 + D13, D03 + D12], axis=-1), axis=-1)
    return (s[..., 2] - s[..., 1]) / 2.0


def four_point_delta(dist: np.ndarray, quads: np.ndarray) -> np.ndarray:
    """Per-quadruple delta from a full distance matrix; quads is (m, 4)."""
    a, b, c, d = quads.T
    return _quad_delta(dist[a, b], dist[c, d], dist[a, c], dist[b, d], dist[a, d], dist[b, c])


_FULL_MATRIX_LIMIT = 3000
_CHUNK = 512


def gromov_hyperbolicity(g: AttributedGraph, sample_budget: int = 100_000, seed: int = 0) -> HyperbolicityReport:
    """Four-point delta on the largest connected component.

    Exhaustive when C(n, 4) <= sample_budget, otherwise the maximum over
    ``sample_budget`` uniformly drawn quadruples (a lower bound).
    """
    if sample_budget < 1:
        raise ValueError("sample_budget must be >= 1")
    nodes = largest_component(g)
    m = nodes.size
    if m < 4:
        return HyperbolicityReport(0.0, 0, True)
    total = math.comb(m, 4)
    rng = np.random.default_rng(seed)
    if total <= sample_budget:
        dist = shortest_paths(g, nodes)[:, nodes]
        best = 0.0
        combos = itertools.combinations(range(m), 4)
        while True:
            block = np.fromiter(itertools.chain.from_iterable(itertools.islice(combos, 200_000)), dtype=np.int64)
            if block.size == 0:
                break
            best = max(best, float(four_point_delta(dist, block.reshape(-1, 4)).max()))
        return HyperbolicityReport(best, total, True)

    quads = rng.integers(0, m, size=(sample_budget, 4))
    while True:
        s = np.sort(quads, axis=1)
        bad = (np.diff(s, axis=1) == 0).any(axis=1)
        if not bad.any():
            break
        quads[bad] = rng.integers(0, m, size=(int(bad.sum()), 4))
    if m <= _FULL_MATRIX_LIMIT:
        dist = shortest_paths(g, nodes)[:, nodes]
        best = float(four_point_delta(dist, quads).max())
    else:
        best = 0.0
        for start in range(0, sample_budget, _CHUNK):
            q = quads[start:start + _CHUNK]
            src, inv = np.unique(q[:, :3], return_inverse=True)
            rows = shortest_paths(g, nodes[src])[:, nodes]
            inv = inv.reshape(-1, 3)
            ar = inv[:, 0]
            br = inv[:, 1]
            cr = inv[:, 2]
            a, b, c, d = q.T
            deltas = _quad_delta(rows[ar, b], rows[cr, d], rows[ar, c], rows[br, d], rows[ar, d], rows[br, c])
            best = max(best, float(deltas.max()))
    return HyperbolicityReport(best, sample_budget, False)
