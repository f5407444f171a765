"""Centrality on the shared-patient graph, quarterly rank evolution and concordance.

Complexity notes: betweenness is exact Brandes accumulation, O(N M) for hop
distances (batched sparse products over sources) and O(N M log N) in weighted
mode (pure Python Dijkstra). Harmonic closeness needs one breadth-first search
per node. Eigenvector centrality is power iteration on the weighted
adjacency restricted to one connected component.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path

from .graph import GraphError, PhysicianGraph, build_shared_patient_graph, density
from .ingest import ClaimRecord, DateWindow, partition_quarters
from .ranking import RankingRow, RankingTable, rank_scores


class Metric(str, Enum):
    DEGREE = "degree"
    EIGENVECTOR = "eigenvector"
    BETWEENNESS = "betweenness"
    CLOSENESS = "closeness"


class ConvergenceError(RuntimeError):
    def __init__(self, iterations: int, residual: float, tol: float):
        super().__init__(f"power iteration did not converge: {iterations} iterations, residual {residual:.3e} > tol {tol:.1e}")
        self.iterations = iterations
        self.residual = residual
        self.tol = tol


@dataclass
class CentralityVector:
    metric: Metric
    values: dict[str, float]
    graph_fingerprint: str
    info: dict = field(default_factory=dict)

    def ranking(self, top_n: int | None = None) -> list[str]:
        return [n for n, _ in rank_scores(self.values, top_n)]


def degree_centrality(graph: PhysicianGraph, weighted: bool = True) -> CentralityVector:
    """Node strength (shared-patient total) or, unweighted, neighbor count."""
    vals = {n: float(graph.strength(n) if weighted else graph.degree(n)) for n in graph.nodes}
    return CentralityVector(Metric.DEGREE, vals, graph.fingerprint(), {"weighted": weighted})


def _component_nodes(graph: PhysicianGraph, nodes: list[str], mat: sp.csr_matrix) -> tuple[np.ndarray, int]:
    n_comp, labels = connected_components(mat, directed=False)
    sizes = np.bincount(labels, minlength=n_comp)
    # largest component; ties go to the one holding the smallest node ID
    # (nodes are sorted, so that is the smallest first index)
    first_index = np.full(n_comp, len(nodes))
    for i in range(len(nodes) - 1, -1, -1):
        first_index[labels[i]] = i
    best = min(range(n_comp), key=lambda c: (-sizes[c], first_index[c]))
    return labels, best


def eigenvector_centrality(graph: PhysicianGraph, tol: float = 1e-10, max_iter: int = 10_000,
                           component: str = "largest") -> CentralityVector:
    """Leading eigenvector of the weighted adjacency, scaled to max 1.

    ``component="largest"`` iterates on the largest connected component and
    gives every other node 0; ``"each"`` solves each component separately and
    scales each to max 1. Iteration uses ``A + c I`` with ``c`` the largest
    edge weight, which shares the Perron vector of ``A`` but cannot oscillate
    on bipartite components.
    """
    if graph.n_nodes == 0:
        raise GraphError("eigenvector centrality of an empty graph")
    nodes, mat = graph.to_sparse()
    labels, best = _component_nodes(graph, nodes, mat)
    values = np.zeros(len(nodes))
    comps = [best] if component == "largest" else sorted(set(labels.tolist()))
    iterations = {}
    for c in comps:
        idx = np.flatnonzero(labels == c)
        sub = mat[idx][:, idx]
        vec, it = _power_iteration(sub, tol, max_iter)
        values[idx] = vec
        iterations[int(c)] = it
    info = {"component": component, "iterations": iterations[best] if component == "largest" else iterations,
            "component_size": int((labels == best).sum())}
    return CentralityVector(Metric.EIGENVECTOR, dict(zip(nodes, values.tolist())), graph.fingerprint(), info)


def _power_iteration(mat: sp.csr_matrix, tol: float, max_iter: int) -> tuple[np.ndarray, int]:
    n = mat.shape[0]
    if n == 1 or mat.nnz == 0:
        return np.ones(n), 0
    shift = float(mat.data.max())
    x = np.full(n, 1.0)
    residual = math.inf
    for it in range(1, max_iter + 1):
        y = mat @ x + shift * x
        y /= y.max()
        residual = float(np.abs(y - x).max())
        x = y
        if residual < tol:
            return x, it
    raise ConvergenceError(max_iter, residual, tol)


def betweenness_centrality(graph: PhysicianGraph, weighted: bool = False, batch_size: int = 256) -> CentralityVector:
    """Exact betweenness, each unordered pair counted once (no normalization).

    Hop counts by default; ``weighted=True`` uses distance ``1 / weight`` so
    that heavier shared-patient links are shorter.
    """
    nodes = graph.nodes
    if weighted:
        vals = _brandes_weighted(graph, nodes)
    else:
        _, mat = graph.to_sparse(nodes, weighted=False)
        vals = _brandes_unweighted(mat, batch_size)
    return CentralityVector(Metric.BETWEENNESS, dict(zip(nodes, vals.tolist())), graph.fingerprint(), {"weighted": weighted})


def _brandes_unweighted(adj: sp.csr_matrix, batch_size: int) -> np.ndarray:
    """Brandes accumulation for a batch of sources at once.

    Columns of the dense ``n x b`` arrays are sources. Level ``d`` holds the
    nodes at hop distance ``d``; path counts move forward one level per sparse
    product and dependencies move back the same way.
    """
    n = adj.shape[0]
    bc = np.zeros(n)
    if n < 3:
        return bc
    adj = adj.tocsr()
    for start in range(0, n, batch_size):
        srcs = np.arange(start, min(start + batch_size, n))
        b = srcs.size
        dist = np.full((n, b), -1, dtype=np.int64)
        sigma = np.zeros((n, b))
        dist[srcs, np.arange(b)] = 0
        sigma[srcs, np.arange(b)] = 1.0
        frontier = sigma.copy()
        level = 0
        while True:
            reach = adj @ frontier
            new = (reach > 0) & (dist < 0)
            if not new.any():
                break
            level += 1
            dist[new] = level
            sigma[new] = reach[new]
            frontier = np.where(new, sigma, 0.0)
        delta = np.zeros((n, b))
        with np.errstate(divide="ignore", invalid="ignore"):
            for d in range(level, 0, -1):
                at_d = dist == d
                coeff = np.where(at_d, (1.0 + delta) / sigma, 0.0)
                pull = adj @ coeff
                at_prev = dist == d - 1
                delta[at_prev] += (sigma * pull)[at_prev]
        delta[srcs, np.arange(b)] = 0.0
        bc += delta.sum(axis=1)
    return bc / 2.0


def _brandes_weighted(graph: PhysicianGraph, nodes: list[str]) -> np.ndarray:
    index = {v: i for i, v in enumerate(nodes)}
    nbrs = [[(index[u], 1.0 / w) for u, w in sorted(graph.adj[v].items())] for v in nodes]
    n = len(nodes)
    bc = np.zeros(n)
    for s in range(n):
        dist = [math.inf] * n
        sigma = [0.0] * n
        preds: list[list[int]] = [[] for _ in range(n)]
        dist[s] = 0.0
        sigma[s] = 1.0
        order = []
        heap = [(0.0, s)]
        done = [False] * n
        while heap:
            d, v = heapq.heappop(heap)
            if done[v]:
                continue
            done[v] = True
            order.append(v)
            for u, length in nbrs[v]:
                alt = d + length
                cur = dist[u]
                if alt < cur and not math.isclose(alt, cur, rel_tol=1e-12):
                    dist[u] = alt
                    sigma[u] = sigma[v]
                    preds[u] = [v]
                    heapq.heappush(heap, (alt, u))
                elif math.isclose(alt, cur, rel_tol=1e-12) and not done[u]:
                    sigma[u] += sigma[v]
                    preds[u].append(v)
        delta = [0.0] * n
        for w in reversed(order):
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                bc[w] += delta[w]
    return bc / 2.0


def closeness_centrality(graph: PhysicianGraph, chunk: int = 512) -> CentralityVector:
    """Harmonic closeness over hop distances: sum of 1/d, unreachable terms 0."""
    nodes, mat = graph.to_sparse(weighted=False)
    n = len(nodes)
    vals = np.zeros(n)
    for start in range(0, n, chunk):
        idx = np.arange(start, min(start + chunk, n))
        dist = shortest_path(mat, directed=False, unweighted=True, indices=idx)
        with np.errstate(divide="ignore"):
            inv = 1.0 / dist
        inv[~np.isfinite(inv)] = 0.0
        vals[idx] = inv.sum(axis=1)
    return CentralityVector(Metric.CLOSENESS, dict(zip(nodes, vals.tolist())), graph.fingerprint())


def compute(graph: PhysicianGraph, metric: Metric | str, **kwargs) -> CentralityVector:
    metric = Metric(metric)
    if metric is Metric.DEGREE:
        return degree_centrality(graph, **kwargs)
    if metric is Metric.EIGENVECTOR:
        return eigenvector_centrality(graph, **kwargs)
    if metric is Metric.BETWEENNESS:
        return betweenness_centrality(graph, **kwargs)
    return closeness_centrality(graph, **kwargs)


def quarterly_centrality_ranking(records: Iterable[ClaimRecord], window: DateWindow | None = None,
                                 metric: Metric | str = Metric.EIGENVECTOR, top_n: int = 10,
                                 min_weight: int = 1, **kwargs) -> RankingTable:
    """Rebuild the shared-patient graph per quarter and rank by ``metric``."""
    records = list(records)
    window = window or DateWindow.covering(records)
    if window is None:
        return RankingTable()
    parts = partition_quarters(records, window).partitions
    table = RankingTable(columns=window.quarters)
    for q in table.columns:
        recs = parts.get(q, [])
        if not recs:
            table.empty.add(q)
            continue
        vec = compute(build_shared_patient_graph(recs, min_weight), metric, **kwargs)
        ranked = rank_scores(vec.values, top_n)
        if len(ranked) < top_n:
            table.short.add(q)
        for rank, (node, value) in enumerate(ranked, start=1):
            table.rows.append(RankingRow(node, value, q, rank))
    return table


@dataclass
class ConcordanceReport:
    metric_a: Metric
    metric_b: Metric
    k: int
    overlap: int
    exact_matches: int


def concordance(vectors: Sequence[CentralityVector], k: int) -> list[ConcordanceReport]:
    """Top-k set overlap and same-rank agreement for every pair of vectors."""
    if len(vectors) < 2:
        raise ValueError("concordance needs at least two vectors")
    prints = {v.graph_fingerprint for v in vectors}
    if len(prints) != 1:
        raise GraphError(f"vectors computed on different graphs: {sorted(prints)}")
    tops = [v.ranking(k) for v in vectors]
    out = []
    for (i, a), (j, b) in combinations(enumerate(tops), 2):
        overlap = len(set(a) & set(b))
        exact = sum(x == y for x, y in zip(a, b))
        out.append(ConcordanceReport(vectors[i].metric, vectors[j].metric, k, overlap, exact))
    return out


@dataclass
class DenseCore:
    graph: PhysicianGraph
    density: float
    labels: dict[str, float]


def dense_core(graph: PhysicianGraph, vector: CentralityVector, size: int | None = None,
               min_density: float | None = None, max_size: int = 1000) -> DenseCore:
    """Induced subgraph on the top-ranked nodes.

    Either ``size`` nodes are taken, or (with ``min_density``) the largest
    prefix of the ranking (2 to ``max_size`` nodes) whose induced density
    reaches the threshold.
    """
    if (size is None) == (min_density is None):
        raise ValueError("give exactly one of size or min_density")
    ranking = vector.ranking()
    if size is not None:
        if size > graph.n_nodes:
            raise GraphError(f"core size {size} exceeds {graph.n_nodes} nodes")
        if size < 2:
            raise GraphError("core size must be at least 2")
        chosen = ranking[:size]
    else:
        chosen = None
        links = 0
        for i in range(min(len(ranking), max_size)):
            links += sum(1 for u in ranking[:i] if u in graph.adj[ranking[i]])
            if i >= 1 and 2 * links / ((i + 1) * i) >= min_density:
                chosen = ranking[: i + 1]
        if chosen is None:
            raise GraphError(f"no prefix of the ranking reaches density {min_density}")
    sub = graph.subgraph(chosen)
    return DenseCore(sub, density(sub), {n: vector.values[n] for n in sorted(chosen)})


def write_vectors_csv(vectors: Sequence[CentralityVector], path: str | Path) -> None:
    nodes = sorted(set().union(*(v.values for v in vectors))) if vectors else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["physician_id"] + [v.metric.value for v in vectors])
        for n in nodes:
            w.writerow([n] + [repr(float(v.values.get(n, 0.0))) for v in vectors])


def write_concordance_csv(reports: Iterable[ConcordanceReport], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric_a", "metric_b", "k", "overlap", "exact_position"])
        for r in reports:
            w.writerow([r.metric_a.value, r.metric_b.value, r.k, r.overlap, r.exact_matches])
