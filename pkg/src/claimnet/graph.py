"""Physician-physician graphs built from consultation records.

Two views of the same claims are provided:

* :class:`PhysicianGraph`, undirected, where the weight of ``{i, j}`` is the
  number of distinct patients who consulted both physicians;
* :class:`ReferralGraph`, directed, where the weight of ``i -> j`` is the
  number of distinct patients with a consultation at ``i`` strictly before a
  consultation at ``j`` (ordered by ``(event_date, sequence_no)``).
"""

from __future__ import annotations

import hashlib
import math
from bisect import bisect_right
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np
import scipy.sparse as sp

from .ingest import ClaimRecord, physician_attributes


class GraphError(ValueError):
    """Raised for inputs on which a graph quantity is undefined."""


@dataclass
class _BaseGraph:
    adj: dict[str, dict[str, int]] = field(default_factory=dict)
    attrs: dict[str, dict[str, str | None]] = field(default_factory=dict)

    directed = False

    @property
    def nodes(self) -> list[str]:
        return sorted(self.adj)

    @property
    def n_nodes(self) -> int:
        return len(self.adj)

    def __contains__(self, node: str) -> bool:
        return node in self.adj

    def weight(self, u: str, v: str) -> int:
        return self.adj.get(u, {}).get(v, 0)

    def neighbors(self, node: str) -> list[str]:
        return sorted(self.adj[node])

    def attr(self, node: str, name: str) -> str | None:
        return self.attrs.get(node, {}).get(name)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(b"D" if self.directed else b"U")
        for n in self.nodes:
            h.update(n.encode() + b"\0")
        for u, v, w in self.edges():
            h.update(f"{u}\t{v}\t{w}\n".encode())
        return h.hexdigest()[:16]

    def edges(self) -> Iterator[tuple[str, str, int]]:
        raise NotImplementedError

    @property
    def n_edges(self) -> int:
        return sum(1 for _ in self.edges())

    def subgraph(self, keep: Iterable[str]):
        keep = set(keep) & set(self.adj)
        adj = {u: {v: w for v, w in self.adj[u].items() if v in keep} for u in keep}
        attrs = {u: dict(self.attrs.get(u, {})) for u in keep}
        return self._derive(adj, attrs)

    def _derive(self, adj, attrs):
        return type(self)(adj=adj, attrs=attrs)


@dataclass
class PhysicianGraph(_BaseGraph):
    """Undirected shared-patient graph; ``adj`` is stored symmetrically."""

    directed = False

    def edges(self) -> Iterator[tuple[str, str, int]]:
        for u in self.nodes:
            for v in sorted(self.adj[u]):
                if u < v:
                    yield u, v, self.adj[u][v]

    @property
    def n_edges(self) -> int:
        return sum(len(nb) for nb in self.adj.values()) // 2

    def degree(self, node: str) -> int:
        return len(self.adj[node])

    def strength(self, node: str) -> int:
        return sum(self.adj[node].values())

    def to_sparse(self, order: list[str] | None = None, weighted: bool = True) -> tuple[list[str], sp.csr_matrix]:
        order = self.nodes if order is None else order
        index = {n: i for i, n in enumerate(order)}
        rows, cols, vals = [], [], []
        for u in order:
            iu = index[u]
            for v, w in self.adj[u].items():
                if v in index:
                    rows.append(iu)
                    cols.append(index[v])
                    vals.append(float(w) if weighted else 1.0)
        n = len(order)
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=float)
        return order, mat


@dataclass
class ReferralGraph(_BaseGraph):
    """Directed chronological graph; ``adj[i][j]`` is w_ij.

    ``gaps[(i, j)]`` holds one day-gap per contributing patient (the earliest
    qualifying i-then-j pair of that patient), so ``len(gaps[(i, j)]) == w_ij``.
    """

    gaps: dict[tuple[str, str], list[int]] = field(default_factory=dict)

    directed = True

    def edges(self) -> Iterator[tuple[str, str, int]]:
        for u in self.nodes:
            for v in sorted(self.adj[u]):
                yield u, v, self.adj[u][v]

    @property
    def n_edges(self) -> int:
        return sum(len(nb) for nb in self.adj.values())

    def pair_gaps(self, a: str, b: str) -> list[int]:
        return self.gaps.get((a, b), []) + self.gaps.get((b, a), [])

    def _derive(self, adj, attrs):
        gaps = {(u, v): list(g) for (u, v), g in self.gaps.items() if u in adj and v in adj}
        return ReferralGraph(adj=adj, attrs=attrs, gaps=gaps)


def _visits_by_patient(records: Iterable[ClaimRecord]) -> tuple[dict[str, list[tuple[int, int, int, str]]], list[ClaimRecord]]:
    visits: dict[str, list[tuple[int, int, int, str]]] = defaultdict(list)
    recs = list(records)
    for pos, r in enumerate(recs):
        visits[r.patient_id].append((r.event_date.toordinal(), r.sequence_no, pos, r.physician_key))
    return visits, recs


def build_shared_patient_graph(records: Iterable[ClaimRecord], min_weight: int = 1) -> PhysicianGraph:
    """Project the patient-physician bipartite graph onto physicians.

    Each patient adds 1 to every pair among the physicians they consulted.
    Edges below ``min_weight`` are dropped (nodes are kept).
    """
    visits, recs = _visits_by_patient(records)
    weights: Counter = Counter()
    nodes: set[str] = set()
    for pid in sorted(visits):
        docs = sorted({v[3] for v in visits[pid]})
        nodes.update(docs)
        for a, b in combinations(docs, 2):
            weights[(a, b)] += 1
    adj: dict[str, dict[str, int]] = {n: {} for n in nodes}
    for (a, b), w in weights.items():
        if w >= min_weight:
            adj[a][b] = w
            adj[b][a] = w
    return PhysicianGraph(adj=adj, attrs=_attrs_for(recs, nodes))


def build_referral_graph(records: Iterable[ClaimRecord], min_weight: int = 1) -> ReferralGraph:
    """Directed referral graph with per-patient gap lists.

    For a patient, ``i -> j`` qualifies when some visit to ``i`` has a strictly
    smaller ``(date, sequence_no)`` than some visit to ``j``; it is enough to
    test the first visit to ``i``. The recorded gap pairs that first visit with
    the first later visit to ``j``.
    """
    visits, recs = _visits_by_patient(records)
    weights: Counter = Counter()
    gaps: dict[tuple[str, str], list[int]] = defaultdict(list)
    nodes: set[str] = set()
    for pid in sorted(visits):
        per_doc: dict[str, list[tuple[int, int]]] = defaultdict(list)
        for day, seq, _pos, doc in visits[pid]:
            per_doc[doc].append((day, seq))
        nodes.update(per_doc)
        if len(per_doc) < 2:
            continue
        for keys in per_doc.values():
            keys.sort()
        docs = sorted(per_doc)
        for i in docs:
            first_i = per_doc[i][0]
            for j in docs:
                if j == i:
                    continue
                keys_j = per_doc[j]
                k = bisect_right(keys_j, first_i)
                if k < len(keys_j):
                    weights[(i, j)] += 1
                    gaps[(i, j)].append(keys_j[k][0] - first_i[0])
    adj: dict[str, dict[str, int]] = {n: {} for n in nodes}
    kept_gaps = {}
    for (i, j), w in weights.items():
        if w >= min_weight:
            adj[i][j] = w
            kept_gaps[(i, j)] = gaps[(i, j)]
    return ReferralGraph(adj=adj, attrs=_attrs_for(recs, nodes), gaps=kept_gaps)


def _attrs_for(records: list[ClaimRecord], nodes: set[str]) -> dict[str, dict[str, str | None]]:
    attrs = physician_attributes(records)
    return {n: attrs.get(n, {"state": None, "specialty": None}) for n in nodes}


def density(graph: _BaseGraph) -> float:
    """Existing over possible links: 2M/(N(N-1)) undirected, M/(N(N-1)) directed."""
    n = graph.n_nodes
    if n < 2:
        raise GraphError(f"density undefined for {n} node(s)")
    m = graph.n_edges
    possible = n * (n - 1)
    return m / possible if graph.directed else 2 * m / possible


@dataclass
class TailFit:
    exponent: float
    x_min: int
    x_max: int
    r_squared: float
    n_points: int


@dataclass
class DegreeDistribution:
    histogram: dict[int, int]
    tail_fit: TailFit | None = None

    @property
    def n_nodes(self) -> int:
        return sum(self.histogram.values())

    def rows(self) -> list[tuple[int, int]]:
        return sorted(self.histogram.items())


def degree_distribution(graph: PhysicianGraph, fit_min_degree: int | None = None, log_bins: bool = True) -> DegreeDistribution:
    """Histogram of node degrees with an optional power-law tail fit.

    When ``fit_min_degree`` is given, the exponent is the negated slope of a
    least-squares line through log(density) vs log(degree) over degrees at or
    above it. With ``log_bins`` the densities come from geometric bins
    (ratio 2 ** 0.25) normalized by bin width, which keeps sparse tail counts
    from flattening the slope; otherwise raw histogram counts are used.
    """
    hist = Counter(len(nb) for nb in graph.adj.values())
    dist = DegreeDistribution(dict(sorted(hist.items())))
    if fit_min_degree is None or not hist:
        return dist
    degs = np.array(sorted(d for d in hist if d >= fit_min_degree), dtype=float)
    if degs.size < 2:
        return dist
    counts = np.array([hist[int(d)] for d in degs], dtype=float)
    if log_bins:
        edges = [float(fit_min_degree)]
        while edges[-1] <= degs[-1]:
            edges.append(edges[-1] * 2 ** 0.25)
        edges = np.unique(np.ceil(edges))
        mass, _ = np.histogram(degs, bins=edges, weights=counts)
        widths = np.diff(edges)
        mids = np.sqrt(edges[:-1] * (edges[1:] - 1).clip(min=edges[:-1]))
        ok = mass > 0
        x, y = mids[ok], mass[ok] / widths[ok]
    else:
        x, y = degs, counts
    if x.size < 2:
        return dist
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    dist.tail_fit = TailFit(float(-slope), int(fit_min_degree), int(degs[-1]), r2, int(x.size))
    return dist


def slice_graph(graph, states: Iterable[str] | None = None, specialties: Iterable[str] | None = None,
                nodes: Iterable[str] | None = None, predicate: Callable[[str, dict], bool] | None = None):
    """Induced subgraph on nodes matching every given criterion.

    Nodes with unknown state (or specialty) never match a state (or
    specialty) criterion, so edges touching them are removed.
    """
    keep = set(graph.adj)
    if states is not None:
        st = set(states)
        keep = {n for n in keep if graph.attr(n, "state") in st}
    if specialties is not None:
        sps = set(specialties)
        keep = {n for n in keep if graph.attr(n, "specialty") in sps}
    if nodes is not None:
        keep &= set(nodes)
    if predicate is not None:
        keep = {n for n in keep if predicate(n, graph.attrs.get(n, {}))}
    return graph.subgraph(keep)


def threshold(graph: PhysicianGraph, min_weight: int) -> PhysicianGraph:
    adj = {u: {v: w for v, w in nb.items() if w >= min_weight} for u, nb in graph.adj.items()}
    return PhysicianGraph(adj=adj, attrs={u: dict(a) for u, a in graph.attrs.items()})


# --- export -----------------------------------------------------------------

def to_networkx(graph, node_values: dict[str, float] | None = None, value_name: str = "value"):
    import networkx as nx

    g = nx.DiGraph() if graph.directed else nx.Graph()
    for n in graph.nodes:
        data = {k: v for k, v in graph.attrs.get(n, {}).items() if v is not None}
        if node_values is not None and n in node_values:
            data[value_name] = float(node_values[n])
            data["label"] = f"{node_values[n]:.3f}"
        g.add_node(n, **data)
    for u, v, w in graph.edges():
        g.add_edge(u, v, weight=int(w))
    return g


def write_graphml(graph, path: str | Path, node_values: dict[str, float] | None = None, value_name: str = "value") -> None:
    """GraphML with ``state``/``specialty`` node attributes and integer ``weight`` edges.

    Nodes are written in sorted ID order. ``node_values`` adds a float
    attribute plus a 3-decimal ``label``.
    """
    import networkx as nx

    nx.write_graphml(to_networkx(graph, node_values, value_name), str(path), encoding="utf-8", prettyprint=True)


def _dot_quote(s: str) -> str:
    return '"' + str(s).replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(graph, node_values: dict[str, float] | None = None, name: str = "physicians") -> str:
    kind, arrow = ("digraph", "->") if graph.directed else ("graph", "--")
    lines = [f"{kind} {_dot_quote(name)} {{"]
    for n in graph.nodes:
        parts = [f"{k}={_dot_quote(v)}" for k, v in sorted(graph.attrs.get(n, {}).items()) if v is not None]
        if node_values is not None and n in node_values:
            parts.append(f"label={_dot_quote(f'{node_values[n]:.3f}')}")
        attr = f" [{', '.join(parts)}]" if parts else ""
        lines.append(f"  {_dot_quote(n)}{attr};")
    for u, v, w in graph.edges():
        lines.append(f"  {_dot_quote(u)} {arrow} {_dot_quote(v)} [weight={w}, penwidth={1 + math.log1p(w):.3f}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_dot(graph, path: str | Path, node_values: dict[str, float] | None = None) -> None:
    Path(path).write_text(to_dot(graph, node_values), encoding="utf-8")
