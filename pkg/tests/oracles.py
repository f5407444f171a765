"""Brute-force reference computations, deliberately independent of the library paths."""

from __future__ import annotations

from collections import defaultdict
from fractions import Fraction
from itertools import combinations

import numpy as np


def random_weighted_graph(rng: np.random.Generator, n: int, p: float, max_w: int = 50) -> dict[str, dict[str, int]]:
    names = [f"SP{i + 1}" for i in range(n)]
    adj = {v: {} for v in names}
    for i, j in combinations(range(n), 2):
        if rng.random() < p:
            w = int(rng.integers(1, max_w + 1))
            adj[names[i]][names[j]] = w
            adj[names[j]][names[i]] = w
    return adj


def dense(adj: dict[str, dict[str, int]], weighted: bool = True) -> tuple[list[str], np.ndarray]:
    nodes = sorted(adj)
    idx = {v: i for i, v in enumerate(nodes)}
    a = np.zeros((len(nodes), len(nodes)))
    for u in nodes:
        for v, w in adj[u].items():
            a[idx[u], idx[v]] = w if weighted else 1.0
    return nodes, a


def hop_distances_and_counts(adj01: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distances and shortest-path counts from walk counts.

    A walk of length d(s, t) between s and t is necessarily a shortest path,
    so the first power k with (A^k)[s, t] > 0 gives both d and sigma.
    """
    n = adj01.shape[0]
    dist = np.full((n, n), np.inf)
    sigma = np.zeros((n, n))
    np.fill_diagonal(dist, 0)
    np.fill_diagonal(sigma, 1)
    power = np.eye(n)
    for k in range(1, n):
        power = power @ adj01
        fresh = (power > 0) & np.isinf(dist)
        dist[fresh] = k
        sigma[fresh] = power[fresh]
        if not fresh.any():
            break
    return dist, sigma


def betweenness_bruteforce(adj) -> dict[str, float]:
    """Pair dependency summed over unordered pairs: sum sigma_sv sigma_vt / sigma_st."""
    nodes, a = dense(adj, weighted=False)
    dist, sigma = hop_distances_and_counts(a)
    n = len(nodes)
    out = {}
    for v in range(n):
        total = 0.0
        for s, t in combinations(range(n), 2):
            if v in (s, t) or not np.isfinite(dist[s, t]):
                continue
            if dist[s, v] + dist[v, t] == dist[s, t]:
                total += sigma[s, v] * sigma[v, t] / sigma[s, t]
        out[nodes[v]] = total
    return out


def betweenness_paths_weighted(adj) -> dict[str, Fraction]:
    """Enumerate every simple path; length is the exact sum of 1/weight."""
    nodes = sorted(adj)
    paths: dict[tuple[str, str], list[tuple[Fraction, tuple[str, ...]]]] = defaultdict(list)

    def walk(path, length):
        u = path[-1]
        if len(path) > 1 and path[0] < u:
            paths[(path[0], u)].append((length, tuple(path)))
        for v, w in adj[u].items():
            if v not in path:
                walk(path + [v], length + Fraction(1, w))

    for s in nodes:
        walk([s], Fraction(0))
    bc = {v: Fraction(0) for v in nodes}
    for (s, t), plist in paths.items():
        best = min(length for length, _ in plist)
        shortest = [p for length, p in plist if length == best]
        for p in shortest:
            for v in p[1:-1]:
                bc[v] += Fraction(1, len(shortest))
    return bc


def harmonic_bruteforce(adj) -> dict[str, float]:
    nodes, a = dense(adj, weighted=False)
    dist, _ = hop_distances_and_counts(a)
    out = {}
    for i, v in enumerate(nodes):
        out[v] = sum(1.0 / dist[i, j] for j in range(len(nodes)) if j != i and np.isfinite(dist[i, j]))
    return out


def largest_component(adj) -> list[str]:
    nodes, a = dense(adj, weighted=False)
    dist, _ = hop_distances_and_counts(a)
    comps = {}
    for i in range(len(nodes)):
        members = tuple(nodes[j] for j in range(len(nodes)) if np.isfinite(dist[i, j]))
        comps[members] = None
    return list(min(comps, key=lambda c: (-len(c), c[0])))


def eigenvector_dense(adj) -> dict[str, float]:
    """Leading eigenvector of the largest component by full eigendecomposition."""
    comp = largest_component(adj)
    sub = {v: {u: w for u, w in adj[v].items() if u in comp} for v in comp}
    nodes, a = dense(sub)
    vals, vecs = np.linalg.eigh(a)
    lead = np.abs(vecs[:, np.argmax(vals)])
    lead /= lead.max()
    out = {v: 0.0 for v in adj}
    out.update(dict(zip(nodes, lead)))
    return out


def shared_patient_bruteforce(records) -> dict[tuple[str, str], int]:
    """Double loop over claim pairs, collecting the distinct patients per physician pair."""
    recs = list(records)
    patients: dict[tuple[str, str], set[str]] = defaultdict(set)
    for r in recs:
        for q in recs:
            if r.patient_id == q.patient_id and r.physician_key < q.physician_key:
                patients[(r.physician_key, q.physician_key)].add(r.patient_id)
    return {k: len(v) for k, v in patients.items()}


def referral_bruteforce(records) -> dict[tuple[str, str], int]:
    recs = list(records)
    patients: dict[tuple[str, str], set[str]] = defaultdict(set)
    for r in recs:
        for q in recs:
            if (r.patient_id == q.patient_id and r.physician_key != q.physician_key
                    and (r.event_date, r.sequence_no) < (q.event_date, q.sequence_no)):
                patients[(r.physician_key, q.physician_key)].add(r.patient_id)
    return {k: len(v) for k, v in patients.items()}
