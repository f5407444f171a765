"""One test per acceptance criterion; pass/fail lines are printed in the terminal summary."""

import json
import time
from fractions import Fraction

import numpy as np
import pytest

from claimnet.centrality import betweenness_centrality, closeness_centrality, eigenvector_centrality
from claimnet.graph import PhysicianGraph, degree_distribution, density
from claimnet.ingest import filter_valid
from claimnet.pipeline import run_pipeline
from claimnet.referral import mutual_referral, mutual_referral_scores, pairs_from_counts
from claimnet.retention import build_patient_profiles, quarterly_retention_ranking
from claimnet.synth import (
    HubClique, MutualPair, RetentionMagnet, ScenarioConfig, generate, preferential_attachment_edges, table1_pairs,
)
from oracles import (
    betweenness_bruteforce, betweenness_paths_weighted, eigenvector_dense, harmonic_bruteforce, random_weighted_graph,
)

TABLE1_MRS = [1.000, 0.551, 0.520, 0.367, 0.362, 0.357, 0.337, 0.321, 0.321, 0.316]


def _graph(adj):
    return PhysicianGraph(adj=adj, attrs={v: {"state": None, "specialty": None} for v in adj})


class _Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def test_c1_table1_arithmetic():
    """C1 Table 1 mrs reproduced exactly at 3 decimals, in order (< 1 s)."""
    with _Timer() as t:
        counts = [(f"MS{2 * i + 10}", f"MS{2 * i + 11}", p.w_ab, p.w_ba) for i, p in enumerate(table1_pairs())]
        scores = mutual_referral_scores(pairs_from_counts(counts))
        got = [round(p.mrs, 3) for p in scores]
    assert got == TABLE1_MRS
    assert [p.key for p in scores] == [(a, b) for a, b, _, _ in counts]
    assert t.elapsed < 1.0


def test_c2_mutual_referral_properties():
    """C2 mr symmetric and equal to 2*min on 1e5 pairs; mrs in [0, 1] with max 1 (< 5 s)."""
    rng = np.random.default_rng(2024)
    with _Timer() as t:
        w = rng.integers(0, 10_000, size=(100_000, 2))
        for a, b in w.tolist():
            mr = mutual_referral(a, b)
            assert mr == mutual_referral(b, a) == 2 * min(a, b)
        counts = [(f"SP{2 * i + 1}", f"SP{2 * i + 2}", int(a), int(b)) for i, (a, b) in enumerate(w[:20_000])]
        scores = mutual_referral_scores(pairs_from_counts(counts))
    mrs = np.array([p.mrs for p in scores])
    assert mrs.min() >= 0.0 and mrs.max() == 1.0
    assert scores.max_mr == int(2 * w[:20_000].min(axis=1).max())
    assert t.elapsed < 5.0


def test_c3_centrality_oracles():
    """C3 100 random graphs: eigenvector within 1e-6, betweenness/closeness within 1e-9 of oracles (< 60 s)."""
    rng = np.random.default_rng(7)
    with _Timer() as t:
        for k in range(100):
            n = int(rng.integers(2, 51))
            adj = random_weighted_graph(rng, n, float(rng.uniform(0.05, 0.4)), max_w=int(rng.integers(1, 60)))
            g = _graph(adj)
            ev, ev_ref = eigenvector_centrality(g).values, eigenvector_dense(adj)
            assert max(abs(ev[v] - ev_ref[v]) for v in adj) <= 1e-6
            bc, bc_ref = betweenness_centrality(g).values, betweenness_bruteforce(adj)
            assert max(abs(bc[v] - bc_ref[v]) for v in adj) <= 1e-9
            cc, cc_ref = closeness_centrality(g).values, harmonic_bruteforce(adj)
            assert max(abs(cc[v] - cc_ref[v]) for v in adj) <= 1e-9
            if k % 5 == 0:
                small = random_weighted_graph(rng, 8, 0.4, max_w=5)
                wbc = betweenness_centrality(_graph(small), weighted=True).values
                exact = betweenness_paths_weighted(small)
                assert all(abs(Fraction(wbc[v]) - exact[v]) <= Fraction(1, 10**9) for v in small)
    assert t.elapsed < 60.0


def test_c4_density():
    """C4 density: complete graph 1.0; 21 nodes / 196 edges 0.933 +- 0.0005 (< 1 s)."""
    def graph(edges):
        adj = {f"SP{i}": {} for i in range(1, 22)}
        for a, b in edges:
            adj[f"SP{a}"][f"SP{b}"] = adj[f"SP{b}"][f"SP{a}"] = 1
        return _graph(adj)

    with _Timer() as t:
        full = [(a, b) for a in range(1, 22) for b in range(a + 1, 22)]
        assert density(graph(full)) == 1.0
        d = density(graph(full[14:]))
    assert abs(d - 0.933) <= 0.0005
    assert t.elapsed < 1.0


def test_c5_retention_invariants_and_magnet():
    """C5 retention: sum r = 1 within 1e-12, 1/K <= r_max <= 1 on 1e4 patients; magnet rank 1 all quarters (< 30 s)."""
    with _Timer() as t:
        res = generate(ScenarioConfig(n_physicians=2000, n_patients=10_000, n_claims=30_000, seed=1))
        profiles = build_patient_profiles(res.records)
        assert len(profiles) == 10_000
        for p in profiles:
            assert abs(sum(p.relative.values()) - 1.0) <= 1e-12
            assert 1.0 / p.n_physicians <= p.r_max <= 1.0
        cfg = ScenarioConfig(n_physicians=1000, n_patients=5000, n_claims=25_000, seed=5,
                             planted=[RetentionMagnet(40, 0.9, 6)])
        res = generate(cfg)
        table = quarterly_retention_ranking(filter_valid(res.records).records, cfg.window, top_n=10)
        magnet = res.manifest["planted"][0]["physician"]
        ranks = [table.rank_of(magnet, q) for q in table.columns]
    assert len(ranks) == 6 and ranks == [1] * 6
    assert t.elapsed < 30.0


@pytest.fixture(scope="module")
def recovery_bundle(tmp_path_factory):
    root = tmp_path_factory.mktemp("recovery")
    cfg = ScenarioConfig(n_physicians=5000, n_patients=30_000, n_claims=100_000, seed=17,
                         planted=[MutualPair(150, 140), MutualPair(120, 118), MutualPair(100, 95),
                                  RetentionMagnet(30, 0.9, 5), HubClique(21, 60)])
    t0 = time.perf_counter()
    res = generate(cfg)
    res.write(root / "claims.csv", root / "manifest.json")
    run = run_pipeline({"inputs": [str(root / "claims.csv")], "output_dir": str(root / "bundle"),
                        "centrality": {"core_size": 21}})
    return res.manifest, run.manifest, time.perf_counter() - t0


@pytest.mark.slow
def test_c6_planted_structure_recovery(recovery_bundle):
    """C6 1e5 claims: planted pairs are mrs top-3, magnet retention rank 1, clique is eigenvector top-21 with density >= 0.9 (< 120 s)."""
    truth, manifest, elapsed = recovery_bundle
    pairs = [[p["physician_a"], p["physician_b"]] for p in truth["planted"] if p["kind"] == "mutual_pair"]
    magnet = next(p["physician"] for p in truth["planted"] if p["kind"] == "retention_magnet")
    clique = next(p["members"] for p in truth["planted"] if p["kind"] == "hub_clique")
    assert manifest["referral"]["top_pairs"][:3] == pairs
    assert manifest["retention"]["top"][0] == magnet
    core = manifest["centrality"]["core"]
    assert core["metric"] == "eigenvector" and core["members"] == sorted(clique)
    assert core["density"] >= 0.9
    assert elapsed < 120.0


def test_c7_degree_distribution_shape():
    """C7 preferential attachment n=1e4: tail exponent in [2.0, 3.5] (< 30 s)."""
    with _Timer() as t:
        edges = preferential_attachment_edges(10_000, 2, np.random.default_rng(0))
        adj = {f"SP{i + 1}": {} for i in range(10_000)}
        for a, b in edges:
            adj[f"SP{a + 1}"][f"SP{b + 1}"] = adj[f"SP{b + 1}"][f"SP{a + 1}"] = 1
        fit = degree_distribution(_graph(adj), fit_min_degree=4).tail_fit
    assert 2.0 <= fit.exponent <= 3.5
    assert t.elapsed < 30.0


@pytest.mark.slow
def test_c8_determinism(tmp_path):
    """C8 two pipeline runs give byte-identical bundles (< 120 s)."""
    cfg = ScenarioConfig(n_physicians=1500, n_patients=8000, n_claims=30_000, seed=3,
                         planted=[MutualPair(60, 55), RetentionMagnet(10), HubClique(12, 25)])
    generate(cfg).write(tmp_path / "claims.csv", tmp_path / "truth.json")
    t0 = time.perf_counter()
    bundles = []
    for name in ("run1", "run2"):
        run_pipeline({"inputs": [str(tmp_path / "claims.csv")], "output_dir": str(tmp_path / name)})
        d = tmp_path / name
        bundles.append({str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()})
    elapsed = time.perf_counter() - t0
    assert bundles[0] == bundles[1]
    assert len(bundles[0]) > 10 and json.loads(bundles[0]["manifest.json"])["outputs"]
    assert elapsed < 120.0
