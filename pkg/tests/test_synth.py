import json

import pytest

from claimnet.graph import build_referral_graph, build_shared_patient_graph
from claimnet.ingest import filter_valid, parse_claims, validate_physician_id
from claimnet.referral import mutual_referral_scores
from claimnet.retention import build_patient_profiles
from claimnet.synth import (
    HubClique, MutualPair, RetentionMagnet, ScenarioConfig, ScenarioError, generate, load_config, table1_pairs,
)

SMALL = dict(n_physicians=500, n_patients=2500, n_claims=8000)


def test_same_seed_is_byte_identical(tmp_path):
    cfg = ScenarioConfig(**SMALL, seed=7, planted=[MutualPair(20, 15), HubClique(6, 10), RetentionMagnet(5)])
    for name in ("a", "b"):
        (tmp_path / name).mkdir()
        generate(cfg).write(tmp_path / name / "claims.csv", tmp_path / name / "manifest.json")
    for f in ("claims.csv", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_different_seed_differs():
    a = generate(ScenarioConfig(**SMALL, seed=1)).records
    b = generate(ScenarioConfig(**SMALL, seed=2)).records
    assert a != b


def test_requested_counts_are_exact():
    cfg = ScenarioConfig(**SMALL, seed=3)
    res = generate(cfg)
    recs = res.records
    assert len(recs) == 8000
    assert len({r.patient_id for r in recs}) == 2500
    assert len({r.physician_id for r in recs}) == 500
    assert all(r.event_date in cfg.window for r in recs)
    missing = sum(r.state is None for r in recs)
    assert missing == res.manifest["counts"]["n_missing_state_claims"] == round(0.25 * 8000)


def test_malformed_count_is_exact():
    res = generate(ScenarioConfig(n_physicians=10_000, n_patients=25_000, n_claims=60_000, seed=0))
    bad = res.manifest["malformed_physician_ids"]
    assert len(bad) == 1900 == res.manifest["counts"]["n_malformed_physicians"]
    assert not any(validate_physician_id(i).valid for i in bad)


def test_planted_pair_weights_are_exact():
    cfg = ScenarioConfig(**SMALL, seed=4, planted=[MutualPair(205, 196)])
    res = generate(cfg)
    entry = res.manifest["planted"][0]
    rg = build_referral_graph(filter_valid(res.records).records)
    a, b = entry["physician_a"], entry["physician_b"]
    assert (rg.weight(a, b), rg.weight(b, a)) == (entry["w_ab"], entry["w_ba"])
    assert sorted((entry["w_ab"], entry["w_ba"])) == [196, 205] and entry["mr"] == 392


def test_table1_pairs_recovered_in_order():
    cfg = ScenarioConfig(n_physicians=1000, n_patients=8000, n_claims=20_000, seed=5, planted=table1_pairs())
    res = generate(cfg)
    scores = mutual_referral_scores(build_referral_graph(filter_valid(res.records).records))
    planted = [(p["physician_a"], p["physician_b"]) for p in res.manifest["planted"]]
    top = [p.key for p in scores][:10]
    assert set(top) == set(planted)
    assert [round(p.mrs, 3) for p in scores][:10] == [1.000, 0.551, 0.520, 0.367, 0.362, 0.357, 0.337, 0.321,
                                                      0.321, 0.316]


def test_magnet_hits_targets():
    res = generate(ScenarioConfig(**SMALL, seed=6, planted=[RetentionMagnet(12, 0.9, 5)]))
    entry = res.manifest["planted"][0]
    loyal = [p for p in build_patient_profiles(res.records) if p.argmax == [entry["physician"]]
             and p.n_physicians == entry["k"]]
    assert len(loyal) >= 12
    assert all(abs(p.r_max - entry["r_max"]) < 1e-12 for p in loyal[:12])
    assert entry["r_max"] == pytest.approx(0.9, abs=0.02)


def test_clique_members_fully_linked():
    res = generate(ScenarioConfig(**SMALL, seed=8, planted=[HubClique(10, 15)]))
    members = res.manifest["planted"][0]["members"]
    g = build_shared_patient_graph(res.records)
    assert all(g.weight(a, b) >= 15 for i, a in enumerate(members) for b in members[i + 1:])


@pytest.mark.parametrize("change", [
    {"n_claims": 100},
    {"n_patients": 10, "planted": [MutualPair(30, 30)]},
    {"malformed_id_rate": 1.5},
    {"n_physicians": 20, "planted": [HubClique(30, 2)]},
    {"planted": [RetentionMagnet(3, 0.1, 5)]},
    {"planted": [MutualPair(0, 0)]},
    {"state_mixture": {"ZZ": 1.0}},
])
def test_infeasible_configs_raise(change):
    cfg = ScenarioConfig(**{**SMALL, **change})
    with pytest.raises(ScenarioError):
        generate(cfg)


def test_unknown_fields_rejected():
    with pytest.raises(ScenarioError):
        ScenarioConfig.from_dict({"n_physician": 3})
    with pytest.raises(ScenarioError):
        ScenarioConfig.from_dict({"planted": [{"kind": "triangle"}]})


def test_manifest_round_trip(tmp_path):
    cfg = ScenarioConfig(**SMALL, seed=9, planted=[MutualPair(12, 9, state="RJ"), HubClique(5, 6)])
    res = generate(cfg)
    res.write(tmp_path / "claims.csv", tmp_path / "manifest.json")
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    again = ScenarioConfig.from_dict(manifest["config"])
    assert again == cfg
    parsed = parse_claims(tmp_path / "claims.csv").records
    assert parsed == generate(again).records
    pair = manifest["planted"][0]
    assert pair["physician_a"].startswith("RJ") and pair["physician_b"].startswith("RJ")


def test_load_config_yaml(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("n_physicians: 50\nn_patients: 200\nn_claims: 600\nseed: 2\nstart: 2013-04-01\n"
                    "planted:\n  - {kind: mutual_pair, w_ab: 5, w_ba: 4}\n")
    cfg = load_config(path)
    assert cfg.n_physicians == 50 and cfg.planted == [MutualPair(5, 4)]
    assert len(generate(cfg).records) == 600
