import json
from pathlib import Path

import pytest
import yaml

from claimnet.cli import main
from claimnet.ingest import write_claims_csv
from claimnet.pipeline import ConfigError, run_pipeline
from claimnet.synth import HubClique, MutualPair, RetentionMagnet, ScenarioConfig, generate
from conftest import make_records


@pytest.fixture(scope="module")
def scenario(tmp_path_factory):
    root = tmp_path_factory.mktemp("scenario")
    cfg = ScenarioConfig(n_physicians=600, n_patients=3000, n_claims=15_000, seed=21,
                         planted=[MutualPair(40, 35), RetentionMagnet(20, 0.9, 5), HubClique(8, 20)])
    res = generate(cfg)
    res.write(root / "claims.csv", root / "manifest.json")
    return root, res


def _bundle_files(d: Path) -> dict[str, bytes]:
    return {str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_synth_subcommand(tmp_path, capsys):
    cfg = tmp_path / "s.yaml"
    cfg.write_text(yaml.safe_dump({"n_physicians": 60, "n_patients": 200, "n_claims": 700}))
    assert main(["synth", "-c", str(cfg), "-o", str(tmp_path / "out"), "--seed", "4"]) == 0
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 4 and manifest["counts"]["n_claims"] == 700
    assert "700 claims" in capsys.readouterr().out


def test_describe_matches_manifest(scenario, capsys):
    root, res = scenario
    assert main(["describe", str(root / "claims.csv")]) == 0
    summary = json.loads(capsys.readouterr().out)
    counts = res.manifest["counts"]
    assert summary["n_claims"] == counts["n_claims"]
    assert summary["n_patients"] == counts["n_patients"]
    assert summary["n_physicians"] == counts["n_physicians"]
    assert summary["n_providers"] == counts["n_providers"]
    assert summary["missing_state_fraction"] == counts["n_missing_state_claims"] / counts["n_claims"]


def test_describe_quarter_missing_state(tmp_path, capsys):
    recs = make_records([(f"p{i}", f"SP{i + 1}", i % 30, 0, None if i % 4 == 0 else "SP") for i in range(400)])
    write_claims_csv(recs, tmp_path / "c.csv")
    assert main(["describe", str(tmp_path / "c.csv")]) == 0
    assert json.loads(capsys.readouterr().out)["missing_state_fraction"] == 0.25


def test_describe_empty_file(tmp_path, capsys):
    write_claims_csv([], tmp_path / "e.csv")
    assert main(["describe", str(tmp_path / "e.csv")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["n_claims"] == summary["n_physicians"] == 0 and summary["valid_id_fraction"] == 0.0


def test_referral_only_bundle(scenario, tmp_path):
    root, res = scenario
    out = tmp_path / "bundle"
    assert main(["referral", str(root / "claims.csv"), "-o", str(out), "--set", "referral.top_k=5"]) == 0
    top = {p.name for p in out.iterdir()}
    assert top == {"manifest.json", "referral"}
    manifest = json.loads((out / "manifest.json").read_text())
    pair = res.manifest["planted"][0]
    assert manifest["referral"]["top_pairs"][0] == [pair["physician_a"], pair["physician_b"]]
    assert manifest["parameters"]["referral"]["top_k"] == 5
    assert len((out / "referral" / "top_pairs.csv").read_text().splitlines()) == 6


def test_missing_input_exits_1_without_outputs(tmp_path, capsys):
    out = tmp_path / "bundle"
    assert main(["pipeline", str(tmp_path / "nope.csv"), "-o", str(out)]) == 1
    assert "nope.csv" in capsys.readouterr().err
    assert not out.exists() and list(tmp_path.iterdir()) == []


def test_usage_errors_exit_1(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 1
    assert main(["pipeline", "x.csv", "--set", "no_equals_sign"]) == 1
    bad = tmp_path / "c.yaml"
    bad.write_text("analyses: [astrology]\n")
    write_claims_csv([], tmp_path / "e.csv")
    assert main(["pipeline", str(tmp_path / "e.csv"), "-c", str(bad), "-o", str(tmp_path / "o")]) == 1


def test_fatal_parse_is_data_error(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("claim_id,physician_id\nc1,SP1\n")
    assert main(["pipeline", str(tmp_path / "bad.csv"), "-o", str(tmp_path / "o")]) == 2
    assert "ingest" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()
    assert [p.name for p in tmp_path.iterdir()] == ["bad.csv"]


def test_failed_run_keeps_previous_bundle(tmp_path):
    write_claims_csv(make_records([("a", "SP1", 0), ("a", "SP2", 1)]), tmp_path / "ok.csv")
    out = tmp_path / "o"
    assert main(["graph", str(tmp_path / "ok.csv"), "-o", str(out)]) == 0
    before = _bundle_files(out)
    (tmp_path / "bad.csv").write_text("claim_id\n")
    assert main(["graph", str(tmp_path / "bad.csv"), "-o", str(out)]) == 2
    assert _bundle_files(out) == before


def test_run_config_validation(tmp_path):
    write_claims_csv([], tmp_path / "e.csv")
    with pytest.raises(ConfigError):
        run_pipeline({"inputs": [str(tmp_path / "e.csv")], "output_dir": str(tmp_path / "o"),
                      "referral": {"top_k": 0}})
    with pytest.raises(ConfigError):
        run_pipeline({"inputs": [str(tmp_path / "e.csv")], "output_dir": str(tmp_path / "o"), "bogus": 1})


def test_full_pipeline_bundle_and_determinism(scenario, tmp_path):
    root, res = scenario
    cfg = tmp_path / "run.yaml"
    cfg.write_text(yaml.safe_dump({"inputs": [str(root / "claims.csv")],
                                   "centrality": {"core_size": 8, "metrics": ["degree", "eigenvector"]}}))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["pipeline", "-c", str(cfg), "-o", str(a)]) == 0
    assert main(["pipeline", "-c", str(cfg), "-o", str(b), "--threads", "1"]) == 0
    files_a = _bundle_files(a)
    assert files_a == _bundle_files(b)
    for name in ("graph/degree_distribution.csv", "referral/top_pairs.csv", "retention/quarterly_rank.csv",
                 "retention/scatter.csv", "centrality/scores.csv", "centrality/core.graphml", "centrality/core.dot"):
        assert name in files_a, name
    manifest = json.loads(files_a["manifest.json"])
    magnet = res.manifest["planted"][1]["physician"]
    clique = sorted(res.manifest["planted"][2]["members"])
    assert manifest["retention"]["top"][0] == magnet
    assert manifest["centrality"]["core"]["members"] == clique
    assert manifest["centrality"]["core"]["density"] == 1.0
    assert set(manifest["outputs"]) == set(files_a) - {"manifest.json"}
