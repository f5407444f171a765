"""End-to-end runs: ingest, graphs, metrics and exports into one report bundle."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import shutil
import tempfile
import time
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any

from . import centrality as cen
from .graph import (
    GraphError, build_referral_graph, build_shared_patient_graph, degree_distribution, density, slice_graph,
    write_dot, write_graphml,
)
from .ingest import (
    DateWindow, FilterPolicy, FormatConfig, IngestError, QuarterKey, describe, filter_valid, parse_many,
    partition_quarters,
)
from .referral import (
    mutual_referral_scores, specialty_pair_summary, top_pairs, write_ranking_csv, write_specialty_csv,
)
from .retention import (
    REFERENCE_SLOPES, build_patient_profiles, quarterly_retention_ranking, retention_scatter, retention_scores,
    write_scatter_csv, write_scores_csv,
)

log = logging.getLogger(__name__)

ANALYSES = ("graph", "referral", "retention", "centrality")

DEFAULTS: dict[str, Any] = {
    "inputs": [],
    "format": {"delimiter": ",", "columns": {}},
    "window": None,
    "filter": {"drop_malformed_physician": True, "drop_missing_state": False},
    "analyses": list(ANALYSES),
    "graph": {"min_weight": 1, "fit_min_degree": 3, "export_full": False},
    "referral": {"top_k": 50, "states": None, "n_states": 5, "state_top_k": [20, 50], "specialties": [],
                 "specialty_top_k": 100},
    "retention": {"top_n": 10, "min_k": 1, "include_single_claim": True},
    "centrality": {"metric": "eigenvector", "metrics": ["degree", "eigenvector", "betweenness", "closeness"],
                   "top_n": 10, "concordance_k": 20, "core_size": 21, "core_quarter": None,
                   "betweenness_weighted": False, "degree_weighted": True, "tol": 1e-10, "max_iter": 10_000,
                   "min_weight": 1},
    "output_dir": "claimnet-out",
    "threads": 1,
    "record_timings": False,
}


class ConfigError(ValueError):
    """Invalid run configuration (exit status 1)."""


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage
        self.cause = exc


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _as_date(v) -> date:
    if isinstance(v, date):
        return v
    try:
        return date.fromisoformat(str(v))
    except ValueError as exc:
        raise ConfigError(f"bad date {v!r}") from exc


@dataclass
class RunConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def from_dict(cls, data: dict | None) -> "RunConfig":
        data = data or {}
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        cfg = cls(merge(DEFAULTS, data))
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def inputs(self) -> list[Path]:
        return [Path(p) for p in self.raw["inputs"]]

    @property
    def window(self) -> DateWindow | None:
        w = self.raw["window"]
        if not w:
            return None
        return DateWindow(_as_date(w["start"]), _as_date(w["end"]))

    @property
    def analyses(self) -> list[str]:
        return [a for a in ANALYSES if a in self.raw["analyses"]]

    def validate(self) -> None:
        r = self.raw
        if isinstance(r["inputs"], (str, Path)):
            r["inputs"] = [r["inputs"]]
        if not r["inputs"]:
            raise ConfigError("no input files given")
        bad = [a for a in r["analyses"] if a not in ANALYSES]
        if bad:
            raise ConfigError(f"unknown analysis {bad}; choose from {list(ANALYSES)}")
        try:
            self.window
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if len(str(r["format"]["delimiter"])) != 1:
            raise ConfigError("delimiter must be a single character")
        ref, ret, cen_ = r["referral"], r["retention"], r["centrality"]
        for name, v in (("referral.top_k", ref["top_k"]), ("retention.top_n", ret["top_n"]),
                        ("centrality.top_n", cen_["top_n"]), ("centrality.concordance_k", cen_["concordance_k"]),
                        ("retention.min_k", ret["min_k"]), ("threads", r["threads"]),
                        ("graph.min_weight", r["graph"]["min_weight"]), ("centrality.min_weight", cen_["min_weight"])):
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if isinstance(ref["state_top_k"], int):
            ref["state_top_k"] = [ref["state_top_k"]]
        if any(not isinstance(k, int) or k < 1 for k in ref["state_top_k"]):
            raise ConfigError("referral.state_top_k must hold positive integers")
        try:
            cen.Metric(cen_["metric"])
            for m in cen_["metrics"]:
                cen.Metric(m)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if cen_["core_size"] is not None and (not isinstance(cen_["core_size"], int) or cen_["core_size"] < 2):
            raise ConfigError("centrality.core_size must be an integer >= 2")
        if cen_["core_quarter"] is not None:
            try:
                QuarterKey.parse(str(cen_["core_quarter"]))
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        missing = [str(p) for p in self.inputs if not p.is_file()]
        if missing:
            raise ConfigError(f"input file not found: {', '.join(missing)}")

    def resolved(self) -> dict:
        """JSON-safe copy used in the run manifest.

        ``output_dir`` is left out so that a bundle does not depend on where it
        was written.
        """
        out = json.loads(json.dumps(self.raw, default=str))
        out.pop("output_dir", None)
        return out


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")


@dataclass
class RunResult:
    output_dir: Path
    manifest: dict


def run_pipeline(config: RunConfig | dict) -> RunResult:
    """Run every selected analysis and write the bundle atomically.

    Outputs are assembled in a scratch directory next to ``output_dir`` and
    moved into place only on success; a failing stage raises
    :class:`StageError` and leaves no bundle behind.
    """
    cfg = config if isinstance(config, RunConfig) else RunConfig.from_dict(config)
    out = Path(cfg["output_dir"])
    out.parent.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    timings: dict[str, float] = {}
    try:
        manifest = _run(cfg, scratch, timings)
        if cfg["record_timings"]:
            manifest["timings_s"] = timings
        manifest["outputs"] = {
            str(p.relative_to(scratch)): sha256_file(p) for p in sorted(scratch.rglob("*")) if p.is_file()
        }
        _dump_json(manifest, scratch / "manifest.json")
        if out.exists():
            shutil.rmtree(out)
        scratch.rename(out)
    except BaseException:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    return RunResult(out, manifest)


@contextmanager
def _stage(name: str, timings: dict):
    t0 = time.perf_counter()
    log.info("stage %s", name)
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = round(time.perf_counter() - t0, 6)


def _run(cfg: RunConfig, root: Path, timings: dict) -> dict:
    fmt = FormatConfig(delimiter=cfg["format"]["delimiter"], columns=dict(cfg["format"]["columns"] or {}),
                       window=cfg.window)
    with _stage("ingest", timings):
        parsed = parse_many(cfg.inputs, fmt, threads=cfg["threads"])
        if parsed.report.errors:
            parsed.report.write_csv(root / "parse_errors.csv")
        policy = FilterPolicy(**cfg["filter"])
        filtered = filter_valid(parsed.records, policy)
        records = filtered.records
        window = cfg.window or DateWindow.covering(records)
        summary = describe(parsed.records, parsed.report.n_errors)

    manifest: dict[str, Any] = {
        "inputs": [{"path": p.name, "sha256": sha256_file(p)} for p in cfg.inputs],
        "parameters": cfg.resolved(),
        "describe": summary.as_dict(),
        "parse": {"rows_read": parsed.report.rows_read, "row_errors": parsed.report.tally()},
        "exclusions": filtered.tally,
        "n_records_analyzed": len(records),
        "window": None if window is None else {"start": window.start.isoformat(), "end": window.end.isoformat()},
        "analyses": cfg.analyses,
    }
    if "graph" in cfg.analyses:
        with _stage("graph", timings):
            manifest["graph"] = _graph_stage(cfg, records, root / "graph")
    if "referral" in cfg.analyses:
        with _stage("referral", timings):
            manifest["referral"] = _referral_stage(cfg, records, root / "referral")
    if "retention" in cfg.analyses:
        with _stage("retention", timings):
            manifest["retention"] = _retention_stage(cfg, records, window, root / "retention")
    if "centrality" in cfg.analyses:
        with _stage("centrality", timings):
            manifest["centrality"] = _centrality_stage(cfg, records, window, root / "centrality")
    return manifest


def _graph_stage(cfg: RunConfig, records, out: Path) -> dict:
    out.mkdir()
    gcfg = cfg["graph"]
    g = build_shared_patient_graph(records, gcfg["min_weight"])
    dist = degree_distribution(g, fit_min_degree=gcfg["fit_min_degree"])
    with open(out / "degree_distribution.csv", "w", encoding="utf-8") as fh:
        fh.write("degree,count\n")
        for d, c in dist.rows():
            fh.write(f"{d},{c}\n")
    fit = None if dist.tail_fit is None else dist.tail_fit.__dict__
    info = {"n_nodes": g.n_nodes, "n_edges": g.n_edges, "density": density(g) if g.n_nodes >= 2 else None,
            "tail_fit": fit, "fingerprint": g.fingerprint()}
    _dump_json(info, out / "summary.json")
    if gcfg["export_full"]:
        write_graphml(g, out / "shared_patient.graphml")
        write_dot(g, out / "shared_patient.dot")
    return info


def _top_pair_graph(rg, pairs):
    nodes = {p.physician_a for p in pairs} | {p.physician_b for p in pairs}
    return rg.subgraph(nodes)


def _referral_stage(cfg: RunConfig, records, out: Path) -> dict:
    out.mkdir()
    rcfg = cfg["referral"]
    rg = build_referral_graph(records)
    scores = mutual_referral_scores(rg)
    info: dict[str, Any] = {"status": scores.status, "max_mr": scores.max_mr, "n_pairs": len(scores),
                            "n_mutual_pairs": len(scores.mutual)}
    top = top_pairs(scores, rcfg["top_k"])
    top_list = [r.payload for r in top.rows]
    write_ranking_csv(top_list, out / "top_pairs.csv")
    write_ranking_csv(scores.pairs, out / "all_pairs.csv", decimals=None)
    info["top_pairs"] = [[p.physician_a, p.physician_b] for p in top_list[:10]]
    write_specialty_csv(specialty_pair_summary(scores), out / "specialty_pairs.csv")

    states = rcfg["states"]
    if states is None:
        counts = Counter(r.state for r in records if r.state)
        states = [s for s, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[: rcfg["n_states"]]]
    info["states"] = {}
    for st in states:
        sliced = slice_graph(rg, states=[st])
        st_scores = mutual_referral_scores(sliced)
        st_info = {"status": st_scores.status, "n_mutual_pairs": len(st_scores.mutual)}
        for k in rcfg["state_top_k"]:
            table = top_pairs(st_scores, k)
            plist = [r.payload for r in table.rows]
            write_ranking_csv(plist, out / f"state_{st}_top{k}.csv")
            sub = _top_pair_graph(sliced, plist)
            write_graphml(sub, out / f"state_{st}_top{k}.graphml")
            if sub.n_nodes >= 2:
                st_info[f"top{k}_density"] = density(sub)
        info["states"][st] = st_info
    for spec in rcfg["specialties"]:
        chosen = [p for p in scores.mutual if spec in (p.specialty_a, p.specialty_b)][: rcfg["specialty_top_k"]]
        slug = spec.replace(" ", "_")
        write_ranking_csv(chosen, out / f"specialty_{slug}.csv")
        write_graphml(_top_pair_graph(rg, chosen), out / f"specialty_{slug}.graphml")
    return info


def _retention_stage(cfg: RunConfig, records, window, out: Path) -> dict:
    out.mkdir()
    rc = cfg["retention"]
    profiles = build_patient_profiles(records)
    result = retention_scores(profiles, rc["min_k"], rc["include_single_claim"])
    write_scores_csv(result, out / "scores.csv")
    table = quarterly_retention_ranking(records, window, rc["top_n"], rc["min_k"], rc["include_single_claim"])
    table.write_grid_csv(out / "quarterly_rank.csv")
    table.write_long_csv(out / "quarterly_long.csv")
    rows = retention_scatter(profiles)
    write_scatter_csv(rows, out / "scatter.csv")
    meta = {"reference_slopes": list(REFERENCE_SLOPES), "n_patients": len(rows),
            "n_above_top_line": sum(r.above_top_line for r in rows)}
    _dump_json(meta, out / "scatter_meta.json")
    return {"all_zero": result.all_zero, "top": [s.physician_id for s in result.scores[:10]],
            "empty_quarters": sorted(str(q) for q in table.empty), **meta}


def _centrality_stage(cfg: RunConfig, records, window, out: Path) -> dict:
    out.mkdir()
    cc = cfg["centrality"]
    kwargs = {
        "degree": {"weighted": cc["degree_weighted"]},
        "eigenvector": {"tol": cc["tol"], "max_iter": cc["max_iter"]},
        "betweenness": {"weighted": cc["betweenness_weighted"]},
        "closeness": {},
    }
    g = build_shared_patient_graph(records, cc["min_weight"])
    info: dict[str, Any] = {"n_nodes": g.n_nodes, "n_edges": g.n_edges}
    if g.n_nodes == 0:
        raise GraphError("no physicians left to rank")
    metrics = list(dict.fromkeys(cc["metrics"] + [cc["metric"]]))
    vectors = [cen.compute(g, m, **kwargs[m]) for m in metrics]
    cen.write_vectors_csv(vectors, out / "scores.csv")
    info["top"] = {v.metric.value: v.ranking(cc["top_n"]) for v in vectors}
    if len(vectors) >= 2:
        reports = cen.concordance(vectors, cc["concordance_k"])
        cen.write_concordance_csv(reports, out / "concordance.csv")

    main = cc["metric"]
    table = cen.quarterly_centrality_ranking(records, window, main, cc["top_n"], cc["min_weight"], **kwargs[main])
    table.write_grid_csv(out / "quarterly_rank.csv")
    table.write_long_csv(out / "quarterly_long.csv")
    info["empty_quarters"] = sorted(str(q) for q in table.empty)

    if cc["core_size"] is not None:
        core_graph, core_vec = g, next(v for v in vectors if v.metric.value == main)
        if cc["core_quarter"] is not None:
            q = QuarterKey.parse(str(cc["core_quarter"]))
            qrecs = partition_quarters(records, window).partitions.get(q, [])
            core_graph = build_shared_patient_graph(qrecs, cc["min_weight"])
            core_vec = cen.compute(core_graph, main, **kwargs[main])
        size = min(cc["core_size"], core_graph.n_nodes)
        if size >= 2:
            core = cen.dense_core(core_graph, core_vec, size=size)
            write_graphml(core.graph, out / "core.graphml", node_values=core.labels, value_name=main)
            write_dot(core.graph, out / "core.dot", node_values=core.labels)
            core_info = {"metric": main, "size": size, "density": core.density, "members": sorted(core.labels),
                         "quarter": cc["core_quarter"]}
            _dump_json(core_info, out / "core.json")
            info["core"] = core_info
    return info


def describe_inputs(paths: list[str | Path], fmt: FormatConfig | None = None, threads: int = 1) -> dict:
    missing = [str(p) for p in paths if not Path(p).is_file()]
    if missing:
        raise ConfigError(f"input file not found: {', '.join(missing)}")
    parsed = parse_many([Path(p) for p in paths], fmt, threads)
    return describe(parsed.records, parsed.report.n_errors).as_dict()


__all__ = ["ConfigError", "IngestError", "RunConfig", "RunResult", "StageError", "describe_inputs", "run_pipeline"]
