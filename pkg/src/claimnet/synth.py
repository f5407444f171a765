"""Synthetic consultation claims with planted, recoverable structure.

Background activity is a preferential-attachment growth process over
physicians: every attachment edge is realized by one patient who consults
both physicians, so the shared-patient projection of the background is the
attachment graph itself. Planted structures are added on top with fresh
patients, and the manifest states what each one must look like after
ingestion.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from .ingest import BRAZILIAN_STATES, ClaimRecord, DateWindow, write_claims_csv
from .referral import mutual_referral

DEFAULT_STATES = {"SP": 0.40, "RJ": 0.15, "MG": 0.10, "BA": 0.10, "PE": 0.08, "DF": 0.07, "MS": 0.05, "PR": 0.05}
DEFAULT_SPECIALTIES = {
    "cardiology": 0.2, "ophthalmology": 0.2, "pediatrics": 0.2, "dermatology": 0.15,
    "allergy": 0.1, "vascular surgery": 0.1, "hematology": 0.05,
}


class ScenarioError(ValueError):
    """The scenario cannot be generated as configured."""


@dataclass
class MutualPair:
    w_ab: int
    w_ba: int
    state: str | None = None
    specialties: tuple[str, str] | None = None
    max_gap_days: int = 14
    kind: str = "mutual_pair"


@dataclass
class RetentionMagnet:
    n_loyal_patients: int
    r_max_target: float = 0.9
    k_target: int = 5
    kind: str = "retention_magnet"


@dataclass
class HubClique:
    size: int
    shared_patients: int
    kind: str = "hub_clique"


PLANTED_KINDS = {"mutual_pair": MutualPair, "retention_magnet": RetentionMagnet, "hub_clique": HubClique}


@dataclass
class ScenarioConfig:
    n_physicians: int = 2000
    n_patients: int = 6000
    n_claims: int = 12000
    start: date = date(2013, 4, 1)
    end: date = date(2014, 9, 30)
    state_mixture: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_STATES))
    specialty_mixture: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_SPECIALTIES))
    specialty_missing_rate: float = 0.6
    missing_state_rate: float = 0.25
    malformed_id_rate: float = 0.19
    attachment_m: int = 2
    n_providers: int | None = None
    planted: list = field(default_factory=list)
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        for key in ("start", "end"):
            if isinstance(data.get(key), str):
                data[key] = date.fromisoformat(data[key])
        planted = []
        for item in data.pop("planted", []) or []:
            item = dict(item)
            kind = item.pop("kind", None)
            if kind not in PLANTED_KINDS:
                raise ScenarioError(f"unknown planted structure kind {kind!r}")
            if "specialties" in item and item["specialties"] is not None:
                item["specialties"] = tuple(item["specialties"])
            planted.append(PLANTED_KINDS[kind](**item))
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ScenarioError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")
        return cls(planted=planted, **data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["start"], d["end"] = self.start.isoformat(), self.end.isoformat()
        for p in d["planted"]:
            if p.get("specialties") is not None:
                p["specialties"] = list(p["specialties"])
        return d

    @property
    def window(self) -> DateWindow:
        return DateWindow(self.start, self.end)


@dataclass
class SynthResult:
    records: list[ClaimRecord]
    manifest: dict

    def write(self, claims_path: str | Path, manifest_path: str | Path) -> None:
        write_claims_csv(self.records, claims_path)
        write_manifest(self.manifest, manifest_path)


def write_manifest(manifest: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def preferential_attachment_edges(n: int, m: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Barabasi-Albert growth: a star on ``m + 1`` seed nodes, then each new
    node links to ``m`` distinct existing nodes chosen with probability
    proportional to degree."""
    if m < 1 or n <= m:
        raise ScenarioError(f"preferential attachment needs n > m >= 1 (n={n}, m={m})")
    edges = [(0, t) for t in range(1, m + 1)]
    repeated = [0] * m + list(range(1, m + 1))
    for new in range(m + 1, n):
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(repeated[int(rng.integers(len(repeated)))])
        for t in sorted(targets):
            edges.append((t, new))
            repeated.extend((t, new))
    return edges


def _magnet_pattern(magnet: RetentionMagnet) -> int:
    """Claims at the magnet per block, with one claim at each other physician."""
    k, r = magnet.k_target, magnet.r_max_target
    if k == 1:
        return 3
    return max(1, round(r * (k - 1) / (1 - r)))


def validate(config: ScenarioConfig) -> None:
    def rate(name, v):
        if not 0.0 <= v <= 1.0:
            raise ScenarioError(f"{name} must lie in [0, 1], got {v}")

    for name in ("n_physicians", "n_patients", "n_claims", "attachment_m"):
        if getattr(config, name) < 1:
            raise ScenarioError(f"{name} must be positive")
    if config.end < config.start:
        raise ScenarioError("window end precedes start")
    rate("specialty_missing_rate", config.specialty_missing_rate)
    rate("missing_state_rate", config.missing_state_rate)
    rate("malformed_id_rate", config.malformed_id_rate)
    for name, mix in (("state_mixture", config.state_mixture), ("specialty_mixture", config.specialty_mixture)):
        if not mix or abs(sum(mix.values()) - 1.0) > 1e-9 or min(mix.values()) < 0:
            raise ScenarioError(f"{name} must be non-negative probabilities summing to 1")
    bad = set(config.state_mixture) - BRAZILIAN_STATES
    if bad:
        raise ScenarioError(f"unknown state code(s) {sorted(bad)}")
    n_valid = config.n_physicians - round(config.malformed_id_rate * config.n_physicians)
    needed = 0
    for p in config.planted:
        if isinstance(p, MutualPair):
            if p.w_ab < 0 or p.w_ba < 0 or p.w_ab + p.w_ba == 0:
                raise ScenarioError("mutual pair needs non-negative weights, not both zero")
            if p.state is not None and p.state not in config.state_mixture:
                raise ScenarioError(f"pair state {p.state} absent from the state mixture")
            needed += 2
        elif isinstance(p, RetentionMagnet):
            if p.n_loyal_patients < 1 or p.k_target < 1:
                raise ScenarioError("magnet needs at least one loyal patient and K >= 1")
            if p.k_target == 1 and p.r_max_target != 1.0:
                raise ScenarioError("K = 1 forces r_max = 1")
            if p.k_target > 1 and not 1.0 / p.k_target < p.r_max_target < 1.0:
                raise ScenarioError("r_max target must lie in (1/K, 1) when K > 1")
            needed += 1
        elif isinstance(p, HubClique):
            if p.size < 2 or p.shared_patients < 1:
                raise ScenarioError("clique needs size >= 2 and shared_patients >= 1")
            needed += p.size
    if needed > n_valid:
        raise ScenarioError(f"planted structures need {needed} valid physicians, only {n_valid} available")
    if config.n_physicians <= config.attachment_m:
        raise ScenarioError("n_physicians must exceed attachment_m")


class _Builder:
    def __init__(self, config: ScenarioConfig):
        self.cfg = config
        self.rng = np.random.default_rng(config.seed)
        self.start = config.start.toordinal()
        self.span = config.end.toordinal() - self.start + 1
        self.events: list[tuple[int, int, int, int]] = []  # (patient, day, order hint, physician)
        self.n_patients = 0
        self.background_patients: list[tuple[int, list[int]]] = []

    def new_patient(self) -> int:
        self.n_patients += 1
        return self.n_patients - 1

    def add(self, patient: int, day: int, hint: int, doc: int) -> None:
        self.events.append((patient, day, hint, doc))

    def random_day(self, lo: int | None = None, hi: int | None = None) -> int:
        lo = self.start if lo is None else lo
        hi = self.start + self.span - 1 if hi is None else hi
        return int(self.rng.integers(lo, hi + 1))


def generate(config: ScenarioConfig) -> SynthResult:
    """Generate claims and their ground-truth manifest (deterministic in ``seed``)."""
    validate(config)
    cfg = config
    b = _Builder(cfg)
    rng = b.rng
    n = cfg.n_physicians

    # physicians
    states = sorted(cfg.state_mixture)
    home = rng.choice(states, size=n, p=[cfg.state_mixture[s] for s in states])
    specs = sorted(cfg.specialty_mixture)
    spec_draw = rng.choice(specs, size=n, p=[cfg.specialty_mixture[s] for s in specs])
    spec_missing = rng.random(n) < cfg.specialty_missing_rate
    specialty = [None if spec_missing[i] else str(spec_draw[i]) for i in range(n)]
    registers = rng.choice(np.arange(1, 1_000_000), size=n, replace=False)
    n_bad = round(cfg.malformed_id_rate * n)
    malformed = set(rng.choice(n, size=n_bad, replace=False).tolist()) if n_bad else set()
    ids = []
    for i in range(n):
        st, reg = str(home[i]), int(registers[i])
        if i in malformed:
            style = i % 4
            ids.append([f"XX{reg}", f"{st}{reg}A", f"{reg}", f"{st}-{reg}"][style])
        else:
            ids.append(f"{st}{reg}")
    n_prov = cfg.n_providers or max(1, n // 5)
    provider = rng.integers(n_prov, size=n)

    # background attachment graph
    ba_edges = preferential_attachment_edges(n, cfg.attachment_m, rng) if n > cfg.attachment_m else []
    ba_adj: dict[int, set[int]] = {i: set() for i in range(n)}
    for u, v in ba_edges:
        ba_adj[u].add(v)
        ba_adj[v].add(u)

    # planted physician selection (valid IDs only, all distinct)
    valid_order = [i for i in range(n) if i not in malformed]
    used: set[int] = set()
    planted_docs: list = []
    for p in cfg.planted:
        if isinstance(p, HubClique):
            members = [i for i in valid_order if i not in used][: p.size]
            used.update(members)
            planted_docs.append(members)
        else:
            planted_docs.append(None)
    for idx, p in enumerate(cfg.planted):
        if isinstance(p, MutualPair):
            pool = [i for i in valid_order if i not in used and (p.state is None or home[i] == p.state)]
            if len(pool) < 2:
                raise ScenarioError(f"not enough free physicians for a pair in state {p.state}")
            for _ in range(1000):
                a, c = (int(x) for x in rng.choice(pool, size=2, replace=False))
                if c not in ba_adj[a]:
                    break
            else:
                raise ScenarioError("could not find a non-adjacent physician pair")
            used.update((a, c))
            if p.specialties is not None:
                specialty[a], specialty[c] = p.specialties
            planted_docs[idx] = (a, c)
        elif isinstance(p, RetentionMagnet):
            pool = [i for i in valid_order if i not in used]
            m = int(pool[int(rng.integers(len(pool)))])
            used.add(m)
            planted_docs[idx] = m
    free_valid = np.array([i for i in valid_order if i not in used])

    # background patients: one per attachment edge, visit order random
    for u, v in ba_edges:
        pt = b.new_patient()
        d1, d2 = sorted((b.random_day(), b.random_day()))
        first, second = (u, v) if rng.random() < 0.5 else (v, u)
        b.add(pt, d1, 0, first)
        b.add(pt, d2, 1, second)
        b.background_patients.append((pt, [first, second]))

    # planted structures
    quarters = cfg.window.quarters
    q_spans = [(max(q.start.toordinal(), b.start), min(q.end.toordinal(), b.start + b.span - 1)) for q in quarters]
    manifest_planted = []
    for p, docs in zip(cfg.planted, planted_docs):
        if isinstance(p, MutualPair):
            a, c = docs
            for first, second, count in ((a, c, p.w_ab), (c, a, p.w_ba)):
                for _ in range(count):
                    pt = b.new_patient()
                    gap = int(rng.integers(0, p.max_gap_days + 1))
                    d1 = b.random_day(hi=b.start + b.span - 1 - gap)
                    b.add(pt, d1, 0, first)
                    b.add(pt, d1 + gap, 1, second)
            ia, ic = (a, c) if ids[a] < ids[c] else (c, a)
            w_ab, w_ba = (p.w_ab, p.w_ba) if ia == a else (p.w_ba, p.w_ab)
            manifest_planted.append({
                "kind": "mutual_pair", "physician_a": ids[ia], "physician_b": ids[ic],
                "w_ab": w_ab, "w_ba": w_ba, "mr": mutual_referral(w_ab, w_ba), "exact": True,
                "state": p.state, "specialties": [specialty[ia], specialty[ic]],
            })
        elif isinstance(p, RetentionMagnet):
            mag = docs
            per_block = _magnet_pattern(p)
            others_needed = p.k_target - 1
            if others_needed > len(free_valid):
                raise ScenarioError("not enough physicians for the magnet's patients")
            for _ in range(p.n_loyal_patients):
                pt = b.new_patient()
                others = [int(x) for x in rng.choice(free_valid, size=others_needed, replace=False)] if others_needed else []
                for lo, hi in q_spans:
                    visits = [mag] * per_block + others
                    order = rng.permutation(len(visits))
                    days = np.sort(rng.integers(lo, hi + 1, size=len(visits)))
                    for hint, (k, day) in enumerate(zip(order, days)):
                        b.add(pt, int(day), hint, visits[int(k)])
            s_block = per_block + others_needed
            manifest_planted.append({
                "kind": "retention_magnet", "physician": ids[mag], "n_loyal_patients": p.n_loyal_patients,
                "k": p.k_target, "r_max": per_block / s_block, "claims_per_quarter": s_block,
                "contribution": per_block * p.k_target / s_block,
            })
        elif isinstance(p, HubClique):
            members = sorted(docs, key=lambda i: ids[i])
            for t in range(p.shared_patients):
                pt = b.new_patient()
                lo, hi = q_spans[t % len(q_spans)]
                days = np.sort(rng.integers(lo, hi + 1, size=len(members)))
                for hint, (doc, day) in enumerate(zip(members, days)):
                    b.add(pt, int(day), hint, doc)
            manifest_planted.append({
                "kind": "hub_clique", "members": [ids[i] for i in members],
                "shared_patients_min": p.shared_patients, "exact": False,
            })

    # single-visit patients to reach n_patients, chosen by attachment degree + 1
    extra = cfg.n_patients - b.n_patients
    if extra < 0:
        raise ScenarioError(f"n_patients={cfg.n_patients} below the {b.n_patients} patients the scenario requires")
    weights = np.array([len(ba_adj[i]) + 1 for i in range(n)], dtype=float)
    weights /= weights.sum()
    for doc in rng.choice(n, size=extra, p=weights):
        pt = b.new_patient()
        b.add(pt, b.random_day(), 0, int(doc))
        b.background_patients.append((pt, [int(doc)]))

    # repeat visits by background patients to reach n_claims
    surplus = cfg.n_claims - len(b.events)
    if surplus < 0:
        raise ScenarioError(f"n_claims={cfg.n_claims} below the {len(b.events)} claims the scenario requires")
    if surplus and not b.background_patients:
        raise ScenarioError("no background patients available for repeat visits")
    picks = rng.integers(len(b.background_patients), size=surplus)
    for k, pick in enumerate(picks):
        pt, docs = b.background_patients[int(pick)]
        doc = docs[int(rng.integers(len(docs)))]
        b.add(pt, b.random_day(), 2 + k, doc)

    records = _materialize(b, ids, home, specialty, provider, rng)
    valid_ids = sorted(ids[i] for i in range(n) if i not in malformed)
    manifest = {
        "config": cfg.to_dict(),
        "counts": {
            "n_claims": len(records),
            "n_patients": b.n_patients,
            "n_physicians": n,
            "n_valid_physicians": len(valid_ids),
            "n_malformed_physicians": len(malformed),
            "n_providers": len({r.provider_id for r in records}),
            "n_background_edges": len(ba_edges),
            "n_missing_state_claims": sum(r.state is None for r in records),
        },
        "malformed_physician_ids": sorted(ids[i] for i in malformed),
        "planted": manifest_planted,
    }
    return SynthResult(records, manifest)


def _materialize(b: _Builder, ids, home, specialty, provider, rng) -> list[ClaimRecord]:
    cfg = b.cfg
    events = sorted(b.events)
    patient_label = rng.permutation(b.n_patients)
    seq: Counter = Counter()
    rows = []
    for pt, day, _hint, doc in events:
        s = seq[(pt, day)]
        seq[(pt, day)] += 1
        rows.append((day, f"PT{patient_label[pt]:07d}", s, doc))
    rows.sort()
    n_missing = round(cfg.missing_state_rate * len(rows))
    blank = set(rng.choice(len(rows), size=n_missing, replace=False).tolist()) if n_missing else set()
    records = []
    for k, (day, patient, s, doc) in enumerate(rows):
        records.append(ClaimRecord(
            claim_id=f"C{k:08d}",
            physician_id=ids[doc],
            patient_id=patient,
            provider_id=f"PR{int(provider[doc]):05d}",
            event_date=date.fromordinal(day),
            sequence_no=s,
            state=None if k in blank else str(home[doc]),
            specialty=specialty[doc],
        ))
    return records


def load_config(path: str | Path) -> ScenarioConfig:
    import yaml

    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    return ScenarioConfig.from_dict(data)


def table1_pairs() -> list[MutualPair]:
    """The ten directed count pairs of the published top-10 mutual referral table."""
    counts = [(205, 196), (267, 108), (103, 102), (92, 72), (73, 71), (72, 70), (73, 66), (92, 63), (73, 63), (70, 62)]
    return [MutualPair(a, c) for a, c in counts]


__all__ = [
    "HubClique", "MutualPair", "RetentionMagnet", "ScenarioConfig", "ScenarioError", "SynthResult",
    "generate", "load_config", "preferential_attachment_edges", "table1_pairs", "validate", "write_manifest",
]
