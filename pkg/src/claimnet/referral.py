"""Mutual referral between physician pairs.

For a pair with directed patient counts ``w_ij`` and ``w_ji`` the mutual
referral is ``w_ij + w_ji - |w_ij - w_ji|`` (that is, ``2 * min``), and the
score divides it by the largest mutual referral in the graph at hand.
"""

from __future__ import annotations

import csv
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .graph import ReferralGraph
from .ranking import RankingRow, RankingTable

NO_MUTUAL_PAIRS = "no mutual pairs"
UNSPECIFIED = "unspecified"


def mutual_referral(w_ij: int, w_ji: int) -> int:
    if w_ij < 0 or w_ji < 0:
        raise ValueError("weights must be non-negative")
    return w_ij + w_ji - abs(w_ij - w_ji)


@dataclass
class MutualReferralPair:
    physician_a: str
    physician_b: str
    w_ab: int
    w_ba: int
    mr: int
    mrs: float
    median_gap_days: float | None = None
    state_a: str | None = None
    state_b: str | None = None
    specialty_a: str | None = None
    specialty_b: str | None = None

    @property
    def key(self) -> tuple[str, str]:
        return (self.physician_a, self.physician_b)


@dataclass
class PairScores:
    """All scored pairs, best first. ``status`` is ``"ok"`` or ``NO_MUTUAL_PAIRS``."""

    pairs: list[MutualReferralPair] = field(default_factory=list)
    max_mr: int = 0
    status: str = "ok"

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    @property
    def mutual(self) -> list[MutualReferralPair]:
        return [p for p in self.pairs if p.mr > 0]


def mutual_referral_scores(graph: ReferralGraph) -> PairScores:
    """Score every unordered pair joined by at least one directed edge.

    Normalization uses the maximum over ``graph`` only, so a state slice is
    scored against its own best pair. If no pair has referrals in both
    directions the result is empty with status ``NO_MUTUAL_PAIRS``.
    """
    seen: dict[tuple[str, str], tuple[int, int]] = {}
    for u, v, w in graph.edges():
        a, b = (u, v) if u < v else (v, u)
        if (a, b) not in seen:
            seen[(a, b)] = (graph.weight(a, b), graph.weight(b, a))
    max_mr = max((mutual_referral(x, y) for x, y in seen.values()), default=0)
    if max_mr == 0:
        return PairScores([], 0, NO_MUTUAL_PAIRS)
    pairs = []
    for (a, b), (w_ab, w_ba) in seen.items():
        mr = mutual_referral(w_ab, w_ba)
        pairs.append(MutualReferralPair(
            a, b, w_ab, w_ba, mr, mr / max_mr,
            median_gap_days=median_gap(graph, (a, b)),
            state_a=graph.attr(a, "state"), state_b=graph.attr(b, "state"),
            specialty_a=graph.attr(a, "specialty"), specialty_b=graph.attr(b, "specialty"),
        ))
    pairs.sort(key=lambda p: (-p.mr, p.physician_a, p.physician_b))
    return PairScores(pairs, max_mr, "ok")


def median_gap(graph: ReferralGraph, pair: tuple[str, str]) -> float | None:
    gaps = graph.pair_gaps(*pair)
    if not gaps:
        return None
    return float(statistics.median(gaps))


def top_pairs(scores: PairScores | Iterable[MutualReferralPair], k: int, scope: str = "global") -> RankingTable:
    """First ``k`` mutual pairs; ``scope="per-state"`` ranks within each state.

    Pairs with zero mutual referral never enter the ranking. Under per-state
    scope only pairs whose endpoints share a known state are kept, and the
    quarter column carries the state code.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    mutual = [p for p in scores if p.mr > 0]
    if scope == "global":
        groups = {None: mutual}
    elif scope == "per-state":
        groups = defaultdict(list)
        for p in mutual:
            if p.state_a is not None and p.state_a == p.state_b:
                groups[p.state_a].append(p)
        groups = dict(sorted(groups.items()))
    else:
        raise ValueError(f"unknown scope {scope!r}")
    table = RankingTable(columns=list(groups))
    for label, plist in groups.items():
        plist = sorted(plist, key=lambda p: (-p.mrs, p.physician_a, p.physician_b))
        if len(plist) < k:
            table.short.add(label)
        for rank, p in enumerate(plist[:k], start=1):
            table.rows.append(RankingRow(f"{p.physician_a}|{p.physician_b}", p.mrs, label, rank, payload=p))
    return table


@dataclass
class SpecialtyPairRow:
    specialty_a: str
    specialty_b: str
    pair_count: int
    weight_mass: float


def specialty_pair_summary(scores: Iterable[MutualReferralPair], specialty_map: Mapping[str, str | None] | None = None) -> list[SpecialtyPairRow]:
    """Aggregate mutual pairs by unordered specialty pair.

    ``weight_mass`` is the summed mrs. Without ``specialty_map`` the
    specialties stored on each pair are used; unknowns become ``"unspecified"``.
    """
    counts: dict[tuple[str, str], int] = defaultdict(int)
    mass: dict[tuple[str, str], float] = defaultdict(float)
    for p in scores:
        if p.mr <= 0:
            continue
        if specialty_map is not None:
            sa, sb = specialty_map.get(p.physician_a), specialty_map.get(p.physician_b)
        else:
            sa, sb = p.specialty_a, p.specialty_b
        key = tuple(sorted((sa or UNSPECIFIED, sb or UNSPECIFIED)))
        counts[key] += 1
        mass[key] += p.mrs
    rows = [SpecialtyPairRow(a, b, counts[(a, b)], mass[(a, b)]) for a, b in counts]
    rows.sort(key=lambda r: (-r.weight_mass, r.specialty_a, r.specialty_b))
    return rows


RANKING_COLUMNS = ["pair_a", "pair_b", "w_ab", "w_ba", "mr", "mrs", "median_gap_days",
                   "state_a", "state_b", "specialty_a", "specialty_b"]


def write_ranking_csv(pairs: Iterable[MutualReferralPair], path: str | Path, decimals: int | None = 3) -> None:
    """Write the pair ranking; ``decimals=None`` keeps full precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RANKING_COLUMNS)
        for p in pairs:
            mrs = f"{p.mrs:.{decimals}f}" if decimals is not None else repr(p.mrs)
            gap = "" if p.median_gap_days is None else repr(p.median_gap_days)
            w.writerow([p.physician_a, p.physician_b, p.w_ab, p.w_ba, p.mr, mrs, gap,
                        p.state_a or "", p.state_b or "", p.specialty_a or "", p.specialty_b or ""])


def write_specialty_csv(rows: Iterable[SpecialtyPairRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["specialty_a", "specialty_b", "pair_count", "weight_mass"])
        for r in rows:
            w.writerow([r.specialty_a, r.specialty_b, r.pair_count, repr(r.weight_mass)])


def pairs_from_counts(counts: Iterable[tuple[str, str, int, int]]) -> ReferralGraph:
    """Referral graph holding only the given directed counts (no gaps)."""
    adj: dict[str, dict[str, int]] = {}
    for a, b, w_ab, w_ba in counts:
        adj.setdefault(a, {})
        adj.setdefault(b, {})
        if w_ab:
            adj[a][b] = w_ab
        if w_ba:
            adj[b][a] = w_ba
    return ReferralGraph(adj=adj, attrs={n: {"state": None, "specialty": None} for n in adj})
