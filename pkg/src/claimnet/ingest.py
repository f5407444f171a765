"""Parsing, validation, filtering and quarterly partitioning of consultation claims."""

from __future__ import annotations

import csv
import io
import re
from functools import lru_cache
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator

# The 26 states plus the Federal District.
BRAZILIAN_STATES = frozenset(
    "AC AL AP AM BA CE DF ES GO MA MT MS MG PA PB PR PE PI RJ RN RS RO RR SC SP SE TO".split()
)

MANDATORY_FIELDS = ("claim_id", "physician_id", "patient_id", "provider_id", "event_date")
OPTIONAL_FIELDS = ("procedure_kind", "sequence_no", "state", "specialty")

_ID_PATTERN = re.compile(r"^([A-Z]{2})(\d+)$")


class ProcedureKind(str, Enum):
    CONSULTATION = "consultation"
    OTHER = "other"


class IngestError(Exception):
    """Fatal ingestion problem (unreadable source or unusable header)."""


@dataclass(frozen=True, slots=True)
class ClaimRecord:
    claim_id: str
    physician_id: str
    patient_id: str
    provider_id: str
    event_date: date
    sequence_no: int = 0
    state: str | None = None
    specialty: str | None = None
    procedure_kind: ProcedureKind = ProcedureKind.CONSULTATION

    @property
    def physician_key(self) -> str:
        """Canonical physician ID when well formed, else the stripped raw string."""
        pid = validate_physician_id(self.physician_id)
        return pid.canonical if pid.valid else self.physician_id.strip()

    @property
    def quarter(self) -> "QuarterKey":
        return QuarterKey.of(self.event_date)

    @property
    def order_key(self) -> tuple[date, int]:
        return (self.event_date, self.sequence_no)


@dataclass(frozen=True, slots=True)
class PhysicianId:
    state_code: str | None
    register_number: int | None
    valid: bool
    raw: str = ""

    @property
    def canonical(self) -> str:
        if not self.valid:
            return self.raw
        return f"{self.state_code}{self.register_number}"


@dataclass(frozen=True, slots=True, order=True)
class QuarterKey:
    year: int
    quarter: int

    @classmethod
    def of(cls, d: date) -> "QuarterKey":
        return cls(d.year, (d.month - 1) // 3 + 1)

    @classmethod
    def parse(cls, text: str) -> "QuarterKey":
        m = re.fullmatch(r"(\d{4})Q([1-4])", text.strip())
        if not m:
            raise ValueError(f"bad quarter label {text!r}")
        return cls(int(m.group(1)), int(m.group(2)))

    @property
    def start(self) -> date:
        return date(self.year, 3 * (self.quarter - 1) + 1, 1)

    @property
    def end(self) -> date:
        if self.quarter == 4:
            return date(self.year, 12, 31)
        nxt = date(self.year, 3 * self.quarter + 1, 1)
        return date.fromordinal(nxt.toordinal() - 1)

    def next(self) -> "QuarterKey":
        if self.quarter == 4:
            return QuarterKey(self.year + 1, 1)
        return QuarterKey(self.year, self.quarter + 1)

    def __str__(self) -> str:
        return f"{self.year}Q{self.quarter}"


def quarters_between(start: date, end: date) -> list[QuarterKey]:
    """All quarters overlapping the closed interval [start, end], in order."""
    out: list[QuarterKey] = []
    q, last = QuarterKey.of(start), QuarterKey.of(end)
    while q <= last:
        out.append(q)
        q = q.next()
    return out


@dataclass(frozen=True)
class DateWindow:
    start: date
    end: date

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError(f"window end {self.end} precedes start {self.start}")

    def __contains__(self, d: date) -> bool:
        return self.start <= d <= self.end

    @property
    def quarters(self) -> list[QuarterKey]:
        return quarters_between(self.start, self.end)

    @classmethod
    def covering(cls, records: Iterable[ClaimRecord]) -> "DateWindow | None":
        dates = [r.event_date for r in records]
        if not dates:
            return None
        return cls(min(dates), max(dates))


@dataclass
class FormatConfig:
    """Column mapping and dialect for delimiter-separated claims files.

    ``columns`` maps record field names to header names; unmapped fields use
    their own name as the header.
    """

    delimiter: str = ","
    columns: dict[str, str] = field(default_factory=dict)
    window: DateWindow | None = None

    def header_for(self, name: str) -> str:
        return self.columns.get(name, name)


@dataclass(frozen=True, slots=True)
class RowError:
    row_no: int
    field: str
    reason: str


@dataclass
class ErrorReport:
    rows_read: int = 0
    errors: list[RowError] = field(default_factory=list)

    @property
    def n_errors(self) -> int:
        return len(self.errors)

    def tally(self) -> dict[str, int]:
        return dict(sorted(Counter(e.field for e in self.errors).items()))

    def summary(self) -> str:
        lines = [f"rows read: {self.rows_read}", f"row errors: {self.n_errors}"]
        lines += [f"  {name}: {n}" for name, n in self.tally().items()]
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row_no", "field", "reason"])
            for e in self.errors:
                w.writerow([e.row_no, e.field, e.reason])


@dataclass
class ParseResult:
    records: list[ClaimRecord]
    report: ErrorReport


@lru_cache(maxsize=1 << 20)
def validate_physician_id(raw: str) -> PhysicianId:
    """Parse ``<state code><register number>``; never raises."""
    text = (raw or "").strip().upper()
    m = _ID_PATTERN.match(text)
    if m and m.group(1) in BRAZILIAN_STATES:
        number = int(m.group(2))
        if number > 0:
            return PhysicianId(m.group(1), number, True, raw)
    return PhysicianId(None, None, False, raw)


def _open_text(source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, Path)):
        try:
            return open(source, "r", encoding="utf-8", newline=""), True
        except OSError as exc:
            raise IngestError(f"cannot read {source}: {exc}") from exc
    if isinstance(source, (bytes, bytearray)):
        try:
            return io.StringIO(bytes(source).decode("utf-8"), newline=""), True
        except UnicodeDecodeError as exc:
            raise IngestError(f"source is not UTF-8: {exc}") from exc
    if isinstance(source, io.TextIOBase):
        return source, False
    # binary file-like
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def iter_claims(source, config: FormatConfig | None = None, report: ErrorReport | None = None) -> Iterator[ClaimRecord]:
    """Stream records from ``source``; row failures are appended to ``report``.

    ``source`` may be a path, raw bytes, or a text/binary file object. Header
    problems raise :class:`IngestError` before any record is produced.
    """
    config = config or FormatConfig()
    report = report if report is not None else ErrorReport()
    fh, owned = _open_text(source)
    try:
        reader = csv.reader(fh, delimiter=config.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError("empty source: header row required") from None
        except (UnicodeDecodeError, csv.Error) as exc:
            raise IngestError(f"unreadable header: {exc}") from exc
        header = [h.strip().lstrip("﻿") for h in header]
        index = {name: i for i, name in enumerate(header)}
        missing = [config.header_for(f) for f in MANDATORY_FIELDS if config.header_for(f) not in index]
        if missing:
            raise IngestError(f"missing mandatory column(s): {', '.join(missing)}")
        cols = {f: index.get(config.header_for(f)) for f in MANDATORY_FIELDS + OPTIONAL_FIELDS}
        derive_sequence = cols["sequence_no"] is None
        seen_ids: set[str] = set()
        day_counter: Counter = Counter()

        row_no = 0
        while True:
            try:
                row = next(reader)
            except StopIteration:
                break
            except (UnicodeDecodeError, csv.Error) as exc:
                raise IngestError(f"unreadable source after row {row_no}: {exc}") from exc
            row_no += 1
            if not row or (len(row) == 1 and not row[0].strip()):
                row_no -= 1
                continue
            report.rows_read += 1
            rec = _parse_row(row, row_no, cols, config, seen_ids, report)
            if rec is None:
                continue
            if derive_sequence:
                key = (rec.patient_id, rec.event_date)
                seq = day_counter[key]
                day_counter[key] += 1
                rec = _replace_seq(rec, seq)
            seen_ids.add(rec.claim_id)
            yield rec
    finally:
        if owned:
            fh.close()


def _replace_seq(rec: ClaimRecord, seq: int) -> ClaimRecord:
    return ClaimRecord(
        rec.claim_id, rec.physician_id, rec.patient_id, rec.provider_id, rec.event_date,
        seq, rec.state, rec.specialty, rec.procedure_kind,
    )


def _parse_row(row, row_no, cols, config, seen_ids, report) -> ClaimRecord | None:
    def get(name):
        i = cols[name]
        if i is None or i >= len(row):
            return ""
        return row[i].strip()

    def fail(name, reason):
        report.errors.append(RowError(row_no, name, reason))
        return None

    for name in MANDATORY_FIELDS:
        if not get(name):
            return fail(name, "empty mandatory field")
    claim_id = get("claim_id")
    if claim_id in seen_ids:
        return fail("claim_id", f"duplicate claim_id {claim_id}")
    try:
        event_date = date.fromisoformat(get("event_date"))
    except ValueError:
        return fail("event_date", f"unparseable date {get('event_date')!r}")
    if config.window is not None and event_date not in config.window:
        return fail("event_date", f"{event_date} outside study window")
    seq_text = get("sequence_no")
    sequence_no = 0
    if seq_text:
        try:
            sequence_no = int(seq_text)
        except ValueError:
            return fail("sequence_no", f"not an integer: {seq_text!r}")
        if sequence_no < 0:
            return fail("sequence_no", "negative sequence number")
    kind_text = get("procedure_kind").lower()
    if not kind_text or kind_text == "consultation":
        kind = ProcedureKind.CONSULTATION
    elif kind_text == "other":
        kind = ProcedureKind.OTHER
    else:
        return fail("procedure_kind", f"unknown procedure kind {kind_text!r}")
    state = get("state").upper() or None
    if state is not None and state not in BRAZILIAN_STATES:
        return fail("state", f"unknown state code {state!r}")
    return ClaimRecord(
        claim_id=claim_id,
        physician_id=get("physician_id"),
        patient_id=get("patient_id"),
        provider_id=get("provider_id"),
        event_date=event_date,
        sequence_no=sequence_no,
        state=state,
        specialty=get("specialty") or None,
        procedure_kind=kind,
    )


def parse_claims(source, config: FormatConfig | None = None) -> ParseResult:
    report = ErrorReport()
    records = list(iter_claims(source, config, report))
    return ParseResult(records, report)


def parse_many(sources: list, config: FormatConfig | None = None, threads: int = 1) -> ParseResult:
    """Parse several files, merging in the given order.

    Claim-ID uniqueness is enforced across files: later duplicates become row
    errors of the file they appear in (row numbers are per file).
    """
    if threads > 1 and len(sources) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda s: parse_claims(s, config), sources))
    else:
        parts = [parse_claims(s, config) for s in sources]
    merged = ErrorReport()
    records: list[ClaimRecord] = []
    seen: set[str] = set()
    for part in parts:
        merged.rows_read += part.report.rows_read
        merged.errors.extend(part.report.errors)
        for rec in part.records:
            if rec.claim_id in seen:
                merged.errors.append(RowError(-1, "claim_id", f"duplicate claim_id {rec.claim_id} across files"))
                continue
            seen.add(rec.claim_id)
            records.append(rec)
    return ParseResult(records, merged)


@dataclass(frozen=True)
class FilterPolicy:
    drop_malformed_physician: bool = True
    drop_missing_state: bool = False


@dataclass
class FilterResult:
    records: list[ClaimRecord]
    tally: dict[str, int]

    @property
    def n_excluded(self) -> int:
        return sum(self.tally.values())


def filter_valid(records: Iterable[ClaimRecord], policy: FilterPolicy = FilterPolicy()) -> FilterResult:
    """Apply the exclusion policy, preserving order.

    Non-consultation records are always excluded. Each excluded record is
    tallied once, under the first failing reason in the order
    non_consultation, malformed_physician, missing_state.
    """
    kept: list[ClaimRecord] = []
    tally: Counter = Counter()
    for rec in records:
        if rec.procedure_kind is not ProcedureKind.CONSULTATION:
            tally["non_consultation"] += 1
        elif policy.drop_malformed_physician and not validate_physician_id(rec.physician_id).valid:
            tally["malformed_physician"] += 1
        elif policy.drop_missing_state and rec.state is None:
            tally["missing_state"] += 1
        else:
            kept.append(rec)
    return FilterResult(kept, dict(sorted(tally.items())))


@dataclass
class QuarterPartition:
    partitions: dict[QuarterKey, list[ClaimRecord]]
    overflow: list[ClaimRecord] = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return bool(self.overflow)


def partition_quarters(records: Iterable[ClaimRecord], window: DateWindow | None = None) -> QuarterPartition:
    """Split records by calendar quarter; out-of-window records go to ``overflow``."""
    parts: dict[QuarterKey, list[ClaimRecord]] = defaultdict(list)
    overflow: list[ClaimRecord] = []
    for rec in records:
        if window is not None and rec.event_date not in window:
            overflow.append(rec)
        else:
            parts[rec.quarter].append(rec)
    return QuarterPartition(dict(sorted(parts.items())), overflow)


@dataclass
class DatasetSummary:
    n_claims: int
    n_physicians: int
    n_patients: int
    n_providers: int
    valid_id_fraction: float
    missing_state_fraction: float
    claims_per_state: dict[str, int]
    first_date: date | None
    last_date: date | None
    n_row_errors: int = 0

    def as_dict(self) -> dict:
        return {
            "n_claims": self.n_claims,
            "n_physicians": self.n_physicians,
            "n_patients": self.n_patients,
            "n_providers": self.n_providers,
            "valid_id_fraction": self.valid_id_fraction,
            "missing_state_fraction": self.missing_state_fraction,
            "claims_per_state": self.claims_per_state,
            "first_date": self.first_date.isoformat() if self.first_date else None,
            "last_date": self.last_date.isoformat() if self.last_date else None,
            "n_row_errors": self.n_row_errors,
        }


def describe(records: list[ClaimRecord], n_row_errors: int = 0) -> DatasetSummary:
    """Summary statistics; the valid-ID fraction is over distinct physician IDs."""
    physicians = {r.physician_id.strip() for r in records}
    n_valid = sum(validate_physician_id(p).valid for p in physicians)
    per_state = Counter(r.state for r in records if r.state is not None)
    missing = sum(r.state is None for r in records)
    dates = [r.event_date for r in records]
    n = len(records)
    return DatasetSummary(
        n_claims=n,
        n_physicians=len(physicians),
        n_patients=len({r.patient_id for r in records}),
        n_providers=len({r.provider_id for r in records}),
        valid_id_fraction=n_valid / len(physicians) if physicians else 0.0,
        missing_state_fraction=missing / n if n else 0.0,
        claims_per_state=dict(sorted(per_state.items())),
        first_date=min(dates) if dates else None,
        last_date=max(dates) if dates else None,
        n_row_errors=n_row_errors,
    )


def write_claims_csv(records: Iterable[ClaimRecord], path_or_fh, delimiter: str = ",") -> None:
    """Write records in the default column layout read by :func:`parse_claims`."""
    header = ["claim_id", "physician_id", "patient_id", "provider_id", "procedure_kind",
              "event_date", "sequence_no", "state", "specialty"]

    def _write(fh):
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(header)
        for r in records:
            w.writerow([r.claim_id, r.physician_id, r.patient_id, r.provider_id, r.procedure_kind.value,
                        r.event_date.isoformat(), r.sequence_no, r.state or "", r.specialty or ""])

    if isinstance(path_or_fh, (str, Path)):
        with open(path_or_fh, "w", newline="", encoding="utf-8") as fh:
            _write(fh)
    else:
        _write(path_or_fh)


def physician_attributes(records: Iterable[ClaimRecord]) -> dict[str, dict[str, str | None]]:
    """Most frequent non-missing state and specialty per physician (ties: alphabetical)."""
    states: dict[str, Counter] = defaultdict(Counter)
    specs: dict[str, Counter] = defaultdict(Counter)
    for r in records:
        key = r.physician_key
        states[key]
        if r.state:
            states[key][r.state] += 1
        if r.specialty:
            specs[key][r.specialty] += 1

    def mode(c: Counter) -> str | None:
        items = [(k, v) for k, v in c.items() if k is not None and v > 0]
        if not items:
            return None
        return min(items, key=lambda kv: (-kv[1], kv[0]))[0]

    return {k: {"state": mode(states[k]), "specialty": mode(specs.get(k, Counter()))} for k in states}
