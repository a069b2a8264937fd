"""Canonical record schema, normalization and ingestion I/O.

Records arrive as loosely typed string maps (:class:`RawRecord`) from CSV or
JSON-lines files and are normalized into immutable :class:`CanonicalRecord`
values.  Invalid field values are demoted to missing instead of rejecting the
whole record; only a missing or empty ``id`` is a record-level error.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

logger = logging.getLogger(__name__)

MATCH_FIELDS = ("ssn", "phone_number", "full_name", "full_address", "birth_date")
KNOWN_FIELDS = ("id",) + MATCH_FIELDS + ("source_timestamp", "source_id")

_WS = re.compile(r"\s+")
_SSN_CHARS = re.compile(r"[0-9\s\-.]+")
_PHONE_CHARS = re.compile(r"\+?[0-9\s\-.()]+")
_NON_DIGIT = re.compile(r"[^0-9]")
_TOKEN_SPLIT = re.compile(r"[\W_]+")

PHONE_MIN_DIGITS = 7
PHONE_MAX_DIGITS = 15


class RecordError(ValueError):
    """A record cannot be ingested at all (as opposed to a bad field)."""


@dataclass(frozen=True)
class RawRecord:
    id: str
    fields: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class CanonicalRecord:
    """Normalized record. Every match attribute is optional (``None``)."""

    id: str
    ssn: str | None = None
    phone_number: str | None = None
    full_name: str | None = None
    full_address: str | None = None
    birth_date: dt.date | None = None
    source_timestamp: dt.datetime | None = None
    source_id: str = ""
    extras: Mapping[str, str] = field(default_factory=dict)

    def to_raw(self) -> RawRecord:
        """Re-serialize into the ingestion string form."""
        out: dict[str, str] = {}
        for name in ("ssn", "phone_number", "full_name", "full_address"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        if self.birth_date is not None:
            out["birth_date"] = self.birth_date.isoformat()
        if self.source_timestamp is not None:
            out["source_timestamp"] = self.source_timestamp.isoformat()
        if self.source_id:
            out["source_id"] = self.source_id
        out.update(self.extras)
        return RawRecord(self.id, out)


def collapse_ws(s: str) -> str:
    return _WS.sub(" ", s).strip()


def normalize_ssn(value: str | None) -> str | None:
    if not value or not _SSN_CHARS.fullmatch(value):
        return None
    digits = _NON_DIGIT.sub("", value)
    return digits if len(digits) == 9 else None


def normalize_phone(value: str | None) -> str | None:
    if not value:
        return None
    value = value.strip()
    if not _PHONE_CHARS.fullmatch(value):
        return None
    digits = _NON_DIGIT.sub("", value)
    if not PHONE_MIN_DIGITS <= len(digits) <= PHONE_MAX_DIGITS:
        return None
    return digits


def normalize_text(value: str | None) -> str | None:
    if value is None:
        return None
    value = collapse_ws(value.casefold())
    return value or None


def address_tokens(s: str) -> set[str]:
    """Split on whitespace and punctuation, lowercase, drop empties."""
    return {t for t in _TOKEN_SPLIT.split(s.casefold()) if t}


def normalize_address(value: str | None) -> str | None:
    value = normalize_text(value)
    # an address with no tokens carries no comparable content
    if value is None or not address_tokens(value):
        return None
    return value


def parse_date(value: str | None, today: dt.date | None = None) -> dt.date | None:
    if not value:
        return None
    try:
        d = dt.date.fromisoformat(value.strip())
    except ValueError:
        return None
    if d > (today or dt.date.today()):
        return None
    return d


def parse_instant(value: str | None) -> dt.datetime | None:
    if not value:
        return None
    value = value.strip()
    if value.endswith(("Z", "z")):
        value = value[:-1] + "+00:00"
    try:
        ts = dt.datetime.fromisoformat(value)
    except ValueError:
        return None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=dt.timezone.utc)
    return ts.astimezone(dt.timezone.utc)


def normalize_record(raw: RawRecord) -> CanonicalRecord:
    """Normalize a raw record; raises :class:`RecordError` on a missing id."""
    rid = (raw.id or "").strip()
    if not rid:
        raise RecordError("record has no id")
    f = raw.fields
    extras = {k: str(v) for k, v in f.items() if k not in KNOWN_FIELDS}
    return CanonicalRecord(
        id=rid,
        ssn=normalize_ssn(f.get("ssn")),
        phone_number=normalize_phone(f.get("phone_number")),
        full_name=normalize_text(f.get("full_name")),
        full_address=normalize_address(f.get("full_address")),
        birth_date=parse_date(f.get("birth_date")),
        source_timestamp=parse_instant(f.get("source_timestamp")),
        source_id=(f.get("source_id") or "").strip(),
        extras=extras,
    )


def completeness_score(r: CanonicalRecord) -> float:
    """Fraction of the five match attributes that are present."""
    return sum(getattr(r, name) is not None for name in MATCH_FIELDS) / len(MATCH_FIELDS)


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------


class MalformedInput(RecordError):
    def __init__(self, path: Path, line: int, reason: str) -> None:
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line


def detect_format(path: str | Path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in (".jsonl", ".ndjson", ".json"):
        return "jsonl"
    raise ValueError(f"cannot infer record format from {path!r}")


def _raw_from_mapping(obj: Mapping[str, Any]) -> RawRecord:
    rid = obj.get("id")
    if rid is None or not str(rid).strip():
        raise RecordError("record has no id")
    fields = {
        str(k): str(v) for k, v in obj.items() if k != "id" and v is not None and v != ""
    }
    return RawRecord(str(rid).strip(), fields)


def iter_raw_records(
    path: str | Path, strict: bool = False, errors: list[MalformedInput] | None = None
) -> Iterator[RawRecord]:
    """Yield raw records from a CSV or JSON-lines file.

    Malformed rows are skipped with a warning (and appended to ``errors`` when
    given) unless ``strict`` is set, in which case :class:`MalformedInput` is
    raised at the first bad row.
    """
    path = Path(path)
    fmt = detect_format(path)

    def bad(line: int, reason: str) -> None:
        err = MalformedInput(path, line, reason)
        if strict:
            raise err
        logger.warning("skipping malformed record: %s", err)
        if errors is not None:
            errors.append(err)

    with path.open(newline="", encoding="utf-8") as fh:
        if fmt == "csv":
            reader = csv.DictReader(fh)
            for row in reader:
                lineno = reader.line_num
                if None in row or any(v is None for v in row.values()):
                    bad(lineno, "wrong number of columns")
                    continue
                try:
                    yield _raw_from_mapping(row)
                except RecordError as exc:
                    bad(lineno, str(exc))
        else:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    bad(lineno, f"invalid JSON: {exc.msg}")
                    continue
                if not isinstance(obj, dict):
                    bad(lineno, "line is not a JSON object")
                    continue
                try:
                    yield _raw_from_mapping(obj)
                except RecordError as exc:
                    bad(lineno, str(exc))


def read_records(
    path: str | Path, strict: bool = False, errors: list[MalformedInput] | None = None
) -> list[CanonicalRecord]:
    return [normalize_record(r) for r in iter_raw_records(path, strict, errors)]


def _columns(rows: list[dict[str, str]]) -> list[str]:
    extra = sorted({k for row in rows for k in row} - set(KNOWN_FIELDS))
    return list(KNOWN_FIELDS) + extra


def write_raw_records(path: str | Path, records: Iterable[RawRecord], fmt: str | None = None) -> None:
    """Write records in the ingestion format (format inferred from suffix)."""
    path = Path(path)
    fmt = fmt or detect_format(path)
    rows = [{"id": r.id, **r.fields} for r in records]
    with path.open("w", newline="", encoding="utf-8") as fh:
        if fmt == "csv":
            writer = csv.DictWriter(fh, fieldnames=_columns(rows), lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
        else:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def write_records(path: str | Path, records: Iterable[CanonicalRecord], fmt: str | None = None) -> None:
    write_raw_records(path, (r.to_raw() for r in records), fmt)
