import datetime as dt
import json

import pytest

from mdmerge.records import (
    CanonicalRecord,
    MalformedInput,
    RawRecord,
    RecordError,
    completeness_score,
    iter_raw_records,
    normalize_phone,
    normalize_record,
    normalize_ssn,
    parse_date,
    parse_instant,
    read_records,
    write_records,
)


def norm(**fields):
    return normalize_record(RawRecord("x", fields))


def test_ssn_punctuation_stripped():
    assert norm(ssn="123-45-6789").ssn == "123456789"
    assert norm(ssn="123 45 6789").ssn == "123456789"


def test_name_whitespace_and_case():
    assert norm(full_name="  Jane   DOE ").full_name == "jane doe"


@pytest.mark.parametrize("bad", ["12AB", "12345678", "1234567890", "", "12-34-5678x"])
def test_invalid_ssn_demoted(bad):
    assert norm(ssn=bad).ssn is None


@pytest.mark.parametrize(
    "raw, expected",
    [("(555) 123-4567", "5551234567"), ("555.123.4567", "5551234567"), ("+44 20 7946 0958", "442079460958")],
)
def test_phone_normalized(raw, expected):
    assert normalize_phone(raw) == expected


@pytest.mark.parametrize("bad", ["123", "phone", "555-CALL-NOW", "1" * 16])
def test_invalid_phone_demoted(bad):
    assert normalize_phone(bad) is None


def test_dates():
    assert parse_date("1980-02-29") == dt.date(1980, 2, 29)
    assert parse_date("1981-02-29") is None
    assert parse_date("2030-01-01", today=dt.date(2026, 1, 1)) is None
    assert parse_instant("2020-01-01T00:00:00Z") == dt.datetime(2020, 1, 1, tzinfo=dt.timezone.utc)
    assert parse_instant("2020-01-01T00:00:00").tzinfo is not None
    assert parse_instant("yesterday") is None


def test_empty_address_is_missing():
    assert norm(full_address=" ,. ").full_address is None


def test_missing_id_rejected():
    with pytest.raises(RecordError):
        normalize_record(RawRecord("  ", {}))


def test_unknown_fields_kept_as_extras():
    r = norm(full_name="a", loyalty_tier="gold")
    assert r.extras == {"loyalty_tier": "gold"}


def test_completeness():
    full = CanonicalRecord(
        "a", ssn="123456789", phone_number="5551234567", full_name="a b",
        full_address="1 main st", birth_date=dt.date(1990, 1, 1),
    )
    assert completeness_score(full) == 1.0
    assert completeness_score(CanonicalRecord("b")) == 0.0
    assert completeness_score(CanonicalRecord("c", ssn="123456789", full_name="x")) == pytest.approx(0.4)


def test_normalization_idempotent():
    r = norm(ssn="123-45-6789", phone_number="(555) 123-4567", full_name=" A  B ",
             full_address="12 Main St.", birth_date="1990-01-02", source_timestamp="2020-01-01T00:00:00Z")
    assert normalize_record(r.to_raw()) == r


@pytest.mark.parametrize("suffix", [".jsonl", ".csv"])
def test_round_trip(tmp_path, suffix):
    records = [
        norm(ssn="123456789", full_name="jane doe", full_address="1 main st"),
        CanonicalRecord("y", phone_number="5551234567", extras={"note": "hi"}),
    ]
    path = tmp_path / f"r{suffix}"
    write_records(path, records)
    back = read_records(path)
    assert [r.id for r in back] == ["x", "y"]
    assert back[0] == records[0]
    assert back[1].phone_number == "5551234567"
    assert back[1].extras == {"note": "hi"}


def test_malformed_lines_skipped_or_strict(tmp_path):
    path = tmp_path / "bad.jsonl"
    lines = [json.dumps({"id": "a", "full_name": "x"}), "{not json", json.dumps({"full_name": "no id"}), "[1]",
             json.dumps({"id": "b"})]
    path.write_text("\n".join(lines) + "\n")
    errors = []
    ids = [r.id for r in iter_raw_records(path, errors=errors)]
    assert ids == ["a", "b"]
    assert [e.line for e in errors] == [2, 3, 4]
    with pytest.raises(MalformedInput):
        list(iter_raw_records(path, strict=True))


def test_csv_wrong_column_count(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,full_name\na,x\nb,y,extra\nc,z\n")
    errors = []
    assert [r.id for r in iter_raw_records(path, errors=errors)] == ["a", "c"]
    assert len(errors) == 1
