"""Seeded synthetic corpora with known duplicate clusters.

Each entity yields one clean record plus a geometric number of corrupted
copies (typos, dropped fields, re-punctuated identifiers, jittered birth
dates).  All randomness flows from a single ``numpy`` Philox generator, a
counter-based bit generator whose output stream is fixed by the seed across
platforms and numpy versions.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .columnar import encode_records
from .records import CanonicalRecord, RawRecord, collapse_ws, normalize_record
from .resolver import FeatureVector, LabeledPair

# lexicons -------------------------------------------------------------------

CONSONANTS = "bcdfghjklmnprstvwz"
VOWELS = "aeiouy"
CODAS = ("", "", "n", "r", "l", "s")
STREETS = (
    "oak", "maple", "cedar", "pine", "elm", "birch", "willow", "walnut", "chestnut", "spruce",
    "hickory", "laurel", "magnolia", "poplar", "sycamore", "aspen", "juniper", "alder", "cypress",
    "hawthorn", "main", "church", "mill", "park", "lake", "river", "hill", "ridge", "valley",
    "meadow", "forest", "spring", "sunset", "highland", "garden", "prospect", "union", "liberty",
    "franklin", "madison", "jefferson", "lincoln", "washington", "jackson", "harbor", "bay",
)
STREET_TYPES = ("st", "ave", "rd", "blvd", "ln", "dr", "ct", "way", "pl", "ter")
CITIES = (
    "springfield", "riverton", "fairview", "greenville", "kingston", "oakdale", "milford",
    "ashland", "clayton", "dover", "easton", "franklin", "georgetown", "hudson", "jackson",
    "lebanon", "marion", "newport", "oxford", "salem", "winchester", "arlington", "bristol",
    "burlington", "camden", "chester", "clinton", "dayton", "florence", "hamilton", "lexington",
    "madison", "manchester", "monroe", "plymouth", "princeton", "richmond", "shelby", "troy",
    "vernon",
)
STATES = ("al", "az", "ca", "co", "fl", "ga", "il", "in", "ky", "ma", "md", "mi", "mn", "mo",
          "nc", "nj", "ny", "oh", "or", "pa", "tn", "tx", "va", "wa", "wi")
SOURCES = ("crm", "billing", "ehr", "web", "support")

LETTERS = "abcdefghijklmnopqrstuvwxyz"
DIGITS = "0123456789"
TYPO_OPS = ("substitute", "insert", "delete")

DOB_MIN = dt.date(1940, 1, 1).toordinal()
DOB_MAX = dt.date(2005, 12, 31).toordinal()
TS_MIN = int(dt.datetime(2015, 1, 1, tzinfo=dt.timezone.utc).timestamp())
TS_MAX = int(dt.datetime(2025, 1, 1, tzinfo=dt.timezone.utc).timestamp())


@dataclass(frozen=True)
class NoiseSpec:
    """Per-field corruption probabilities for duplicate records."""

    typo_rate: float = 0.3
    missing_rate: float = 0.1
    format_variant_rate: float = 0.3
    date_jitter_days: int = 3
    max_typos: int = 2
    typo_ops: tuple[str, ...] = TYPO_OPS

    def __post_init__(self) -> None:
        for name in ("typo_rate", "missing_rate", "format_variant_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        if self.date_jitter_days < 0:
            raise ValueError("date_jitter_days must be non-negative")
        if self.max_typos < 1:
            raise ValueError("max_typos must be >= 1")
        object.__setattr__(self, "typo_ops", tuple(self.typo_ops))
        if not self.typo_ops or set(self.typo_ops) - set(TYPO_OPS):
            raise ValueError(f"typo_ops must be a non-empty subset of {TYPO_OPS}")

    @classmethod
    def zero(cls) -> NoiseSpec:
        return cls(typo_rate=0.0, missing_rate=0.0, format_variant_rate=0.0, date_jitter_days=0)


@dataclass(frozen=True)
class CorpusSpec:
    """Corpus shape.  ``n_records``, when set, fixes the exact record count
    (entities are generated until it is reached) and overrides ``n_entities``.
    """

    n_entities: int = 1000
    duplicates_mean: float = 0.5
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    n_records: int | None = None
    household_rate: float = 0.03

    def __post_init__(self) -> None:
        if not 0.0 <= self.household_rate <= 1.0:
            raise ValueError("household_rate must lie in [0, 1]")
        if self.n_entities < 1:
            raise ValueError("n_entities must be >= 1")
        if self.duplicates_mean < 0:
            raise ValueError("duplicates_mean must be non-negative")
        if self.n_records is not None and self.n_records < 1:
            raise ValueError("n_records must be >= 1")


@dataclass(frozen=True)
class GroundTruth:
    record_to_entity: dict[str, str]

    def __len__(self) -> int:
        return len(self.record_to_entity)

    def same_entity(self, a: str, b: str) -> bool:
        return self.record_to_entity[a] == self.record_to_entity[b]

    def n_true_pairs(self) -> int:
        """Number of same-entity record pairs in the whole corpus."""
        sizes: dict[str, int] = {}
        for e in self.record_to_entity.values():
            sizes[e] = sizes.get(e, 0) + 1
        return sum(s * (s - 1) // 2 for s in sizes.values())

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for rid in sorted(self.record_to_entity):
                fh.write(json.dumps({"record_id": rid, "entity_id": self.record_to_entity[rid]}) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> GroundTruth:
        mapping = {}
        with Path(path).open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    doc = json.loads(line)
                    mapping[doc["record_id"]] = doc["entity_id"]
        return cls(mapping)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


# corruption -----------------------------------------------------------------


def _pick(rng: np.random.Generator, seq):
    return seq[int(rng.integers(len(seq)))]


def typo(s: str, rng: np.random.Generator, n_edits: int = 1, ops: Sequence[str] = TYPO_OPS) -> str:
    """Apply ``n_edits`` random character edits, never touching whitespace."""
    chars = list(s)
    for _ in range(n_edits):
        op = _pick(rng, ops)
        spots = [i for i, c in enumerate(chars) if not c.isspace()]
        if op == "insert" or not spots:
            pos = int(rng.integers(len(chars) + 1))
            chars.insert(pos, _pick(rng, LETTERS))
            continue
        pos = spots[int(rng.integers(len(spots)))]
        if op == "delete":
            del chars[pos]
        else:
            pool = DIGITS if chars[pos].isdigit() else LETTERS
            offset = int(rng.integers(1, len(pool)))
            chars[pos] = pool[(pool.index(chars[pos]) + offset) % len(pool)] if chars[pos] in pool else _pick(rng, pool)
    return collapse_ws("".join(chars))


def corrupt_record(
    r: CanonicalRecord, noise: NoiseSpec, rng: np.random.Generator, new_id: str | None = None
) -> CanonicalRecord:
    """Corrupted copy of ``r``: each field independently dropped or perturbed."""
    values: dict = {}
    for name in ("ssn", "phone_number", "full_name", "full_address", "birth_date"):
        v = getattr(r, name)
        if v is None:
            values[name] = None
            continue
        if rng.random() < noise.missing_rate:
            values[name] = None
            continue
        if name in ("full_name", "full_address") and rng.random() < noise.typo_rate:
            v = typo(v, rng, int(rng.integers(1, noise.max_typos + 1)), noise.typo_ops) or None
        elif name == "birth_date" and noise.date_jitter_days > 0 and rng.random() < noise.typo_rate:
            shift = int(rng.integers(1, noise.date_jitter_days + 1))
            if rng.random() < 0.5:
                shift = -shift
            moved = v + dt.timedelta(days=shift)
            v = moved if moved <= dt.date.today() else v - dt.timedelta(days=shift)
        values[name] = v
    return replace(r, id=new_id if new_id is not None else r.id + "~", **values)


def _format_variant(r: CanonicalRecord, noise: NoiseSpec, rng: np.random.Generator) -> RawRecord:
    """Serialize with formatting noise that normalization undoes."""
    raw = dict(r.to_raw().fields)
    rate = noise.format_variant_rate
    if r.ssn is not None and rng.random() < rate:
        s = r.ssn
        raw["ssn"] = _pick(rng, (f"{s[:3]}-{s[3:5]}-{s[5:]}", f"{s[:3]} {s[3:5]} {s[5:]}"))
    if r.phone_number is not None and len(r.phone_number) == 10 and rng.random() < rate:
        p = r.phone_number
        raw["phone_number"] = _pick(rng, (f"({p[:3]}) {p[3:6]}-{p[6:]}", f"{p[:3]}-{p[3:6]}-{p[6:]}", f"{p[:3]}.{p[3:6]}.{p[6:]}"))
    for name in ("full_name", "full_address"):
        v = getattr(r, name)
        if v is not None and rng.random() < rate:
            raw[name] = _pick(rng, (v.upper(), v.title(), "  " + v.replace(" ", "  ") + " "))
    return RawRecord(r.id, raw)


# corpus ---------------------------------------------------------------------


def _words(cons: np.ndarray, vow: np.ndarray, coda: np.ndarray, nsyl: np.ndarray) -> list[str]:
    out = []
    for c, v, k, n in zip(cons.tolist(), vow.tolist(), coda.tolist(), nsyl.tolist()):
        out.append("".join(CONSONANTS[c[s]] + VOWELS[v[s]] + CODAS[k[s]] for s in range(n)))
    return out


def _random_words(rng: np.random.Generator, n: int) -> list[str]:
    nsyl = rng.integers(2, 4, n)
    cons = rng.integers(len(CONSONANTS), size=(n, 3))
    vow = rng.integers(len(VOWELS), size=(n, 3))
    coda = rng.integers(len(CODAS), size=(n, 3))
    return _words(cons, vow, coda, nsyl)


def _entity_records(rng: np.random.Generator, n: int, household_rate: float = 0.0) -> list[CanonicalRecord]:
    """Clean per-entity records.

    With probability ``household_rate`` an entity lives with the previous one:
    either a junior (same given and family name plus ``jr``) or a relative
    with a new given name.  Both share the address, and the phone with
    probability 0.3.  These are the natural false positives of key and fuzzy
    matching.
    """
    given = _random_words(rng, n)
    family = _random_words(rng, n)
    house = rng.integers(1, 10000, n).tolist()
    street = rng.integers(len(STREETS), size=n).tolist()
    stype = rng.integers(len(STREET_TYPES), size=n).tolist()
    city = rng.integers(len(CITIES), size=n).tolist()
    state = rng.integers(len(STATES), size=n).tolist()
    zipc = rng.integers(10000, 100000, n).tolist()
    ssn = (rng.choice(900_000_000, size=n, replace=False) + 100_000_000).tolist()
    phone = (rng.choice(8_000_000_000, size=n, replace=False) + 2_000_000_000).tolist()
    dob = rng.integers(DOB_MIN, DOB_MAX + 1, n).tolist()
    related = (rng.random(n) < household_rate).tolist()
    junior = (rng.random(n) < 0.5).tolist()
    share_phone = (rng.random(n) < 0.3).tolist()
    out: list[CanonicalRecord] = []
    for i in range(n):
        rec = CanonicalRecord(
            id="",
            ssn=str(ssn[i]),
            phone_number=str(phone[i]),
            full_name=f"{given[i]} {family[i]}",
            full_address=f"{house[i]} {STREETS[street[i]]} {STREET_TYPES[stype[i]]} "
            f"{CITIES[city[i]]} {STATES[state[i]]} {zipc[i]}",
            birth_date=dt.date.fromordinal(dob[i]),
        )
        if related[i] and i > 0:
            head = out[i - 1]
            surname = head.full_name.split(" ")[1]
            name = head.full_name.removesuffix(" jr") + " jr" if junior[i] else f"{given[i]} {surname}"
            rec = replace(
                rec,
                full_name=name,
                full_address=head.full_address,
                phone_number=head.phone_number if share_phone[i] else rec.phone_number,
            )
        out.append(rec)
    return out


def _duplicate_counts(rng: np.random.Generator, n: int, mean: float) -> np.ndarray:
    if mean == 0:
        return np.zeros(n, dtype=np.int64)
    # geometric on {0, 1, ...} with the requested mean
    return rng.geometric(1.0 / (1.0 + mean), size=n) - 1


def generate_corpus(spec: CorpusSpec) -> tuple[list[RawRecord], GroundTruth]:
    """Raw records (sorted by id) and the record-to-entity ground truth."""
    rng = make_rng(spec.seed)
    cap = spec.n_records if spec.n_records is not None else spec.n_entities
    sizes = 1 + _duplicate_counts(rng, cap, spec.duplicates_mean)
    if spec.n_records is not None:
        total = np.cumsum(sizes)
        n_ent = int(np.searchsorted(total, spec.n_records) + 1)
        sizes = sizes[:n_ent].copy()
        sizes[-1] -= int(total[n_ent - 1]) - spec.n_records
    n_ent = len(sizes)
    n_rec = int(sizes.sum())

    clean = _entity_records(rng, n_ent, spec.household_rate)
    ts = rng.integers(TS_MIN, TS_MAX, n_rec).tolist()
    src = rng.integers(len(SOURCES), size=n_rec).tolist()
    slots = rng.permutation(n_rec).tolist()
    width = len(str(n_rec - 1))
    ewidth = len(str(n_ent - 1))

    raws: list[RawRecord | None] = [None] * n_rec
    truth: dict[str, str] = {}
    k = 0
    for e, (base, size) in enumerate(zip(clean, sizes.tolist())):
        entity = f"e{e:0{ewidth}d}"
        for copy in range(size):
            rid = f"r{slots[k]:0{width}d}"
            stamp = dt.datetime.fromtimestamp(ts[k], tz=dt.timezone.utc)
            rec = replace(base, id=rid, source_timestamp=stamp, source_id=SOURCES[src[k]])
            if copy == 0:
                raw = rec.to_raw()
            else:
                raw = _format_variant(corrupt_record(rec, spec.noise, rng, new_id=rid), spec.noise, rng)
            raws[slots[k]] = raw
            truth[rid] = entity
            k += 1
    return raws, GroundTruth(truth)  # type: ignore[return-value]


def generate_canonical(spec: CorpusSpec) -> tuple[list[CanonicalRecord], GroundTruth]:
    raws, truth = generate_corpus(spec)
    return [normalize_record(r) for r in raws], truth


# training pairs -------------------------------------------------------------


def sample_pair_indices(
    records: Sequence[CanonicalRecord],
    truth: GroundTruth,
    n_pairs: int,
    positive_fraction: float,
    seed: int,
    hard_negative_fraction: float = 0.5,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index pairs and labels for a training sample.

    Positives pair two records of one multi-record entity.  Negatives pair
    records of different entities; ``hard_negative_fraction`` of them are
    drawn from a shared name-prefix block, the rest uniformly.
    """
    if not 0.0 <= positive_fraction <= 1.0:
        raise ValueError("positive_fraction must lie in [0, 1]")
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = make_rng(seed)
    ent = [truth.record_to_entity[r.id] for r in records]
    groups: dict[str, list[int]] = {}
    for i, e in enumerate(ent):
        groups.setdefault(e, []).append(i)
    multi = [g for g in groups.values() if len(g) > 1]

    n_pos = round(n_pairs * positive_fraction)
    n_neg = n_pairs - n_pos
    if n_pos and not multi:
        raise ValueError("corpus has no multi-record entity, cannot sample positive pairs")
    if n_neg and len(groups) < 2:
        raise ValueError("corpus has fewer than two entities, cannot sample negative pairs")

    left, right = [], []
    for _ in range(n_pos):
        g = multi[int(rng.integers(len(multi)))]
        a, b = rng.choice(len(g), size=2, replace=False).tolist()
        left.append(g[a])
        right.append(g[b])

    prefix: dict[str, list[int]] = {}
    for i, r in enumerate(records):
        if r.full_name:
            prefix.setdefault(r.full_name.replace(" ", "")[:4], []).append(i)
    n_hard = round(n_neg * hard_negative_fraction)
    n = len(records)
    for t in range(n_neg):
        pair = None
        if t < n_hard:
            for _ in range(8):
                i = int(rng.integers(n))
                if not records[i].full_name:
                    continue
                block = prefix[records[i].full_name.replace(" ", "")[:4]]
                j = block[int(rng.integers(len(block)))]
                if ent[i] != ent[j]:
                    pair = (i, j)
                    break
        while pair is None:
            i, j = int(rng.integers(n)), int(rng.integers(n))
            if ent[i] != ent[j]:
                pair = (i, j)
        left.append(pair[0])
        right.append(pair[1])
    labels = np.concatenate((np.ones(n_pos, dtype=np.int64), np.zeros(n_neg, dtype=np.int64)))
    return np.array(left, dtype=np.int64), np.array(right, dtype=np.int64), labels


def training_arrays(
    records: Sequence[CanonicalRecord],
    truth: GroundTruth,
    n_pairs: int,
    positive_fraction: float = 0.5,
    seed: int = 0,
    hard_negative_fraction: float = 0.5,
) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix and labels, computed with the batch feature kernel."""
    left, right, y = sample_pair_indices(records, truth, n_pairs, positive_fraction, seed, hard_negative_fraction)
    X = kernels.pair_features(encode_records(records), left, right)
    return X, y


def make_training_pairs(
    records: Sequence[CanonicalRecord],
    truth: GroundTruth,
    n_pairs: int,
    positive_fraction: float = 0.5,
    seed: int = 0,
    hard_negative_fraction: float = 0.5,
) -> list[LabeledPair]:
    X, y = training_arrays(records, truth, n_pairs, positive_fraction, seed, hard_negative_fraction)
    return [
        LabeledPair(FeatureVector(row[0], row[1], row[2], int(row[3]), int(row[4])), int(label))
        for row, label in zip(X.tolist(), y.tolist())
    ]
