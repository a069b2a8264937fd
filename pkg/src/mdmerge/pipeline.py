"""Blocking, hierarchical pair matching, clustering and golden-record merge.

A pair is tested deterministically first (shared SSN or phone); failing that,
by fuzzy name/address similarity; failing that (if enabled) by the logistic
model.  Matched pairs are closed transitively with union-find and each
resulting cluster is merged field-by-field into a golden record.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from . import kernels
from .columnar import RecordTable, encode_records
from .matchers import FuzzyThresholds, match_deterministic, match_fuzzy
from .records import MATCH_FIELDS, CanonicalRecord, completeness_score
from .resolver import LogisticModel, match_ml

logger = logging.getLogger(__name__)

NAME_PREFIX_LEN = 4
PHONE_PREFIX_LEN = 6


class Stage(str, enum.Enum):
    NONE = "none"
    DETERMINISTIC = "deterministic"
    FUZZY = "fuzzy"
    ML = "ml"


STAGE_BY_CODE = {
    kernels.STAGE_NONE: Stage.NONE,
    kernels.STAGE_DET: Stage.DETERMINISTIC,
    kernels.STAGE_FUZZY: Stage.FUZZY,
    kernels.STAGE_ML: Stage.ML,
}
CODE_BY_STAGE = {v: k for k, v in STAGE_BY_CODE.items()}


class Blocking(str, enum.Enum):
    NAME_PREFIX = "name_prefix"
    PHONE_PREFIX = "phone_prefix"
    SSN_EXACT = "ssn_exact"
    COMPOSITE = "composite"


BlockKey = str


@dataclass(frozen=True)
class MatchDecision:
    left: str
    right: str
    matched: bool
    stage: Stage
    score: float | None = None

    def __post_init__(self) -> None:
        if self.left == self.right:
            raise ValueError("a decision needs two distinct records")
        if self.left > self.right:
            raise ValueError("decision ids must be in canonical (sorted) order")
        if self.matched and self.stage is Stage.NONE:
            raise ValueError("a matched decision must name its stage")

    def to_dict(self) -> dict:
        return {
            "left": self.left,
            "right": self.right,
            "matched": self.matched,
            "stage": self.stage.value,
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> MatchDecision:
        return cls(doc["left"], doc["right"], bool(doc["matched"]), Stage(doc["stage"]), doc.get("score"))


@dataclass(frozen=True)
class DuplicateCluster:
    member_ids: tuple[str, ...]
    evidence: tuple[MatchDecision, ...] = ()


@dataclass(frozen=True)
class GoldenRecord:
    survivor: CanonicalRecord
    field_sources: Mapping[str, str]
    cluster: DuplicateCluster


@dataclass(frozen=True)
class PipelineConfig:
    thresholds: FuzzyThresholds = field(default_factory=FuzzyThresholds)
    tau: float = 0.5
    blocking: Blocking = Blocking.COMPOSITE
    ml_enabled: bool = True
    workers: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau!r}")
        object.__setattr__(self, "blocking", Blocking(self.blocking))


# ---------------------------------------------------------------------------
# blocking
# ---------------------------------------------------------------------------


def _name_key(r: CanonicalRecord) -> str | None:
    if r.full_name is None:
        return None
    return "name:" + r.full_name.replace(" ", "")[:NAME_PREFIX_LEN]


def _phone_key(r: CanonicalRecord) -> str | None:
    return None if r.phone_number is None else "phone:" + r.phone_number[:PHONE_PREFIX_LEN]


def _ssn_key(r: CanonicalRecord) -> str | None:
    return None if r.ssn is None else "ssn:" + r.ssn


_KEYERS = {
    Blocking.NAME_PREFIX: (_name_key,),
    Blocking.PHONE_PREFIX: (_phone_key,),
    Blocking.SSN_EXACT: (_ssn_key,),
    Blocking.COMPOSITE: (_name_key, _phone_key, _ssn_key),
}


def _block_index(records: Sequence[CanonicalRecord], strategy: Blocking) -> dict[str, list[int]]:
    strategy = Blocking(strategy)
    keyers = _KEYERS[strategy]
    residual = f"residual:{strategy.value}"
    blocks: dict[str, list[int]] = defaultdict(list)
    for i, r in enumerate(records):
        placed = False
        for keyer in keyers:
            key = keyer(r)
            if key is not None:
                blocks[key].append(i)
                placed = True
        if not placed:
            blocks[residual].append(i)
    return dict(blocks)


def block_records(records: Sequence[CanonicalRecord], strategy: Blocking) -> dict[BlockKey, list[str]]:
    """Map block keys to the ids of the records that fall in each block.

    Composite blocking unions the name-prefix, phone-prefix and exact-SSN
    blocks; a record that yields no key for the strategy lands in that
    strategy's residual block.
    """
    return {k: [records[i].id for i in v] for k, v in _block_index(records, strategy).items()}


def candidate_pairs(records: Sequence[CanonicalRecord], strategy: Blocking) -> tuple[np.ndarray, np.ndarray]:
    """Distinct ``(i, j)`` index pairs with ``i < j`` that share a block."""
    n = len(records)
    blocks = [v for v in _block_index(records, strategy).values() if len(v) > 1]
    if not blocks:
        return np.empty(0, dtype=np.int32), np.empty(0, dtype=np.int32)
    sizes = np.fromiter((len(b) for b in blocks), dtype=np.int64, count=len(blocks))
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    members = np.fromiter((i for b in blocks for i in b), dtype=np.int64, count=int(offsets[-1]))
    left, right = kernels.expand_block_pairs(members, offsets)
    keys = left * n
    keys += right
    del left, right
    keys.sort()
    keys = keys[np.concatenate(([True], keys[1:] != keys[:-1]))]
    index = np.int32 if n < 2**31 else np.int64
    return (keys // n).astype(index), (keys % n).astype(index)


# ---------------------------------------------------------------------------
# pairwise match
# ---------------------------------------------------------------------------


def match_pair(
    ri: CanonicalRecord, rj: CanonicalRecord, cfg: PipelineConfig, model: LogisticModel | None = None
) -> MatchDecision:
    """Staged match of one pair: deterministic, then fuzzy, then ML."""
    if ri.id == rj.id:
        raise ValueError(f"cannot match record {ri.id!r} against itself")
    if ri.id > rj.id:
        ri, rj = rj, ri
    det = match_deterministic(ri, rj)
    if det.matched:
        return MatchDecision(ri.id, rj.id, True, Stage.DETERMINISTIC, det.score)
    fz = match_fuzzy(ri, rj, cfg.thresholds)
    if fz.matched:
        return MatchDecision(ri.id, rj.id, True, Stage.FUZZY, fz.score)
    score = fz.score
    if cfg.ml_enabled:
        if model is None:
            raise ValueError("ml_enabled requires a trained model")
        ml = match_ml(model.with_tau(cfg.tau), ri, rj)
        if ml.matched:
            return MatchDecision(ri.id, rj.id, True, Stage.ML, ml.score)
        score = ml.score
    return MatchDecision(ri.id, rj.id, False, Stage.NONE, score)


class DecisionTable(Sequence[MatchDecision]):
    """Array-backed list of decisions; ``left[k] < right[k]`` index into ``ids``.

    Record ids are sorted, so index order is canonical id order.
    """

    def __init__(self, ids: Sequence[str], left, right, stage, score) -> None:
        self.ids = tuple(ids)
        self.left = np.asarray(left)
        self.right = np.asarray(right)
        self.stage = np.asarray(stage, dtype=np.uint8)
        self.score = np.asarray(score, dtype=np.float64)

    @property
    def matched(self) -> np.ndarray:
        return self.stage != kernels.STAGE_NONE

    def __len__(self) -> int:
        return len(self.left)

    def _make(self, k: int) -> MatchDecision:
        s = float(self.score[k])
        stage = STAGE_BY_CODE[int(self.stage[k])]
        return MatchDecision(
            self.ids[self.left[k]], self.ids[self.right[k]], stage is not Stage.NONE, stage,
            None if math.isnan(s) else s,
        )

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [self._make(i) for i in range(*k.indices(len(self)))]
        if k < 0:
            k += len(self)
        if not 0 <= k < len(self):
            raise IndexError(k)
        return self._make(k)

    def __iter__(self) -> Iterator[MatchDecision]:
        for k in range(len(self)):
            yield self._make(k)

    def matched_decisions(self) -> list[MatchDecision]:
        return [self._make(k) for k in np.flatnonzero(self.matched)]

    def stage_counts(self) -> dict[str, int]:
        counts = np.bincount(self.stage, minlength=4)
        return {STAGE_BY_CODE[c].value: int(counts[c]) for c in STAGE_BY_CODE}


def write_decision_log(path: str | Path, decisions: Iterable[MatchDecision]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for d in decisions:
            fh.write(json.dumps(d.to_dict()) + "\n")


def read_decision_log(path: str | Path) -> list[MatchDecision]:
    with Path(path).open(encoding="utf-8") as fh:
        return [MatchDecision.from_dict(json.loads(line)) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# clustering and merge
# ---------------------------------------------------------------------------


class UnionFind:
    """Disjoint sets over hashable items, path halving + union by size."""

    def __init__(self, items: Iterable = ()) -> None:
        self.parent: dict = {}
        self.size: dict = {}
        for x in items:
            self.add(x)

    def add(self, x) -> None:
        if x not in self.parent:
            self.parent[x] = x
            self.size[x] = 1

    def find(self, x):
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, x, y) -> None:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return
        if self.size[rx] < self.size[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        self.size[rx] += self.size[ry]

    def groups(self) -> dict:
        out: dict = defaultdict(list)
        for x in self.parent:
            out[self.find(x)].append(x)
        return out


def cluster_matches(
    decisions: Iterable[MatchDecision], record_ids: Iterable[str] = ()
) -> list[DuplicateCluster]:
    """Connected components of the matched-pair graph.

    Every id mentioned by a decision (or listed in ``record_ids``) ends up in
    exactly one cluster; unmatched ids become singletons.  Clusters come back
    sorted by their smallest member id.
    """
    uf = UnionFind(record_ids)
    matched: list[MatchDecision] = []
    for d in decisions:
        uf.add(d.left)
        uf.add(d.right)
        if d.matched:
            uf.union(d.left, d.right)
            matched.append(d)
    evidence: dict = defaultdict(list)
    for d in matched:
        evidence[uf.find(d.left)].append(d)
    clusters = [
        DuplicateCluster(tuple(sorted(members)), tuple(evidence.get(root, ())))
        for root, members in uf.groups().items()
    ]
    clusters.sort(key=lambda c: c.member_ids[0])
    return clusters


def golden_id(member_ids: Iterable[str]) -> str:
    digest = hashlib.blake2b("\x1f".join(sorted(member_ids)).encode(), digest_size=8)
    return "g" + digest.hexdigest()


def _survivorship_order(records: list[CanonicalRecord]) -> list[CanonicalRecord]:
    # stable sorts applied from the weakest rule to the strongest
    ranked = sorted(records, key=lambda r: r.id)
    ranked.sort(key=completeness_score, reverse=True)
    dated = [r for r in ranked if r.source_timestamp is not None]
    undated = [r for r in ranked if r.source_timestamp is None]
    dated.sort(key=lambda r: r.source_timestamp, reverse=True)
    return dated + undated


def merge_cluster(cluster: DuplicateCluster, records: Mapping[str, CanonicalRecord]) -> GoldenRecord:
    """Survivorship merge: per field, the present value from the best-ranked record.

    Ranking: most recent ``source_timestamp`` first (undated last), then higher
    completeness, then smallest id.
    """
    try:
        members = [records[i] for i in cluster.member_ids]
    except KeyError as exc:
        raise KeyError(f"cluster member {exc.args[0]!r} not found in record lookup") from None
    if not members:
        raise ValueError("cannot merge an empty cluster")
    ranked = _survivorship_order(members)

    values: dict = {}
    sources: dict[str, str] = {}
    for name in MATCH_FIELDS + ("source_timestamp",):
        for r in ranked:
            v = getattr(r, name)
            if v is not None:
                values[name] = v
                sources[name] = r.id
                break
    extras: dict[str, str] = {}
    for key in sorted({k for r in members for k in r.extras}):
        for r in ranked:
            if key in r.extras:
                extras[key] = r.extras[key]
                sources[key] = r.id
                break

    survivor = CanonicalRecord(id=golden_id(cluster.member_ids), source_id="golden", extras=extras, **values)
    return GoldenRecord(survivor, sources, cluster)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


@dataclass
class PipelineResult:
    golden: list[GoldenRecord]
    decisions: DecisionTable
    clusters: list[DuplicateCluster]

    def __iter__(self):
        return iter((self.golden, self.decisions))


def score_candidates(
    records: Sequence[CanonicalRecord],
    cfg: PipelineConfig,
    model: LogisticModel | None = None,
    table: RecordTable | None = None,
) -> DecisionTable:
    """Decisions for every blocked candidate pair; ``records`` must be id-sorted."""
    if cfg.ml_enabled and model is None:
        raise ValueError("ml_enabled requires a trained model")
    table = table if table is not None else encode_records(records)
    left, right = candidate_pairs(records, cfg.blocking)
    kernels.set_workers(cfg.workers)
    stage, score = kernels.score_pairs(
        table, left, right, cfg.thresholds.theta1, cfg.thresholds.theta2,
        model if cfg.ml_enabled else None, cfg.tau,
    )
    return DecisionTable(table.ids, left, right, stage, score)


def _clusters_from_table(decisions: DecisionTable) -> list[DuplicateCluster]:
    hit = np.flatnonzero(decisions.matched)
    uf = UnionFind(range(len(decisions.ids)))
    for a, b in zip(decisions.left[hit].tolist(), decisions.right[hit].tolist()):
        uf.union(a, b)
    evidence: dict = defaultdict(list)
    for k in hit.tolist():
        evidence[uf.find(int(decisions.left[k]))].append(decisions[k])
    ids = decisions.ids
    clusters = [
        DuplicateCluster(tuple(ids[i] for i in sorted(members)), tuple(evidence.get(root, ())))
        for root, members in uf.groups().items()
    ]
    clusters.sort(key=lambda c: c.member_ids[0])
    return clusters


def _check_unique(records: Sequence[CanonicalRecord]) -> None:
    seen: set[str] = set()
    for r in records:
        if r.id in seen:
            raise ValueError(f"duplicate record id {r.id!r}")
        seen.add(r.id)


def run_pipeline(
    records: Sequence[CanonicalRecord], cfg: PipelineConfig, model: LogisticModel | None = None
) -> PipelineResult:
    """Block, match, cluster and merge.  Unpacks as ``(golden, decisions)``."""
    _check_unique(records)
    ordered = sorted(records, key=lambda r: r.id)
    decisions = score_candidates(ordered, cfg, model)
    clusters = _clusters_from_table(decisions)
    lookup = {r.id: r for r in ordered}
    golden = [merge_cluster(c, lookup) for c in clusters]
    logger.info(
        "pipeline: %d records, %d candidate pairs, %d clusters", len(ordered), len(decisions), len(clusters)
    )
    return PipelineResult(golden, decisions, clusters)
