"""String similarity primitives and the deterministic / fuzzy match stages.

Everything here is scalar pure Python and operates on single record pairs.
The batch kernels in :mod:`mdmerge.kernels` reproduce these decisions over
arrays of candidate pairs and are tested against this module.
"""

from __future__ import annotations

from dataclasses import dataclass

from .records import CanonicalRecord, address_tokens


@dataclass(frozen=True)
class FuzzyThresholds:
    """Name-similarity (``theta1``) and address-Jaccard (``theta2``) cut-offs."""

    theta1: float = 0.8
    theta2: float = 0.7

    def __post_init__(self) -> None:
        for name in ("theta1", "theta2"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class StageVerdict:
    matched: bool
    score: float | None = None


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance (insert, delete, substitute; no transpositions)."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def levenshtein_similarity(a: str, b: str) -> float:
    """``1 - distance / max(len)``; two empty strings are identical (1.0)."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def tokenize_address(s: str) -> set[str]:
    return address_tokens(s)


def jaccard(a: set | frozenset, b: set | frozenset) -> float:
    """``|a & b| / |a | b|`` with the empty-vs-empty case defined as 1.0."""
    if not a and not b:
        return 1.0
    inter = len(a & b)
    return inter / (len(a) + len(b) - inter)


def match_deterministic(ri: CanonicalRecord, rj: CanonicalRecord) -> StageVerdict:
    """Exact SSN or phone equality. A missing key never equals a missing key."""
    if ri.ssn is not None and ri.ssn == rj.ssn:
        return StageVerdict(True, 1.0)
    if ri.phone_number is not None and ri.phone_number == rj.phone_number:
        return StageVerdict(True, 1.0)
    return StageVerdict(False)


def match_fuzzy(ri: CanonicalRecord, rj: CanonicalRecord, t: FuzzyThresholds) -> StageVerdict:
    """Name similarity >= theta1 and address Jaccard >= theta2.

    Pairs missing a name or address on either side do not match here; the
    score is the smaller of the two similarities when both were computed.
    """
    if ri.full_name is None or rj.full_name is None:
        return StageVerdict(False)
    if ri.full_address is None or rj.full_address is None:
        return StageVerdict(False)
    name_sim = levenshtein_similarity(ri.full_name, rj.full_name)
    addr_sim = jaccard(tokenize_address(ri.full_address), tokenize_address(rj.full_address))
    matched = name_sim >= t.theta1 and addr_sim >= t.theta2
    return StageVerdict(matched, min(name_sim, addr_sim))
