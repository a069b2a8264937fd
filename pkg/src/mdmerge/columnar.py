"""Column-oriented encoding of canonical records for the batch kernels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .records import CanonicalRecord, address_tokens

MISSING = -1


@dataclass(frozen=True)
class RecordTable:
    """Records as fixed-width numeric arrays, row ``i`` = ``ids[i]``.

    * ``ssn`` / ``phone``: integer keys, ``-1`` when missing.  Phones are
      stored with a leading ``1`` digit so leading zeros stay significant.
    * ``name``: code points, zero padded; ``name_len`` is ``-1`` when missing.
    * ``tokens``: sorted unique address token ids, ``-1`` padded;
      ``n_tokens`` is ``-1`` when the address is missing.
    * ``dob``: proleptic Gregorian ordinal, ``-1`` when missing.
    """

    ids: tuple[str, ...]
    ssn: np.ndarray
    phone: np.ndarray
    name: np.ndarray
    name_len: np.ndarray
    tokens: np.ndarray
    n_tokens: np.ndarray
    dob: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.ssn, self.phone, self.name, self.name_len, self.tokens, self.n_tokens, self.dob)


def encode_records(records: Sequence[CanonicalRecord]) -> RecordTable:
    n = len(records)
    ssn = np.array([int(r.ssn) if r.ssn is not None else MISSING for r in records], dtype=np.int64)
    phone = np.array(
        [int("1" + r.phone_number) if r.phone_number is not None else MISSING for r in records],
        dtype=np.int64,
    )
    dob = np.array(
        [r.birth_date.toordinal() if r.birth_date is not None else MISSING for r in records],
        dtype=np.int64,
    )

    names = [r.full_name or "" for r in records]
    width = max((len(s) for s in names), default=0) or 1
    name = np.array(names, dtype=f"<U{width}").view(np.uint32).reshape(n, width).astype(np.int32)
    name_len = np.array(
        [len(r.full_name) if r.full_name is not None else MISSING for r in records], dtype=np.int32
    )

    vocab: dict[str, int] = {}
    token_rows: list[list[int]] = []
    for r in records:
        if r.full_address is None:
            token_rows.append([])
            continue
        token_rows.append(sorted(vocab.setdefault(t, len(vocab)) for t in address_tokens(r.full_address)))
    tw = max((len(t) for t in token_rows), default=0) or 1
    tokens = np.full((n, tw), MISSING, dtype=np.int32)
    n_tokens = np.full(n, MISSING, dtype=np.int32)
    for i, (r, row) in enumerate(zip(records, token_rows)):
        if r.full_address is not None:
            tokens[i, : len(row)] = row
            n_tokens[i] = len(row)

    return RecordTable(tuple(r.id for r in records), ssn, phone, name, name_len, tokens, n_tokens, dob)
