"""Pure-numpy backend, vectorized across pairs in fixed-size chunks."""

import numpy as np

STAGE_NONE = 0
STAGE_DET = 1
STAGE_FUZZY = 2
STAGE_ML = 3

CHUNK = 65536


BITS = 63  # pattern lengths the bit-parallel path handles in one uint64 word


def _levenshtein_dp(a, la, b, lb):
    """Row-by-row dynamic program, vectorized over pairs."""
    p = a.shape[0]
    wa = int(la.max(initial=0))
    wb = int(lb.max(initial=0))
    rows = np.arange(p)
    prev = np.broadcast_to(np.arange(wb + 1, dtype=np.int32), (p, wb + 1)).copy()
    out = prev[rows, lb].copy()  # distance when la == 0
    cur = np.empty_like(prev)
    for i in range(1, wa + 1):
        cur[:, 0] = i
        ai = a[:, i - 1]
        for j in range(1, wb + 1):
            v = prev[:, j - 1] + (ai != b[:, j - 1])
            np.minimum(v, prev[:, j] + 1, out=v)
            np.minimum(v, cur[:, j - 1] + 1, out=v)
            cur[:, j] = v
        done = la == i
        out[done] = cur[rows[done], lb[done]]
        prev, cur = cur, prev
    return out


def _levenshtein_bits(a, la, b, lb):
    """Hyyro's bit-vector edit distance, one text column per step.

    Requires ``1 <= la <= 63``.  Bit ``k`` of the vertical delta vectors
    describes row ``k + 1`` of the DP matrix; only the top row of each
    pattern (bit ``la - 1``) feeds the score.
    """
    one = np.uint64(1)
    wa = int(la.max())
    a = a[:, :wa]
    valid = np.arange(wa) < la[:, None]
    packed = np.zeros((len(la), 8), dtype=np.uint8)
    nbytes = (wa + 7) // 8
    top = one << (la.astype(np.uint64) - one)
    pv = np.full(len(la), ~np.uint64(0))
    mv = np.zeros(len(la), dtype=np.uint64)
    score = la.astype(np.int32)
    for j in range(int(lb.max(initial=0))):
        live = j < lb
        hit = (a == b[:, j, None]) & valid
        packed[:, :nbytes] = np.packbits(hit, axis=1, bitorder="little")
        eq = packed.view("<u8")[:, 0].astype(np.uint64)
        xv = eq | mv
        xh = (((eq & pv) + pv) ^ pv) | eq
        ph = mv | ~(xh | pv)
        mh = pv & xh
        score += live & ((ph & top) != 0)
        score -= live & ((mh & top) != 0)
        ph = (ph << one) | one
        mh = mh << one
        npv = mh | ~(xv | ph)
        nmv = ph & xv
        pv = np.where(live, npv, pv)
        mv = np.where(live, nmv, mv)
    return score


def _levenshtein(a, la, b, lb):
    """Edit distance for each row pair of padded code-point matrices."""
    out = np.empty(len(la), dtype=np.int32)
    empty = la == 0
    out[empty] = lb[empty]
    short = (la > 0) & (la <= BITS)
    long_ = la > BITS
    if short.any():
        out[short] = _levenshtein_bits(a[short], la[short], b[short], lb[short])
    if long_.any():
        out[long_] = _levenshtein_dp(a[long_], la[long_], b[long_], lb[long_])
    return out


def _intersection(ta, tb):
    eq = (ta[:, :, None] == tb[:, None, :]) & (ta[:, :, None] >= 0)
    return eq.sum(axis=(1, 2))


def _features_chunk(i, j, ssn, phone, name, name_len, tokens, n_tokens, dob, known=None):
    """Feature rows; ``known`` optionally carries name distances already computed (-1 = not yet)."""
    out = np.zeros((len(i), 5))
    li, lj = name_len[i], name_len[j]
    both = (li >= 0) & (lj >= 0)
    one = (li >= 0) != (lj >= 0)
    pending = both if known is None else both & (known < 0)
    if known is not None:
        out[both & ~pending, 0] = known[both & ~pending]
    if pending.any():
        out[pending, 0] = _levenshtein(name[i[pending]], li[pending], name[j[pending]], lj[pending])
    out[one, 0] = np.maximum(li[one], lj[one])
    ni, nj = n_tokens[i], n_tokens[j]
    both = (ni >= 0) & (nj >= 0)
    if both.any():
        inter = _intersection(tokens[i[both]], tokens[j[both]])
        union = ni[both] + nj[both] - inter
        out[both, 1] = np.where(union == 0, 1.0, inter / np.maximum(union, 1))
    di, dj = dob[i], dob[j]
    both = (di >= 0) & (dj >= 0)
    out[both, 2] = np.abs(di[both] - dj[both])
    out[:, 3] = (ssn[i] >= 0) & (ssn[i] == ssn[j])
    out[:, 4] = (phone[i] >= 0) & (phone[i] == phone[j])
    return out


def _probability(f, beta, means, scales):
    z = np.full(len(f), beta[0])
    for k in range(5):
        z = z + beta[k + 1] * ((f[:, k] - means[k]) / scales[k])
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _score_chunk(i, j, ssn, phone, name, name_len, tokens, n_tokens, dob,
                 theta1, theta2, use_ml, tau, beta, means, scales):
    p = len(i)
    stage = np.zeros(p, dtype=np.uint8)
    score = np.full(p, np.nan)
    det = ((ssn[i] >= 0) & (ssn[i] == ssn[j])) | ((phone[i] >= 0) & (phone[i] == phone[j]))
    stage[det] = STAGE_DET
    score[det] = 1.0

    rest = ~det
    dist_known = np.full(p, -1, dtype=np.int32)
    fz = rest & (name_len[i] >= 0) & (name_len[j] >= 0) & (n_tokens[i] >= 0) & (n_tokens[j] >= 0)
    if fz.any():
        fi, fj = i[fz], j[fz]
        li, lj = name_len[fi], name_len[fj]
        dist = _levenshtein(name[fi], li, name[fj], lj)
        dist_known[fz] = dist
        m = np.maximum(li, lj)
        name_sim = np.where(m == 0, 1.0, 1.0 - dist / np.maximum(m, 1))
        inter = _intersection(tokens[fi], tokens[fj])
        union = n_tokens[fi] + n_tokens[fj] - inter
        addr_sim = np.where(union == 0, 1.0, inter / np.maximum(union, 1))
        score[fz] = np.minimum(name_sim, addr_sim)
        hit = np.flatnonzero(fz)[(name_sim >= theta1) & (addr_sim >= theta2)]
        stage[hit] = STAGE_FUZZY
        rest[hit] = False

    if use_ml and rest.any():
        idx = np.flatnonzero(rest)
        f = _features_chunk(i[idx], j[idx], ssn, phone, name, name_len, tokens, n_tokens, dob, dist_known[idx])
        prob = _probability(f, beta, means, scales)
        score[idx] = prob
        stage[idx[prob >= tau]] = STAGE_ML
    return stage, score


def score_pairs(left, right, ssn, phone, name, name_len, tokens, n_tokens, dob,
                theta1, theta2, use_ml, tau, beta, means, scales):
    p = len(left)
    stage = np.zeros(p, dtype=np.uint8)
    score = np.full(p, np.nan)
    for lo in range(0, p, CHUNK):
        hi = min(lo + CHUNK, p)
        stage[lo:hi], score[lo:hi] = _score_chunk(
            left[lo:hi], right[lo:hi], ssn, phone, name, name_len, tokens, n_tokens, dob,
            theta1, theta2, use_ml, tau, beta, means, scales,
        )
    return stage, score


def pair_features(left, right, ssn, phone, name, name_len, tokens, n_tokens, dob):
    out = np.empty((len(left), 5))
    for lo in range(0, len(left), CHUNK):
        hi = min(lo + CHUNK, len(left))
        out[lo:hi] = _features_chunk(left[lo:hi], right[lo:hi], ssn, phone, name, name_len, tokens, n_tokens, dob)
    return out


def expand_block_pairs(members, offsets):
    sizes = np.diff(offsets)
    lefts, rights = [], []
    for s in np.unique(sizes[sizes >= 2]):
        starts = offsets[:-1][sizes == s]
        a, b = np.triu_indices(int(s), k=1)
        lefts.append(members[(starts[:, None] + a[None, :]).ravel()])
        rights.append(members[(starts[:, None] + b[None, :]).ravel()])
    if not lefts:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(lefts).astype(np.int64), np.concatenate(rights).astype(np.int64)
