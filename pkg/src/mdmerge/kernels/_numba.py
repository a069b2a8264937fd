"""numba backend: one loop iteration per candidate pair."""

import os

import numba as nb
import numpy as np

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the system TBB is often too old for numba; skip straight to OpenMP
    nb.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

STAGE_NONE = 0
STAGE_DET = 1
STAGE_FUZZY = 2
STAGE_ML = 3


@nb.njit(cache=True, nogil=True)
def _levenshtein(a, la, b, lb, prev, cur):
    if la < lb:
        a, b = b, a
        la, lb = lb, la
    if lb == 0:
        return la
    for j in range(lb + 1):
        prev[j] = j
    for i in range(1, la + 1):
        cur[0] = i
        ai = a[i - 1]
        for j in range(1, lb + 1):
            v = prev[j - 1] + (0 if ai == b[j - 1] else 1)
            x = prev[j] + 1
            if x < v:
                v = x
            x = cur[j - 1] + 1
            if x < v:
                v = x
            cur[j] = v
        prev, cur = cur, prev
    return prev[lb]


@nb.njit(cache=True, nogil=True)
def _intersection(ta, na, tb, nb_):
    i = 0
    j = 0
    inter = 0
    while i < na and j < nb_:
        if ta[i] == tb[j]:
            inter += 1
            i += 1
            j += 1
        elif ta[i] < tb[j]:
            i += 1
        else:
            j += 1
    return inter


@nb.njit(cache=True, nogil=True)
def _features(i, j, ssn, phone, name, name_len, tokens, n_tokens, dob, prev, cur, out, dist):
    """Fill ``out`` with the five pair features; ``dist >= 0`` is a known name distance."""
    li = name_len[i]
    lj = name_len[j]
    if li >= 0 and lj >= 0:
        out[0] = dist if dist >= 0 else _levenshtein(name[i], li, name[j], lj, prev, cur)
    elif li < 0 and lj < 0:
        out[0] = 0.0
    else:
        out[0] = max(li, lj)
    ni = n_tokens[i]
    nj = n_tokens[j]
    if ni >= 0 and nj >= 0:
        inter = _intersection(tokens[i], ni, tokens[j], nj)
        union = ni + nj - inter
        out[1] = 1.0 if union == 0 else inter / union
    else:
        out[1] = 0.0
    if dob[i] >= 0 and dob[j] >= 0:
        out[2] = abs(dob[i] - dob[j])
    else:
        out[2] = 0.0
    out[3] = 1.0 if (ssn[i] >= 0 and ssn[i] == ssn[j]) else 0.0
    out[4] = 1.0 if (phone[i] >= 0 and phone[i] == phone[j]) else 0.0


@nb.njit(cache=True, nogil=True)
def _probability(f, beta, means, scales):
    z = beta[0]
    for k in range(5):
        z = z + beta[k + 1] * ((f[k] - means[k]) / scales[k])
    e = np.exp(-abs(z))
    if z >= 0:
        return 1.0 / (1.0 + e)
    return e / (1.0 + e)


CHUNK = 4096  # pairs per parallel work item; scratch buffers are allocated per chunk


@nb.njit(cache=True, nogil=True)
def _score_range(lo, hi, left, right, ssn, phone, name, name_len, tokens, n_tokens, dob,
                 theta1, theta2, use_ml, tau, beta, means, scales, stage, score):
    width = name.shape[1] + 1
    prev = np.empty(width, dtype=np.int32)
    cur = np.empty(width, dtype=np.int32)
    f = np.empty(5)
    for k in range(lo, hi):
        i = left[k]
        j = right[k]
        if (ssn[i] >= 0 and ssn[i] == ssn[j]) or (phone[i] >= 0 and phone[i] == phone[j]):
            stage[k] = STAGE_DET
            score[k] = 1.0
            continue
        li = name_len[i]
        lj = name_len[j]
        ni = n_tokens[i]
        nj = n_tokens[j]
        dist = -1
        if li >= 0 and lj >= 0 and ni >= 0 and nj >= 0:
            dist = _levenshtein(name[i], li, name[j], lj, prev, cur)
            m = max(li, lj)
            name_sim = 1.0 if m == 0 else 1.0 - dist / m
            inter = _intersection(tokens[i], ni, tokens[j], nj)
            union = ni + nj - inter
            addr_sim = 1.0 if union == 0 else inter / union
            score[k] = min(name_sim, addr_sim)
            if name_sim >= theta1 and addr_sim >= theta2:
                stage[k] = STAGE_FUZZY
                continue
        if use_ml:
            _features(i, j, ssn, phone, name, name_len, tokens, n_tokens, dob, prev, cur, f, dist)
            prob = _probability(f, beta, means, scales)
            score[k] = prob
            if prob >= tau:
                stage[k] = STAGE_ML


@nb.njit(cache=True, parallel=True)
def score_pairs(left, right, ssn, phone, name, name_len, tokens, n_tokens, dob,
                theta1, theta2, use_ml, tau, beta, means, scales):
    p = left.shape[0]
    stage = np.zeros(p, dtype=np.uint8)
    score = np.full(p, np.nan)
    n_chunks = (p + CHUNK - 1) // CHUNK
    for c in nb.prange(n_chunks):
        lo = c * CHUNK
        hi = min(lo + CHUNK, p)
        _score_range(lo, hi, left, right, ssn, phone, name, name_len, tokens, n_tokens, dob,
                     theta1, theta2, use_ml, tau, beta, means, scales, stage, score)
    return stage, score


@nb.njit(cache=True, parallel=True)
def pair_features(left, right, ssn, phone, name, name_len, tokens, n_tokens, dob):
    p = left.shape[0]
    out = np.empty((p, 5))
    width = name.shape[1] + 1
    n_chunks = (p + CHUNK - 1) // CHUNK
    for c in nb.prange(n_chunks):
        prev = np.empty(width, dtype=np.int32)
        cur = np.empty(width, dtype=np.int32)
        for k in range(c * CHUNK, min((c + 1) * CHUNK, p)):
            _features(left[k], right[k], ssn, phone, name, name_len, tokens, n_tokens, dob, prev, cur, out[k], -1)
    return out


@nb.njit(cache=True)
def expand_block_pairs(members, offsets):
    total = 0
    for b in range(offsets.shape[0] - 1):
        s = offsets[b + 1] - offsets[b]
        total += s * (s - 1) // 2
    left = np.empty(total, dtype=np.int64)
    right = np.empty(total, dtype=np.int64)
    k = 0
    for b in range(offsets.shape[0] - 1):
        lo = offsets[b]
        hi = offsets[b + 1]
        for x in range(lo, hi):
            for y in range(x + 1, hi):
                left[k] = members[x]
                right[k] = members[y]
                k += 1
    return left, right
