"""Compare the numba and numpy kernel backends on blocked candidate pairs.

    python benchmarks/bench_backends.py --sizes 20000,100000 --repeat 3

Both backends score the same pairs; the script checks the outputs agree
before reporting timings.
"""

import argparse
import json
import sys
import time

import numpy as np

from mdmerge import kernels
from mdmerge.columnar import encode_records
from mdmerge.pipeline import Blocking, candidate_pairs
from mdmerge.resolver import TrainConfig, fit_arrays
from mdmerge.synthgen import CorpusSpec, generate_canonical, training_arrays


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def run(size, repeat, model):
    records, _ = generate_canonical(CorpusSpec(n_records=size, seed=size))
    records.sort(key=lambda r: r.id)
    table = encode_records(records)
    left, right = candidate_pairs(records, Blocking.COMPOSITE)
    row = {"records": size, "pairs": len(left)}
    outputs = {}
    for backend in kernels.available_backends():
        with kernels.use_backend(backend):
            kernels.score_pairs(table, left[:8], right[:8], 0.8, 0.7, model)  # compile / warm up
            seconds, outputs[backend] = best_of(
                lambda: kernels.score_pairs(table, left, right, 0.8, 0.7, model), repeat
            )
        row[f"{backend}_s"] = seconds
        row[f"{backend}_pairs_per_s"] = len(left) / seconds if seconds else float("inf")
    if len(outputs) == 2:
        (sa, pa), (sb, pb) = outputs.values()
        row["agree"] = bool(np.array_equal(sa, sb) and np.allclose(pa, pb, rtol=1e-12, equal_nan=True))
        row["speedup"] = row["numpy_s"] / row["numba_s"]
    return row


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="20000,100000")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="also write rows to this file")
    args = ap.parse_args(argv)

    train_records, truth = generate_canonical(CorpusSpec(n_records=20_000, seed=1))
    X, y = training_arrays(train_records, truth, 20_000, seed=0)
    model, _ = fit_arrays(X, y, TrainConfig())

    rows = [run(int(s), args.repeat, model) for s in args.sizes.split(",")]
    print(f"{'records':>9} {'pairs':>10} {'numba s':>9} {'numpy s':>9} {'speedup':>8} agree")
    for r in rows:
        print(f"{r['records']:>9,} {r['pairs']:>10,} {r.get('numba_s', float('nan')):>9.3f} "
              f"{r.get('numpy_s', float('nan')):>9.3f} {r.get('speedup', float('nan')):>8.1f} {r.get('agree', '-')}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0 if all(r.get("agree", True) for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
