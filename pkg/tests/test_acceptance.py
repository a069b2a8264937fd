"""End-to-end acceptance checks.

Each criterion records one PASS/FAIL line; the lines are printed together
in the pytest terminal summary (see ``conftest.py``).  Run on its own with
``pytest tests/test_acceptance.py``; the 1M-record benchmark is marked
``slow`` and can be deselected with ``-m "not slow"``.
"""

import dataclasses
import datetime as dt
import itertools
import json
import random
import subprocess
import sys
import time

import numpy as np
import pytest

from mdmerge.cli import main
from mdmerge.evaluation import DEFAULT_GRID, evaluate_run, threshold_sweep
from mdmerge.matchers import FuzzyThresholds, levenshtein, match_fuzzy
from mdmerge.pipeline import (
    DuplicateCluster,
    MatchDecision,
    PipelineConfig,
    Stage,
    cluster_matches,
    match_pair,
    merge_cluster,
    run_pipeline,
)
from mdmerge.resolver import TrainConfig, fit_arrays, predict_probability, train
from mdmerge.synthgen import CorpusSpec, generate_canonical, training_arrays

from conftest import rec
from gradcheck import REL_TOL, gradient_errors, random_draw, separable_set
from oracle import check_against_oracle
from test_matchers import all_strings, naive_distance

RESULTS: list[str] = []


def record(number: int, title: str, passed: bool, detail: str) -> None:
    RESULTS.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} | {detail}")
    assert passed, detail


def fmt_pct(x: float) -> str:
    return f"{100 * x:.2f}%"


# 1 -------------------------------------------------------------------------


def test_criterion_1_threshold_trend():
    t0 = time.perf_counter()
    records, truth = generate_canonical(CorpusSpec(n_records=50_000))
    rows = threshold_sweep(records, truth, DEFAULT_GRID)
    elapsed = time.perf_counter() - t0
    recall = [r.report.recall for r in rows]
    fpr = [r.report.false_positive_rate for r in rows]
    trend = all(b <= a for a, b in zip(recall, recall[1:])) and all(b <= a for a, b in zip(fpr, fpr[1:]))
    detail = "; ".join(
        f"({r.theta1:g},{r.theta2:g}) recall={fmt_pct(r.report.recall)} fpr={fmt_pct(r.report.false_positive_rate)}"
        for r in rows
    )
    record(1, "sweep recall and FPR non-increasing (50k, ML off, <= 120 s)",
           trend and elapsed <= 120, f"{detail}; {elapsed:.1f} s")


# 2 -------------------------------------------------------------------------


def test_criterion_2_accuracy_band():
    t0 = time.perf_counter()
    train_records, train_truth = generate_canonical(CorpusSpec(n_records=20_000, seed=1))
    X, y = training_arrays(train_records, train_truth, 100_000, 0.5, seed=0)
    model, _ = fit_arrays(X, y, TrainConfig())
    records, truth = generate_canonical(CorpusSpec(n_records=100_000))
    report = evaluate_run(records, truth, PipelineConfig(), model)
    elapsed = time.perf_counter() - t0
    ok = report.accuracy >= 0.90 and report.recall >= 0.80 and elapsed <= 300
    record(2, "100k default pipeline accuracy >= 0.90, recall >= 0.80, <= 300 s", ok,
           f"accuracy={fmt_pct(report.accuracy)} recall={fmt_pct(report.recall)} "
           f"precision={fmt_pct(report.precision)} pairs={report.n_candidate_pairs} "
           f"pipeline={report.latency_total:.1f} s total={elapsed:.1f} s")


# 3 -------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_3_million_record_bench(tmp_path):
    t0 = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "mdmerge.cli", "bench", "--sizes", "1000000", "--out-dir", str(tmp_path)],
        capture_output=True, text=True,
    )
    elapsed = time.perf_counter() - t0
    if proc.returncode != 0:
        record(3, "1M-record bench", False, f"exit {proc.returncode}: {proc.stderr.strip()[-300:]}")
    (row,) = json.loads((tmp_path / "bench.json").read_text())["rows"]
    ok = elapsed <= 600 and row["throughput"] >= 1000
    record(3, "bench 1,000,000 records end-to-end <= 600 s, throughput >= 1000 rec/s", ok,
           f"command wall={elapsed:.0f} s pipeline latency={row['latency_total']:.0f} s "
           f"throughput={row['throughput']:.0f} rec/s accuracy={fmt_pct(row['accuracy'])} "
           f"recall={fmt_pct(row['recall'])}")


# 4 -------------------------------------------------------------------------


def test_criterion_4_oracle_equivalence():
    words = list(all_strings("abc", 6))
    lev_bad = sum(levenshtein(a, b) != naive_distance(a, b) for a in words for b in words)
    naive_distance.cache_clear()

    records, truth = generate_canonical(CorpusSpec(n_records=2000, seed=4))
    X, y = training_arrays(records, truth, 4000, seed=2)
    model, _ = fit_arrays(X, y, TrainConfig())
    res = check_against_oracle(records, PipelineConfig(), model)
    record(4, "Levenshtein exhaustive oracle + blocked pipeline vs all-pairs run (2,000 records)",
           lev_bad == 0 and res.ok,
           f"{len(words) ** 2} string pairs, {lev_bad} mismatches; {res.n_blocked} blocked of "
           f"{res.n_all_pairs} pairs, stage/score/scalar/blocking mismatches = "
           f"{res.stage_mismatch}/{res.score_mismatch}/{res.scalar_mismatch}/{res.blocking_mismatch}")


# 5 -------------------------------------------------------------------------


def test_criterion_5_gradient_and_monotone_cost():
    worst = max(gradient_errors(*random_draw(np.random.default_rng(seed))).max() for seed in range(50))
    records, truth = generate_canonical(CorpusSpec())
    X, y = training_arrays(records, truth, 100_000, 0.5, seed=0)
    _, history = fit_arrays(X, y, TrainConfig(learning_rate=0.1))
    increases = int(np.count_nonzero(np.diff(history) > 0))
    record(5, "gradient vs central differences (50 draws, rel 1e-5); cost non-increasing at lr=0.1",
           worst <= REL_TOL and increases == 0,
           f"max relative error {worst:.2e}; {increases} cost increases over {len(history) - 1} epochs "
           f"({history[0]:.6f} -> {history[-1]:.6f})")


# 6 -------------------------------------------------------------------------


def test_criterion_6_separable_set():
    data = separable_set(200)
    model = train(data, TrainConfig(learning_rate=0.1, epochs=500))
    correct = sum((predict_probability(model, p.features) >= 0.5) == bool(p.label) for p in data)
    record(6, "separable 200-pair set: training accuracy 1.0 at tau=0.5", correct == len(data),
           f"{correct}/{len(data)} correct")


# 7 -------------------------------------------------------------------------


def _merge_checks(rng: random.Random, n_trials: int = 300) -> int:
    failures = 0
    for _ in range(n_trials):
        members = []
        for k in range(rng.randint(1, 5)):
            year = rng.choice([None, 2000, 2001, 2002])
            members.append(rec(
                f"r{k}",
                ssn=rng.choice([None, "111111111", "222222222"]),
                full_name=rng.choice([None, "ann lee", "anne lee"]),
                full_address=rng.choice([None, "1 main st", "2 oak ave"]),
                source_timestamp=None if year is None else dt.datetime(year, 1, 1, tzinfo=dt.timezone.utc),
            ))
        lookup = {r.id: r for r in members}
        ids = [r.id for r in members]
        g = merge_cluster(DuplicateCluster(tuple(ids)), lookup)
        shuffled = ids[:]
        rng.shuffle(shuffled)
        g2 = merge_cluster(DuplicateCluster(tuple(shuffled)), dict(reversed(list(lookup.items()))))
        again = merge_cluster(DuplicateCluster((g.survivor.id, *ids)), {g.survivor.id: g.survivor, **lookup})
        if g2.survivor != g.survivor or g2.field_sources != g.field_sources:
            failures += 1
        if dataclasses.replace(again.survivor, id=g.survivor.id) != g.survivor:
            failures += 1
    return failures


def _partition_checks(rng: random.Random, n_trials: int = 300) -> int:
    failures = 0
    for _ in range(n_trials):
        universe = [f"n{k}" for k in range(rng.randint(2, 12))]
        decisions = []
        for a, b in itertools.combinations(sorted(universe), 2):
            if rng.random() < 0.3:
                hit = rng.random() < 0.5
                decisions.append(MatchDecision(a, b, hit, Stage.FUZZY if hit else Stage.NONE))
        clusters = cluster_matches(decisions, universe)
        flat = [x for c in clusters for x in c.member_ids]
        where = {x: k for k, c in enumerate(clusters) for x in c.member_ids}
        if sorted(flat) != sorted(universe):
            failures += 1
        if any(where[d.left] != where[d.right] for d in decisions if d.matched):
            failures += 1
    return failures


def _symmetry_and_monotonicity(records, rng: random.Random) -> tuple[int, int]:
    cfg = PipelineConfig(ml_enabled=False)
    asym = mono = 0
    for _ in range(3000):
        a, b = rng.sample(records, 2)
        if match_pair(a, b, cfg) != match_pair(b, a, cfg):
            asym += 1
        t1, t2 = rng.random(), rng.random()
        tight = FuzzyThresholds(t1 + (1 - t1) * rng.random(), t2 + (1 - t2) * rng.random())
        if match_fuzzy(a, b, tight).matched and not match_fuzzy(a, b, FuzzyThresholds(t1, t2)).matched:
            mono += 1
    return asym, mono


def _determinism(tmp_path) -> list[str]:
    def run_all(root):
        main(["gen", "--out-dir", str(root), "--n-entities", "600", "--seed", "5"])
        main(["train", "--input", str(root / "corpus.jsonl"), "--truth", str(root / "truth.jsonl"),
              "--model", str(root / "model.json"), "--n-pairs", "4000", "--epochs", "50", "--seed", "5"])
        main(["dedupe", "--input", str(root / "corpus.jsonl"), "--model", str(root / "model.json"),
              "--out-dir", str(root / "out"), "--seed", "5"])

    run_all(tmp_path / "a")
    run_all(tmp_path / "b")
    names = ["corpus.jsonl", "truth.jsonl", "model.json", "out/golden.jsonl", "out/golden_sources.jsonl",
             "out/decisions.jsonl"]
    return [n for n in names if (tmp_path / "a" / n).read_bytes() != (tmp_path / "b" / n).read_bytes()]


def test_criterion_7_invariants(tmp_path, capsys):
    rng = random.Random(7)
    records, _ = generate_canonical(CorpusSpec(n_entities=2000, seed=3))
    merge_fail = _merge_checks(rng)
    partition_fail = _partition_checks(rng)
    asym, mono = _symmetry_and_monotonicity(records, rng)
    differing = _determinism(tmp_path)
    capsys.readouterr()
    result = run_pipeline(records, PipelineConfig(ml_enabled=False))
    covered = sorted(i for g in result.golden for i in g.cluster.member_ids) == sorted(r.id for r in records)
    ok = not (merge_fail or partition_fail or asym or mono or differing) and covered
    record(7, "invariants: merge, partition, symmetry, threshold monotonicity, seed determinism", ok,
           f"merge failures={merge_fail} partition failures={partition_fail} asymmetric={asym} "
           f"non-monotone={mono} pipeline partition={'ok' if covered else 'broken'} "
           f"non-deterministic outputs={differing or 'none'}")
