"""Pairwise evaluation, threshold sweeps and the scaling benchmark.

Accuracy here always means pairwise classification accuracy over the
candidate pairs that blocking produced; true duplicates that never shared a
block are reported separately as blocking recall.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .matchers import FuzzyThresholds
from .pipeline import DecisionTable, MatchDecision, PipelineConfig, run_pipeline
from .records import CanonicalRecord, normalize_record
from .resolver import LogisticModel
from .synthgen import CorpusSpec, GroundTruth, generate_corpus

ACCURACY_NOTE = "accuracy = pairwise classification accuracy over blocked candidate pairs"
DEFAULT_GRID = ((0.7, 0.6), (0.8, 0.7), (0.9, 0.8))


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    accuracy: float
    false_positive_rate: float
    n_candidate_pairs: int
    tp: int
    fp: int
    tn: int
    fn: int
    dataset_size: int
    latency_total: float | None = None  # seconds
    throughput: float | None = None  # records / second
    latency_per_record_ms: float | None = None
    blocking_recall: float | None = None
    n_clusters: int | None = None

    def with_timing(self, seconds: float) -> EvalReport:
        return replace(
            self,
            latency_total=seconds,
            throughput=self.dataset_size / seconds if seconds > 0 else float("inf"),
            latency_per_record_ms=1000.0 * seconds / self.dataset_size if self.dataset_size else 0.0,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class SweepRow:
    theta1: float
    theta2: float
    report: EvalReport

    def to_dict(self) -> dict:
        return {"theta1": self.theta1, "theta2": self.theta2, **self.report.to_dict()}


def _ratio(num: int, den: int, empty: float) -> float:
    return num / den if den else empty


def confusion_report(tp: int, fp: int, tn: int, fn: int, dataset_size: int = 0, **extra) -> EvalReport:
    total = tp + fp + tn + fn
    return EvalReport(
        precision=_ratio(tp, tp + fp, 1.0),
        recall=_ratio(tp, tp + fn, 1.0),
        accuracy=_ratio(tp + tn, total, 1.0),
        false_positive_rate=_ratio(fp, fp + tn, 0.0),
        n_candidate_pairs=total,
        tp=tp, fp=fp, tn=tn, fn=fn,
        dataset_size=dataset_size,
        **extra,
    )


def pairwise_metrics(
    decisions: DecisionTable | Iterable[MatchDecision], truth: GroundTruth, dataset_size: int | None = None
) -> EvalReport:
    """Confusion matrix of the decisions against same-entity ground truth."""
    mapping = truth.record_to_entity
    size = len(mapping) if dataset_size is None else dataset_size
    if isinstance(decisions, DecisionTable):
        try:
            ent = np.array([mapping[i] for i in decisions.ids])
        except KeyError as exc:
            raise KeyError(f"record {exc.args[0]!r} missing from ground truth") from None
        _, codes = np.unique(ent, return_inverse=True) if len(ent) else (None, np.empty(0, dtype=np.int64))
        same = codes[decisions.left] == codes[decisions.right]
        pred = decisions.matched
        tp = int(np.count_nonzero(pred & same))
        fp = int(np.count_nonzero(pred & ~same))
        fn = int(np.count_nonzero(~pred & same))
        tn = len(decisions) - tp - fp - fn
        return confusion_report(tp, fp, tn, fn, size)
    tp = fp = tn = fn = 0
    for d in decisions:
        try:
            same = mapping[d.left] == mapping[d.right]
        except KeyError as exc:
            raise KeyError(f"record {exc.args[0]!r} missing from ground truth") from None
        if d.matched:
            tp += same
            fp += not same
        else:
            fn += same
            tn += not same
    return confusion_report(tp, fp, tn, fn, size)


def evaluate_run(
    records: Sequence[CanonicalRecord],
    truth: GroundTruth,
    cfg: PipelineConfig,
    model: LogisticModel | None,
) -> EvalReport:
    """Run the pipeline once and score it, including timing and blocking recall."""
    t0 = time.perf_counter()
    result = run_pipeline(records, cfg, model)
    elapsed = time.perf_counter() - t0
    report = pairwise_metrics(result.decisions, truth, len(records))
    n_true = truth_pairs_within(records, truth)
    blocked_true = report.tp + report.fn
    return replace(
        report.with_timing(elapsed),
        blocking_recall=_ratio(blocked_true, n_true, 1.0),
        n_clusters=len(result.golden),
    )


def truth_pairs_within(records: Sequence[CanonicalRecord], truth: GroundTruth) -> int:
    sizes: dict[str, int] = {}
    for r in records:
        e = truth.record_to_entity[r.id]
        sizes[e] = sizes.get(e, 0) + 1
    return sum(s * (s - 1) // 2 for s in sizes.values())


def threshold_sweep(
    records: Sequence[CanonicalRecord],
    truth: GroundTruth,
    grid: Sequence[tuple[float, float]] = DEFAULT_GRID,
    cfg: PipelineConfig | None = None,
    model: LogisticModel | None = None,
) -> list[SweepRow]:
    """Re-run the pipeline per ``(theta1, theta2)`` with the ML stage off."""
    if not grid:
        raise ValueError("threshold grid is empty")
    cfg = cfg or PipelineConfig()
    rows = []
    for theta1, theta2 in grid:
        point = replace(cfg, thresholds=FuzzyThresholds(theta1, theta2), ml_enabled=False)
        rows.append(SweepRow(theta1, theta2, evaluate_run(records, truth, point, None)))
    return rows


def size_seed(base_seed: int, size: int) -> int:
    """Seed for the benchmark corpus of a given size."""
    return base_seed * 1_000_003 + size


def benchmark(
    sizes: Sequence[int],
    template: CorpusSpec,
    cfg: PipelineConfig,
    model: LogisticModel | None,
) -> list[EvalReport]:
    """One generated corpus per size; latency covers normalization through merge."""
    sizes = list(sizes)
    if not sizes or any(s <= 0 for s in sizes) or sizes != sorted(sizes):
        raise ValueError("sizes must be positive and ascending")
    reports = []
    for size in sizes:
        spec = replace(template, n_records=size, seed=size_seed(template.seed, size))
        raws, truth = generate_corpus(spec)
        t0 = time.perf_counter()
        records = [normalize_record(r) for r in raws]
        del raws
        result = run_pipeline(records, cfg, model)
        elapsed = time.perf_counter() - t0
        report = pairwise_metrics(result.decisions, truth, len(records))
        n_true = truth.n_true_pairs()
        reports.append(
            replace(
                report.with_timing(elapsed),
                blocking_recall=_ratio(report.tp + report.fn, n_true, 1.0),
                n_clusters=len(result.golden),
            )
        )
    return reports


# report formatting ----------------------------------------------------------


def _pct(x: float | None) -> str:
    return "-" if x is None else f"{100 * x:.2f}"


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    line = " | ".join(h.ljust(w) for h, w in zip(header, widths))
    sep = "-+-".join("-" * w for w in widths)
    body = [" | ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join([line, sep, *body])


def format_sweep(rows: Sequence[SweepRow]) -> str:
    header = ("Threshold Setting", "Accuracy (%)", "False Positives (%)", "Recall (%)", "Precision (%)", "Pairs")
    body = [
        (
            f"theta1={r.theta1:g}, theta2={r.theta2:g}",
            _pct(r.report.accuracy),
            _pct(r.report.false_positive_rate),
            _pct(r.report.recall),
            _pct(r.report.precision),
            str(r.report.n_candidate_pairs),
        )
        for r in rows
    ]
    return _table(header, body) + f"\n({ACCURACY_NOTE}; ML stage disabled)\n"


def format_bench(reports: Sequence[EvalReport]) -> str:
    header = ("Dataset Size", "Latency (ms)", "Throughput (records/sec)", "Accuracy (%)",
              "Recall (%)", "Per-record (ms)", "Pairs")
    body = [
        (
            f"{r.dataset_size:,}",
            "-" if r.latency_total is None else f"{1000 * r.latency_total:,.0f}",
            "-" if r.throughput is None else f"{r.throughput:,.0f}",
            _pct(r.accuracy),
            _pct(r.recall),
            "-" if r.latency_per_record_ms is None else f"{r.latency_per_record_ms:.4f}",
            f"{r.n_candidate_pairs:,}",
        )
        for r in reports
    ]
    return _table(header, body) + f"\n({ACCURACY_NOTE}; latency = end-to-end batch wall clock)\n"


def write_reports(out_dir: str | Path, stem: str, rows: Sequence[dict], text: str) -> list[Path]:
    """Write ``<stem>.json``, ``<stem>.txt`` and ``<stem>.csv`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / f"{stem}.json", out_dir / f"{stem}.txt", out_dir / f"{stem}.csv"]
    paths[0].write_text(json.dumps({"note": ACCURACY_NOTE, "rows": list(rows)}, indent=2) + "\n", encoding="utf-8")
    paths[1].write_text(text, encoding="utf-8")
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    paths[2].write_text(buf.getvalue(), encoding="utf-8")
    return paths
