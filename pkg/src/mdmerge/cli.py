"""Command-line entry point: ``mdmerge {gen,train,dedupe,sweep,bench}``.

Settings come from an optional JSON config file (``--config``) and are
overridden by flags.  Exit codes: 0 success, 1 runtime failure, 2 config or
usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .evaluation import (
    DEFAULT_GRID,
    benchmark,
    format_bench,
    format_sweep,
    pairwise_metrics,
    threshold_sweep,
    write_reports,
)
from .matchers import FuzzyThresholds
from .pipeline import Blocking, PipelineConfig, run_pipeline, write_decision_log
from .records import (
    CanonicalRecord,
    MalformedInput,
    RecordError,
    normalize_record,
    read_records,
    write_raw_records,
    write_records,
)
from .resolver import LogisticModel, TrainConfig, fit_arrays, sigmoid, standardize
from .synthgen import CorpusSpec, GroundTruth, NoiseSpec, generate_corpus, training_arrays

logger = logging.getLogger("mdmerge")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class ConfigError(Exception):
    """Invalid configuration or usage (exit code 2)."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class TrainSettings:
    learning_rate: float = 0.1
    epochs: int = 500
    n_pairs: int = 100_000
    positive_fraction: float = 0.5
    hard_negative_fraction: float = 0.5


@dataclass
class RunConfig:
    input: str | None = None
    truth: str | None = None
    model: str | None = None
    out_dir: str = "out"
    format: str = "jsonl"
    theta1: float = 0.8
    theta2: float = 0.7
    tau: float = 0.5
    blocking: str = Blocking.COMPOSITE.value
    ml_enabled: bool = True
    train: TrainSettings = field(default_factory=TrainSettings)
    corpus: CorpusSpec = field(default_factory=CorpusSpec)
    grid: list[tuple[float, float]] = field(default_factory=lambda: list(DEFAULT_GRID))
    sizes: list[int] = field(default_factory=lambda: [10_000, 100_000])
    seed: int = 0
    workers: int | None = None
    strict: bool = False

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            thresholds=FuzzyThresholds(self.theta1, self.theta2),
            tau=self.tau,
            blocking=Blocking(self.blocking),
            ml_enabled=self.ml_enabled,
            workers=self.workers,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.train.learning_rate, self.train.epochs, self.seed)

    def validate(self) -> None:
        try:
            self.pipeline_config()
            self.train_config()
            for t1, t2 in self.grid:
                FuzzyThresholds(t1, t2)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.format not in ("jsonl", "csv"):
            raise ConfigError(f"format must be 'jsonl' or 'csv', got {self.format!r}")
        if self.train.n_pairs < 2:
            raise ConfigError("train.n_pairs must be >= 2")
        if not 0.0 <= self.train.positive_fraction <= 1.0:
            raise ConfigError("train.positive_fraction must lie in [0, 1]")
        if not self.sizes or any(s <= 0 for s in self.sizes) or list(self.sizes) != sorted(self.sizes):
            raise ConfigError("bench sizes must be positive and ascending")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be >= 1")


_SECTIONS = {"paths", "matching", "train", "corpus", "sweep", "bench", "seed", "workers", "strict"}


def _take(section: dict, allowed: Sequence[str], where: str) -> dict:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    return section


def load_config(path: str | None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    _take(doc, _SECTIONS, "config")
    try:
        for key, value in _take(doc.get("paths", {}), ("input", "truth", "model", "out_dir", "format"), "paths").items():
            setattr(cfg, key, value)
        for key, value in _take(
            doc.get("matching", {}), ("theta1", "theta2", "tau", "blocking", "ml_enabled"), "matching"
        ).items():
            setattr(cfg, key, value)
        train = _take(doc.get("train", {}), [f.name for f in dataclasses.fields(TrainSettings)], "train")
        cfg.train = dataclasses.replace(cfg.train, **train)
        corpus = dict(doc.get("corpus", {}))
        noise = _take(corpus.pop("noise", {}), [f.name for f in dataclasses.fields(NoiseSpec)], "corpus.noise")
        _take(corpus, [f.name for f in dataclasses.fields(CorpusSpec)], "corpus")
        cfg.corpus = dataclasses.replace(cfg.corpus, noise=NoiseSpec(**noise), **corpus)
        if "sweep" in doc:
            cfg.grid = [tuple(p) for p in _take(doc["sweep"], ("grid",), "sweep").get("grid", cfg.grid)]
        if "bench" in doc:
            cfg.sizes = list(_take(doc["bench"], ("sizes",), "bench").get("sizes", cfg.sizes))
        for key in ("seed", "workers", "strict"):
            if key in doc:
                setattr(cfg, key, doc[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    return cfg


def _parse_grid(text: str) -> list[tuple[float, float]]:
    try:
        pairs = [p.split(":") for p in text.split(",") if p.strip()]
        return [(float(a), float(b)) for a, b in pairs]
    except ValueError:
        raise ConfigError(f"bad grid {text!r}; expected e.g. 0.7:0.6,0.8:0.7") from None


def _parse_sizes(text: str) -> list[int]:
    try:
        return [int(float(s.replace("_", ""))) for s in text.replace("k", "e3").replace("M", "e6").split(",") if s]
    except ValueError:
        raise ConfigError(f"bad sizes {text!r}; expected e.g. 10000,100000") from None


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    overrides = {
        "input": "input", "truth": "truth", "model": "model", "out_dir": "out_dir", "format": "format",
        "theta1": "theta1", "theta2": "theta2", "tau": "tau", "blocking": "blocking",
        "ml_enabled": "ml_enabled", "seed": "seed", "workers": "workers", "strict": "strict",
    }
    for attr, key in overrides.items():
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, attr, value)
    train = {k: getattr(args, k) for k in ("learning_rate", "epochs", "n_pairs", "positive_fraction")
             if getattr(args, k, None) is not None}
    cfg.train = dataclasses.replace(cfg.train, **train)
    corpus = {k: getattr(args, k) for k in ("n_entities", "n_records") if getattr(args, k, None) is not None}
    if corpus or getattr(args, "seed", None) is not None:
        try:
            cfg.corpus = dataclasses.replace(cfg.corpus, seed=cfg.seed, **corpus)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if getattr(args, "grid", None):
        cfg.grid = _parse_grid(args.grid)
    if getattr(args, "sizes", None):
        cfg.sizes = _parse_sizes(args.sizes)
    if cfg.workers is None:
        cfg.workers = os.cpu_count() or 1
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _require_file(path: str | None, what: str) -> Path:
    if not path:
        raise ConfigError(f"no {what} given")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {path}")
    return p


def _out_dir(path: str) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc.strerror}") from None
    if not os.access(p, os.W_OK):
        raise ConfigError(f"output directory {path} is not writable")
    return p


def _load_input(cfg: RunConfig) -> tuple[list[CanonicalRecord], int]:
    path = _require_file(cfg.input, "input corpus")
    errors: list[MalformedInput] = []
    records = read_records(path, strict=cfg.strict, errors=errors)
    if errors:
        print(f"warning: skipped {len(errors)} malformed record(s) in {path}", file=sys.stderr)
    return records, len(errors)


def train_model(
    records: Sequence[CanonicalRecord], truth: GroundTruth, cfg: RunConfig, verbose: bool = False
) -> tuple[LogisticModel, np.ndarray, float]:
    """Sample labeled pairs, fit, and return (model, cost history, train accuracy)."""
    X, y = training_arrays(
        records, truth, cfg.train.n_pairs, cfg.train.positive_fraction, cfg.seed, cfg.train.hard_negative_fraction
    )
    on_epoch = (lambda e, c: print(f"epoch {e:5d} cost {c:.10f}")) if verbose else None
    model, history = fit_arrays(X, y, cfg.train_config(), cfg.tau, on_epoch)
    prob = sigmoid(model.beta[0] + standardize(model, X) @ model.beta[1:])
    accuracy = float(np.mean((prob >= model.tau) == (y == 1)))
    return model, history, accuracy


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_gen(cfg: RunConfig) -> int:
    out = _out_dir(cfg.out_dir)
    raws, truth = generate_corpus(cfg.corpus)
    corpus_path = out / f"corpus.{cfg.format}"
    truth_path = out / "truth.jsonl"
    try:
        write_raw_records(corpus_path, raws, cfg.format)
        truth.save(truth_path)
    except OSError as exc:
        raise ConfigError(f"cannot write to {out}: {exc.strerror}") from None
    n_entities = len(set(truth.record_to_entity.values()))
    print(f"records={len(raws)} entities={n_entities} duplicates={len(raws) - n_entities}")
    print(f"wrote {corpus_path} and {truth_path}")
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    records, _ = _load_input(cfg)
    truth = GroundTruth.load(_require_file(cfg.truth, "truth file"))
    model_path = Path(cfg.model or Path(cfg.out_dir) / "model.json")
    _out_dir(str(model_path.parent))
    try:
        model, history, accuracy = train_model(records, truth, cfg, verbose=True)
    except ValueError as exc:
        print(f"error: cannot train: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    model.save(model_path)
    print(f"initial cost {history[0]:.10f}")
    print(f"final cost {history[-1]:.10f}")
    print(f"training accuracy {accuracy:.6f}")
    print(f"wrote {model_path}")
    return EXIT_OK


def _load_model(cfg: RunConfig) -> LogisticModel | None:
    if not cfg.ml_enabled:
        return None
    path = _require_file(cfg.model, "model file (or disable ML with --no-ml)")
    try:
        return LogisticModel.load(path)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad model file {path}: {exc}") from None


def cmd_dedupe(cfg: RunConfig) -> int:
    model = _load_model(cfg)
    out = _out_dir(cfg.out_dir)
    records, skipped = _load_input(cfg)
    result = run_pipeline(records, cfg.pipeline_config(), model)
    write_records(out / f"golden.{cfg.format}", (g.survivor for g in result.golden), cfg.format)
    with (out / "golden_sources.jsonl").open("w", encoding="utf-8") as fh:
        for g in result.golden:
            doc = {"golden_id": g.survivor.id, "members": list(g.cluster.member_ids), "field_sources": dict(g.field_sources)}
            fh.write(json.dumps(doc) + "\n")
    write_decision_log(out / "decisions.jsonl", result.decisions)
    multi = sum(len(g.cluster.member_ids) > 1 for g in result.golden)
    stages = " ".join(f"{k}={v}" for k, v in result.decisions.stage_counts().items())
    print(f"records={len(records)} skipped={skipped} candidate_pairs={len(result.decisions)} {stages}")
    print(f"clusters={len(result.golden)} multi_record_clusters={multi}")
    print(f"wrote golden records, field sources and decision log to {out}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, emit_decisions: bool = False) -> int:
    truth = GroundTruth.load(_require_file(cfg.truth, "truth file"))
    out = _out_dir(cfg.out_dir)
    records, _ = _load_input(cfg)
    rows = threshold_sweep(records, truth, cfg.grid, cfg.pipeline_config())
    if emit_decisions:
        for r in rows:
            point = dataclasses.replace(
                cfg.pipeline_config(), thresholds=FuzzyThresholds(r.theta1, r.theta2), ml_enabled=False
            )
            decisions = run_pipeline(records, point).decisions
            write_decision_log(out / f"decisions_{r.theta1:g}_{r.theta2:g}.jsonl", decisions)
    text = format_sweep(rows)
    write_reports(out, "sweep", [r.to_dict() for r in rows], text)
    print(text, end="")
    return EXIT_OK


def cmd_bench(cfg: RunConfig) -> int:
    out = _out_dir(cfg.out_dir)
    model = None
    if cfg.ml_enabled:
        if cfg.model:
            model = _load_model(cfg)
        else:
            spec = dataclasses.replace(cfg.corpus, n_records=20_000, seed=cfg.seed + 1)
            raws, truth = generate_corpus(spec)
            model, history, acc = train_model([normalize_record(r) for r in raws], truth, cfg)
            print(f"trained model on 20,000-record corpus: final cost {history[-1]:.6f}, accuracy {acc:.4f}")
    reports = benchmark(cfg.sizes, cfg.corpus, cfg.pipeline_config(), model)
    text = format_bench(reports)
    write_reports(out, "bench", [r.to_dict() for r in reports], text)
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _bool_flag(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--ml", dest="ml_enabled", action="store_const", const=True, help="enable the ML stage")
    g.add_argument("--no-ml", dest="ml_enabled", action="store_const", const=False, help="disable the ML stage")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS, help="kernel threads")
    common.add_argument("--strict", action="store_const", const=True, default=argparse.SUPPRESS,
                        help="fail on the first malformed input record")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    match = argparse.ArgumentParser(add_help=False)
    match.add_argument("--theta1", type=float)
    match.add_argument("--theta2", type=float)
    match.add_argument("--tau", type=float)
    match.add_argument("--blocking", choices=[b.value for b in Blocking])

    parser = argparse.ArgumentParser(prog="mdmerge", parents=[common], description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic corpus + ground truth")
    p.add_argument("--out-dir")
    p.add_argument("--n-entities", type=int)
    p.add_argument("--n-records", type=int)
    p.add_argument("--format", choices=["jsonl", "csv"])

    p = sub.add_parser("train", parents=[common], help="train the conflict-resolution model")
    p.add_argument("--input")
    p.add_argument("--truth")
    p.add_argument("--model", help="output model path")
    p.add_argument("--out-dir")
    p.add_argument("--n-pairs", type=int)
    p.add_argument("--positive-fraction", type=float)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--tau", type=float)

    p = sub.add_parser("dedupe", parents=[common, match], help="match and merge a corpus")
    p.add_argument("--input")
    p.add_argument("--model")
    p.add_argument("--out-dir")
    p.add_argument("--format", choices=["jsonl", "csv"])
    _bool_flag(p)

    p = sub.add_parser("sweep", parents=[common, match], help="fuzzy threshold sensitivity sweep")
    p.add_argument("--input")
    p.add_argument("--truth")
    p.add_argument("--out-dir")
    p.add_argument("--grid", help="theta pairs, e.g. 0.7:0.6,0.8:0.7,0.9:0.8")
    p.add_argument("--emit-decisions", action="store_true", help="also write one decision log per grid point")

    p = sub.add_parser("bench", parents=[common, match], help="latency / throughput / accuracy by corpus size")
    p.add_argument("--sizes", help="comma-separated record counts, e.g. 10000,100000")
    p.add_argument("--model")
    p.add_argument("--out-dir")
    _bool_flag(p)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        if args.command == "gen":
            return cmd_gen(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "dedupe":
            return cmd_dedupe(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.emit_decisions)
        return cmd_bench(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RecordError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
