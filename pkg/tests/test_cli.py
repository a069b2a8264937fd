import json
import os
import re
import subprocess
import sys

import pytest

from mdmerge.cli import main
from mdmerge.evaluation import pairwise_metrics
from mdmerge.pipeline import read_decision_log
from mdmerge.records import read_records
from mdmerge.resolver import LogisticModel, predict_probability, extract_features
from mdmerge.synthgen import GroundTruth


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    assert main(["gen", "--out-dir", str(d), "--n-entities", "800", "--seed", "3"]) == 0
    return d


@pytest.fixture(scope="module")
def model_path(corpus):
    path = corpus / "model.json"
    assert main(["train", "--input", str(corpus / "corpus.jsonl"), "--truth", str(corpus / "truth.jsonl"),
                 "--model", str(path), "--n-pairs", "5000", "--epochs", "100"]) == 0
    return path


def test_gen_deterministic_and_summary(tmp_path, capsys):
    outs = []
    for k in (1, 2):
        code, out, _ = run(capsys, "gen", "--out-dir", tmp_path / str(k), "--n-entities", 100, "--seed", 7)
        assert code == 0
        outs.append(out)
    for name in ("corpus.jsonl", "truth.jsonl"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "2" / name).read_bytes()
    rec_n, ent_n, dup_n = map(int, re.search(r"records=(\d+) entities=(\d+) duplicates=(\d+)", outs[0]).groups())
    assert ent_n == 100 and rec_n == ent_n + dup_n
    assert len((tmp_path / "1" / "corpus.jsonl").read_text().splitlines()) == rec_n


def test_gen_csv(tmp_path, capsys):
    code, _, _ = run(capsys, "gen", "--out-dir", tmp_path, "--n-entities", 20, "--format", "csv")
    assert code == 0 and len(read_records(tmp_path / "corpus.csv")) >= 20


def test_gen_unwritable_dir(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = run(capsys, "gen", "--out-dir", blocker / "sub", "--n-entities", 10)
    assert code == 2 and "output directory" in err


@pytest.mark.skipif(hasattr(os, "geteuid") and os.geteuid() == 0, reason="root ignores directory permissions")
def test_gen_read_only_dir(tmp_path, capsys):
    ro = tmp_path / "ro"
    ro.mkdir()
    ro.chmod(0o500)
    try:
        assert run(capsys, "gen", "--out-dir", ro, "--n-entities", 10)[0] == 2
    finally:
        ro.chmod(0o700)


def test_train_prints_monotone_costs_and_round_trips(corpus, tmp_path, capsys):
    path = tmp_path / "m.json"
    code, out, _ = run(capsys, "train", "--input", corpus / "corpus.jsonl", "--truth", corpus / "truth.jsonl",
                       "--model", path)
    assert code == 0
    costs = [float(c) for c in re.findall(r"epoch\s+\d+ cost (\S+)", out)]
    assert len(costs) == 500
    assert all(b <= a for a, b in zip(costs, costs[1:]))
    assert "final cost" in out and "training accuracy" in out
    loaded = LogisticModel.load(path)
    records = read_records(corpus / "corpus.jsonl")
    # classifications from the file equal those of a model trained again in memory
    from mdmerge.cli import RunConfig, train_model

    cfg = RunConfig()
    in_memory, _, _ = train_model(records, GroundTruth.load(corpus / "truth.jsonl"), cfg)
    assert loaded == in_memory
    for a, b in zip(records[:-1:7], records[1::7]):
        fv = extract_features(a, b)
        assert (predict_probability(loaded, fv) >= 0.5) == (predict_probability(in_memory, fv) >= 0.5)


def test_train_zero_learning_rate(corpus, tmp_path, capsys):
    code, out, _ = run(capsys, "train", "--input", corpus / "corpus.jsonl", "--truth", corpus / "truth.jsonl",
                       "--model", tmp_path / "m.json", "--learning-rate", 0, "--epochs", 3, "--n-pairs", 500)
    assert code == 0
    initial = re.search(r"initial cost (\S+)", out).group(1)
    final = re.search(r"final cost (\S+)", out).group(1)
    assert initial == final


def test_train_single_class(corpus, tmp_path, capsys):
    code, _, err = run(capsys, "train", "--input", corpus / "corpus.jsonl", "--truth", corpus / "truth.jsonl",
                       "--model", tmp_path / "m.json", "--positive-fraction", 1.0, "--n-pairs", 100)
    assert code == 1 and "single class" in err


def test_train_missing_truth(corpus, tmp_path, capsys):
    code, _, err = run(capsys, "train", "--input", corpus / "corpus.jsonl", "--truth", tmp_path / "nope.jsonl")
    assert code == 2 and "truth" in err


def test_dedupe_outputs_and_determinism(corpus, model_path, tmp_path, capsys):
    logs = []
    for k in (1, 2):
        out_dir = tmp_path / str(k)
        code, out, _ = run(capsys, "dedupe", "--input", corpus / "corpus.jsonl", "--model", model_path,
                           "--out-dir", out_dir)
        assert code == 0 and "clusters=" in out
        logs.append((out_dir / "decisions.jsonl").read_bytes())
    assert logs[0] == logs[1]
    golden = read_records(tmp_path / "1" / "golden.jsonl")
    sources = [json.loads(line) for line in (tmp_path / "1" / "golden_sources.jsonl").read_text().splitlines()]
    assert len(golden) == len(sources) == int(re.search(r"clusters=(\d+)", out).group(1))
    members = sorted(m for s in sources for m in s["members"])
    assert members == sorted(r.id for r in read_records(corpus / "corpus.jsonl"))


def test_dedupe_zero_duplicate_corpus(tmp_path, capsys):
    d = tmp_path / "c"
    assert main(["gen", "--out-dir", str(d), "--n-entities", "200", "--config", str(_config(tmp_path, {
        "corpus": {"duplicates_mean": 0, "household_rate": 0}}))]) == 0
    code, out, _ = run(capsys, "dedupe", "--input", d / "corpus.jsonl", "--no-ml", "--out-dir", tmp_path / "o")
    assert code == 0 and "clusters=200 " in out


def test_dedupe_rejects_bad_threshold(corpus, tmp_path, capsys):
    code, _, err = run(capsys, "dedupe", "--input", corpus / "corpus.jsonl", "--no-ml", "--theta1", 1.01,
                       "--out-dir", tmp_path)
    assert code == 2 and "theta1" in err


def test_dedupe_needs_model_when_ml_on(corpus, tmp_path, capsys):
    assert run(capsys, "dedupe", "--input", corpus / "corpus.jsonl", "--out-dir", tmp_path)[0] == 2


def test_malformed_input(tmp_path, capsys):
    path = tmp_path / "in.jsonl"
    path.write_text('{"id": "a", "full_name": "x"}\n{oops\n{"id": "b", "full_name": "y"}\n')
    code, out, err = run(capsys, "dedupe", "--input", path, "--no-ml", "--out-dir", tmp_path / "o")
    assert code == 0 and "skipped=1" in out and "skipped 1 malformed" in err
    code, _, err = run(capsys, "dedupe", "--input", path, "--no-ml", "--out-dir", tmp_path / "o", "--strict")
    assert code == 1 and ":2:" in err


def test_sweep_default_grid_and_consistency(corpus, tmp_path, capsys):
    code, out, _ = run(capsys, "sweep", "--input", corpus / "corpus.jsonl", "--truth", corpus / "truth.jsonl",
                       "--out-dir", tmp_path, "--emit-decisions")
    assert code == 0
    rows = json.loads((tmp_path / "sweep.json").read_text())["rows"]
    assert [(r["theta1"], r["theta2"]) for r in rows] == [(0.7, 0.6), (0.8, 0.7), (0.9, 0.8)]
    truth = GroundTruth.load(corpus / "truth.jsonl")
    for r in rows:
        log = read_decision_log(tmp_path / f"decisions_{r['theta1']:g}_{r['theta2']:g}.jsonl")
        again = pairwise_metrics(log, truth, r["dataset_size"])
        assert (again.tp, again.fp, again.tn, again.fn) == (r["tp"], r["fp"], r["tn"], r["fn"])
        assert again.accuracy == r["accuracy"] and again.recall == r["recall"]
    assert (tmp_path / "sweep.txt").read_text() == out


def test_sweep_missing_truth(corpus, tmp_path, capsys):
    code, _, err = run(capsys, "sweep", "--input", corpus / "corpus.jsonl", "--truth", tmp_path / "x.jsonl",
                       "--out-dir", tmp_path)
    assert code == 2 and "truth" in err


def test_bench_two_sizes(tmp_path, capsys):
    code, _, _ = run(capsys, "bench", "--sizes", "1000,3000", "--no-ml", "--out-dir", tmp_path)
    assert code == 0
    rows = json.loads((tmp_path / "bench.json").read_text())["rows"]
    assert [r["dataset_size"] for r in rows] == [1000, 3000]
    assert run(capsys, "bench", "--sizes", "3000,1000", "--no-ml", "--out-dir", tmp_path)[0] == 2


def _config(tmp_path, doc):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return path


def test_config_precedence(corpus, tmp_path, capsys):
    cfg = _config(tmp_path, {"matching": {"theta1": 0.9, "theta2": 0.8, "ml_enabled": False},
                             "paths": {"input": str(corpus / "corpus.jsonl"), "out_dir": str(tmp_path / "a")}})
    assert run(capsys, "dedupe", "--config", cfg)[0] == 0
    assert run(capsys, "dedupe", "--config", cfg, "--theta1", 1.5)[0] == 2


@pytest.mark.parametrize("doc", [{"bogus": 1}, {"matching": {"theta9": 1}}, {"corpus": {"noise": {"typo_rate": 2}}}, []])
def test_bad_config(tmp_path, capsys, doc):
    assert run(capsys, "gen", "--config", _config(tmp_path, doc), "--out-dir", tmp_path)[0] == 2


def test_unparseable_config(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text("{nope")
    assert run(capsys, "gen", "--config", path, "--out-dir", tmp_path)[0] == 2


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mdmerge.cli", "gen", "--out-dir", str(tmp_path), "--n-entities", "5"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "records=" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "mdmerge.cli", "frobnicate"], capture_output=True, text=True)
    assert proc.returncode == 2
