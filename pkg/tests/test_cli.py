import csv
import json

import numpy as np
import pytest

from storysalad.cli import main, read_config_file
from storysalad.corpus import write_corpus
from storysalad.embedding import write_embeddings
from storysalad.neural.checkpoint import read_header
from storysalad.synthetic import separable_corpus

TINY_TRAIN = ["--embed-dim", "4", "--hidden", "4", "--filter-widths", "1,2", "--filters", "2",
              "--max-epochs", "1", "--lr", "1e-2", "--seed", "0"]


@pytest.fixture
def corpus(tmp_path):
    docs, table = separable_corpus(12, seed=0, dim=4)
    write_corpus(docs, tmp_path / "corpus.jsonl")
    write_embeddings(table, tmp_path / "vec.txt")
    return tmp_path


def run(*args):
    return main([str(a) for a in args])


def generate(d, name="s.jsonl", n=10, seed=7, extra=()):
    return run("generate", "--corpus", d / "corpus.jsonl", "--mode", "group_key", "--n", n,
               "--seed", seed, "--out", d / name, *extra)


def test_generate_is_byte_identical(corpus):
    assert generate(corpus, "a.jsonl") == 0
    assert generate(corpus, "b.jsonl", extra=("--jobs", "2")) == 0
    assert (corpus / "a.jsonl").read_bytes() == (corpus / "b.jsonl").read_bytes()
    manifest = json.loads((corpus / "a.jsonl.manifest.json").read_text())
    assert manifest["command"] == "generate" and manifest["seeds"]["seed"] == 7
    assert len((corpus / "a.jsonl").read_text().splitlines()) == 10


def test_generate_input_errors(corpus, caplog):
    assert run("generate", "--corpus", corpus / "missing.jsonl", "--n", 1, "--seed", 0,
               "--out", corpus / "x.jsonl") == 2
    assert run("generate", "--corpus", corpus / "corpus.jsonl", "--n", 1,
               "--out", corpus / "x.jsonl") == 2
    assert "explicit --seed" in caplog.text


def test_category_filter_flag(tmp_path):
    from storysalad.corpus import Document
    docs = [Document(f"d{i}", key, [[[f"w{i}"]] * 8]) for i, key in
            enumerate(["War of 1812", "War of 1812", "conflict zone", "conflict zone", "sports", "sports"])]
    write_corpus(docs, tmp_path / "corpus.jsonl")
    out = tmp_path / "s.jsonl"
    assert run("generate", "--corpus", tmp_path / "corpus.jsonl", "--mode", "category_filter",
               "--filter", "war,conflict", "--n", 6, "--seed", 1, "--out", out) == 0
    for line in out.read_text().splitlines():
        salad = json.loads(line)
        assert {salad["source_a"], salad["source_b"]} in ({"d0", "d1"}, {"d2", "d3"})


def test_config_file_and_flag_precedence(corpus):
    cfg = corpus / "run.cfg"
    cfg.write_text("# defaults\nmode = group_key\nn = 3\nseed = 7\n")
    assert read_config_file(cfg) == {"mode": "group_key", "n": "3", "seed": "7"}
    out = corpus / "c.jsonl"
    assert run("generate", "--config", cfg, "--corpus", corpus / "corpus.jsonl", "--n", 5,
               "--out", out) == 0
    assert len(out.read_text().splitlines()) == 5
    cfg.write_text("bogus = 1\n")
    assert run("generate", "--config", cfg, "--corpus", corpus / "corpus.jsonl", "--n", 5,
               "--seed", 0, "--out", out) == 2


def test_hard_select(corpus):
    generate(corpus)
    out = corpus / "hard.jsonl"
    assert run("hard-select", "--salads", corpus / "s.jsonl", "--embeddings", corpus / "vec.txt",
               "--k", 4, "--out", out) == 0
    rows = [json.loads(x) for x in out.read_text().splitlines()]
    assert len(rows) == 4 and [r["tsim"] for r in rows] == sorted((r["tsim"] for r in rows), reverse=True)
    assert run("hard-select", "--salads", corpus / "s.jsonl", "--embeddings", corpus / "vec.txt",
               "--k", 0, "--out", out) == 0
    assert out.read_text() == ""


def test_cluster_eval_analyze(corpus):
    generate(corpus)
    pred = corpus / "pred.jsonl"
    assert run("cluster", "--salads", corpus / "s.jsonl", "--distance", "cosine",
               "--embeddings", corpus / "vec.txt", "--seed", 0, "--out", pred, "--jobs", 2) == 0
    rows = [json.loads(x) for x in pred.read_text().splitlines()]
    assert len(rows) == 10 and all(r["distance_source"] == "cosine" for r in rows)
    assert run("cluster", "--salads", corpus / "s.jsonl", "--distance", "learned",
               "--seed", 0, "--out", pred) == 2
    report = corpus / "eval.csv"
    assert run("eval", "--salads", corpus / "s.jsonl", "--predictions", pred,
               "--embeddings", corpus / "vec.txt", "--out", report) == 0
    with open(report) as fh:
        table = list(csv.DictReader(fh))
    assert list(table[0]) == ["salad_id", "n_items", "tsim", "ca_model", "ca_unif"]
    summary = json.loads((corpus / "eval.csv.summary.json").read_text())
    assert summary["mean_ca"] == pytest.approx(1.0) and summary["n"] == 10
    assert run("analyze", "--run-a", pred, "--run-b", pred, "--out", corpus / "mov.json") == 0
    mov = json.loads((corpus / "mov.json").read_text())["movement"]
    assert mov[2] == [0.0, 0.0, 1.0]


def test_eval_unif_predictions(corpus):
    generate(corpus)
    salads = [json.loads(x) for x in (corpus / "s.jsonl").read_text().splitlines()]
    pred = corpus / "unif.jsonl"
    pred.write_text("".join(json.dumps({"salad_id": s["id"], "assignment": [0] * len(s["items"]),
                                        "distance_source": "unif"}) + "\n" for s in salads))
    assert run("eval", "--salads", corpus / "s.jsonl", "--predictions", pred,
               "--embeddings", corpus / "vec.txt", "--out", corpus / "e.csv") == 0
    summary = json.loads((corpus / "e.csv.summary.json").read_text())
    majority = np.mean([max(sum(it["gold"] == "A" for it in s["items"]),
                            sum(it["gold"] == "B" for it in s["items"])) / len(s["items"]) for s in salads])
    assert summary["mean_ca"] == pytest.approx(majority)


def test_train_variants_and_heatmap(corpus):
    generate(corpus)
    variants = {}
    for flags in ([], ["--attention"], ["--context"], ["--attention", "--context"]):
        ck = corpus / f"m{len(variants)}.npz"
        assert run("train", "--salads", corpus / "s.jsonl", "--out", ck, *TINY_TRAIN, *flags) == 0
        variants[read_header(ck)["variant"]] = ck
    assert set(variants) == {"BILSTM", "BILSTM-MT", "BILSTM-CTX", "BILSTM-MT-CTX"}
    hist = (corpus / "m0.npz.history.csv").read_text()
    assert run("train", "--salads", corpus / "s.jsonl", "--out", corpus / "again.npz", *TINY_TRAIN) == 0
    assert (corpus / "again.npz.history.csv").read_text() == hist
    png = corpus / "att.png"
    assert run("heatmap", "--salads", corpus / "s.jsonl", "--salad-id", "salad-000000", "--s1", 0,
               "--s2", 1, "--checkpoint", variants["BILSTM-MT"], "--out", png) == 0
    exported = json.loads((corpus / "att.png.json").read_text())
    assert abs(sum(exported["alpha_1_to_2"][0]) - 1) < 1e-6
    assert run("heatmap", "--salads", corpus / "s.jsonl", "--salad-id", "salad-000000", "--s1", 0,
               "--s2", 1, "--checkpoint", variants["BILSTM"], "--out", png) == 2
    pred = corpus / "learned.jsonl"
    assert run("cluster", "--salads", corpus / "s.jsonl", "--distance", "learned",
               "--checkpoint", variants["BILSTM-MT-CTX"], "--seed", 0, "--out", pred) == 0


def test_train_events_with_pretraining(tmp_path):
    salads = tmp_path / "ev.jsonl"
    assert run("synth", "--kind", "event", "--n", 8, "--seed", 0, "--out", salads) == 0
    ck = tmp_path / "ev.npz"
    assert run("train", "--salads", salads, "--out", ck, "--events", "--pretrain",
               "--pretrain-steps", 5, "--event-word-dim", 4, *TINY_TRAIN) == 0
    assert read_header(ck)["variant"] == "FFNN-BILSTM-PRETRAIN"
    assert run("train", "--salads", salads, "--out", ck, "--pretrain", *TINY_TRAIN) == 2


def test_numerical_failure_exit_code(corpus, monkeypatch):
    from storysalad.neural import model as model_mod
    generate(corpus)

    def broken(self, batch, labels, rng=None):
        return float("nan"), {k: np.zeros_like(v) for k, v in self.params.items()}

    monkeypatch.setattr(model_mod.PairClassifier, "loss_and_grads", broken)
    assert run("train", "--salads", corpus / "s.jsonl", "--out", corpus / "m.npz", *TINY_TRAIN) == 3
