import json

import numpy as np
import pytest

from lmadapt.cli import main
from lmadapt.model import Checkpoint, ModelConfig

GENRE_ROWS_FIXTURE = {
    "rows": [
        {"subcorpus": "transfer", "genre": "Books", "tokens": 7255784, "documents": 104},
        {"subcorpus": "transfer", "genre": "Research articles", "tokens": 2665351, "documents": 664},
        {"subcorpus": "transfer", "genre": "Press", "tokens": 124253084, "documents": 224419},
        {"subcorpus": "transfer", "genre": "Governmental", "tokens": 245897880, "documents": 654505},
        {"subcorpus": "transfer", "genre": "Web contents", "tokens": 15946686, "documents": 44165},
        {"subcorpus": "transfer", "genre": "Encyclopedic", "tokens": 4799214, "documents": 47396},
        {"subcorpus": "public", "genre": "Press and blog", "tokens": 153497883, "documents": 665265},
        {"subcorpus": "public", "genre": "Encyclopedic", "tokens": 57164848, "documents": 184628},
        {"subcorpus": "public", "genre": "Web crawls", "tokens": 1384015664, "documents": 3366449},
        {"subcorpus": "public", "genre": "Translation corpora", "tokens": 133726004, "documents": 4745799},
    ]
}


def write_corpus(path, n_docs=30, seed=0):
    rng = np.random.default_rng(seed)
    words = ["casa", "rio", "monte", "vento", "luz", "terra", "mar", "lua"]
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(n_docs):
            sents = []
            for _ in range(4):
                sents.append(" ".join(rng.choice(words, size=8)).capitalize() + ".")
            fh.write(json.dumps({
                "id": f"d{i:03d}",
                "subcorpus": "public" if i % 2 else "transfer",
                "genre": ["press", "web"][i % 2],
                "text": " ".join(sents),
            }) + "\n")


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "lmadapt" in capsys.readouterr().out

def test_unknown_subcommand_exits_one(capsys):
    assert main(["frobnicate"]) == 1

def test_no_subcommand_exits_one():
    assert main([]) == 1

def test_missing_file_is_data_error(tmp_path):
    assert main(["stats", str(tmp_path / "missing.jsonl")]) == 2

def test_stats_rows_fixture_prints_totals(tmp_path, capsys):
    fixture = tmp_path / "rows.json"
    fixture.write_text(json.dumps(GENRE_ROWS_FIXTURE))
    assert main(["stats", str(fixture)]) == 0
    out = capsys.readouterr().out
    assert "2,129,222,398" in out
    assert "400,817,999" in out
    assert "1,728,404,399" in out
    summary = json.loads(out.strip().splitlines()[-1])
    assert summary["total_tokens"] == 2129222398

def test_stats_counts_documents(tmp_path, capsys):
    corpus = tmp_path / "c.jsonl"
    write_corpus(corpus, n_docs=10)
    assert main(["stats", str(corpus)]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["total_documents"] == 10

def test_transplant_identity_reports_zero_new(tmp_path, capsys):
    corpus = tmp_path / "c.jsonl"
    write_corpus(corpus)
    tok = tmp_path / "tok.json"
    assert main(["train-tokenizer", str(corpus), "--vocab-size", "280",
                 "--out", str(tok)]) == 0
    vocab_size = json.loads(capsys.readouterr().out.strip().splitlines()[-1])["vocab_size"]
    cfg = ModelConfig(vocab_size=vocab_size, n_layers=1, n_heads=2, d_model=8,
                      max_seq_len=32)
    ckpt_path = tmp_path / "m.ltb"
    Checkpoint.init(cfg, seed=0).save(ckpt_path)
    assert main(["transplant", "--src-tok", str(tok), "--tgt-tok", str(tok),
                 "--ckpt", str(ckpt_path), "--out", str(tmp_path / "out.ltb")]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["n_new"] == 0
    assert summary["n_shared"] == vocab_size

def test_clean_writes_reports(tmp_path, capsys):
    corpus = tmp_path / "c.jsonl"
    write_corpus(corpus, n_docs=25)
    out = tmp_path / "cleaned"
    assert main(["clean", str(corpus), "--out", str(out), "--min-chars", "5"]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["documents"] == 25
    report_lines = (out / "clean_report.jsonl").read_text().strip().splitlines()
    assert len(report_lines) == 25
    rec = json.loads(report_lines[0])
    assert set(rec) == {"id", "decision", "reason", "perplexity"}
    kept = (out / "kept.jsonl").read_text().strip().splitlines()
    assert len(kept) == summary["kept"]

def test_clean_idempotent_byte_identical(tmp_path):
    corpus = tmp_path / "c.jsonl"
    write_corpus(corpus, n_docs=12)
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["clean", str(corpus), "--out", str(out1)]) == 0
    assert main(["clean", str(corpus), "--out", str(out2)]) == 0
    assert (out1 / "kept.jsonl").read_bytes() == (out2 / "kept.jsonl").read_bytes()
    assert (out1 / "clean_report.jsonl").read_bytes() == (out2 / "clean_report.jsonl").read_bytes()


@pytest.mark.slow
def test_full_pipeline_smoke(tmp_path, capsys):
    corpus = tmp_path / "c.jsonl"
    write_corpus(corpus, n_docs=40, seed=7)
    tok = tmp_path / "tok.json"
    assert main(["train-tokenizer", str(corpus), "--vocab-size", "280",
                 "--out", str(tok)]) == 0

    train_dir = tmp_path / "run"
    assert main([
        "pretrain", "--corpus", str(corpus), "--tokenizer", str(tok),
        "--out", str(train_dir), "--steps", "3", "--batch-size", "2",
        "--seq-len", "16", "--d-model", "16", "--n-layers", "1",
        "--n-heads", "2", "--max-seq-len", "32",
    ]) == 0
    assert (train_dir / "final.ltb").exists()
    loss_lines = (train_dir / "loss.csv").read_text().strip().splitlines()
    assert loss_lines[0] == "step,lr,loss"
    assert len(loss_lines) == 4

    task_dir = tmp_path / "task"
    task_dir.mkdir()
    items = [{"context": f"q {i}", "choices": ["aa", "bb"], "gold": i % 2}
             for i in range(4)]
    pool = [{"context": f"p {i}", "choices": ["aa", "bb"], "gold": 0} for i in range(6)]
    (task_dir / "items.jsonl").write_text("\n".join(json.dumps(r) for r in items))
    (task_dir / "pool.jsonl").write_text("\n".join(json.dumps(r) for r in pool))
    (task_dir / "task.json").write_text(json.dumps(
        {"name": "toy", "items": "items.jsonl", "fewshot_pool": "pool.jsonl"}))
    assert main(["eval", "--ckpt", str(train_dir / "final.ltb"), "--tokenizer", str(tok),
                 "--task", str(task_dir / "task.json"), "--k", "2",
                 "--out", str(tmp_path / "evalout")]) == 0
    out = capsys.readouterr().out
    summary = json.loads(out.strip().splitlines()[-1])
    assert 0.0 <= summary["accuracy"] <= 1.0
    assert "±" in out

    bundle = tmp_path / "exp.json"
    assert main([
        "humeval-build", "--corpus", str(corpus), "--ckpt", str(train_dir / "final.ltb"),
        "--tokenizer", str(tok), "--out", str(bundle), "--n-texts", "8",
        "--min-chars", "50", "--max-chars", "2000",
        "--evaluators", "e1,e2,e3,e4,e5,e6",
    ]) == 0
    data = json.loads(bundle.read_text())
    assert len(data["items"]) == 16

    log = tmp_path / "ann.jsonl"
    from lmadapt.humeval import CATEGORIES, Annotation, AnnotationStore
    store = AnnotationStore(log)
    store.add(Annotation(data["items"][0]["item_id"], "e1",
                         {c: c == "form" for c in CATEGORIES}))
    assert main(["humeval-report", "--bundle", str(bundle), "--log", str(log),
                 "--out", str(tmp_path / "rep")]) == 0
    report = json.loads((tmp_path / "rep" / "report.json").read_text())
    assert "judgment_level" in report
