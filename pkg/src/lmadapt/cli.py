"""Pipeline entry point: clean -> stats -> train-tokenizer -> transplant ->
pretrain -> eval -> humeval-build/serve/report.

Exit codes: 0 success, 1 usage error, 2 data error. Every stage prints a
machine-readable JSON summary on its last stdout line. Set
LTX_DETERMINISTIC=1 to force single-worker operation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import bpe, corpus, fewshot, humeval, server, training, transplant
from .model import Checkpoint, GenerateConfig, ModelConfig


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _deterministic() -> bool:
    return os.environ.get("LTX_DETERMINISTIC", "") == "1"


def _write_json(path: Path, payload: dict) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, ensure_ascii=False, indent=2), encoding="utf-8")
    tmp.replace(path)


def _summary(payload: dict) -> None:
    print(json.dumps(payload, ensure_ascii=False), flush=True)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_clean(args) -> int:
    result = corpus.ingest(args.corpus, format=args.format)
    docs = result.documents
    if not docs:
        raise ValueError("no valid documents to clean")
    model = corpus.NgramModel.train((d.text for d in docs), order=args.order, alpha=args.alpha)
    ppls = []
    for d in docs:
        try:
            ppls.append(corpus.perplexity(d.text, model))
        except ValueError:
            ppls.append(float("inf"))
    finite = [p for p in ppls if p != float("inf")]
    if not finite:
        raise ValueError("no scorable documents in corpus")
    threshold = corpus.calibrate_threshold(finite, args.percentile)
    cfg = corpus.CleanerConfig(ppl_threshold=max(threshold, 1.0 + 1e-9), min_chars=args.min_chars,
                               model=model)
    workers = 1 if _deterministic() else args.workers
    decisions = corpus.clean_corpus(docs, cfg, workers=workers)
    out = _out_dir(args)
    kept = 0
    with open(out / "kept.jsonl", "w", encoding="utf-8") as kf, \
         open(out / "clean_report.jsonl", "w", encoding="utf-8") as rf:
        for doc, decision in decisions:
            rf.write(json.dumps({
                "id": doc.id,
                "decision": "keep" if decision.keep else "drop",
                "reason": decision.reason,
                "perplexity": decision.perplexity,
            }, ensure_ascii=False) + "\n")
            if decision.keep:
                kept += 1
                kf.write(json.dumps({
                    "id": doc.id, "subcorpus": doc.subcorpus,
                    "genre": doc.genre, "text": doc.text,
                }, ensure_ascii=False) + "\n")
    _summary({
        "stage": "clean", "documents": len(docs), "kept": kept,
        "dropped": len(docs) - kept, "malformed": result.n_malformed,
        "ppl_threshold": threshold, "out": str(out),
    })
    return 0


def cmd_stats(args) -> int:
    # accept either pre-aggregated rows ({"rows": [...]} in one JSON file)
    # or a document corpus in JSONL
    text = Path(args.corpus).read_text(encoding="utf-8")
    rows = None
    try:
        parsed = json.loads(text)
        if isinstance(parsed, dict) and "rows" in parsed:
            rows = parsed["rows"]
    except json.JSONDecodeError:
        pass
    if rows is not None:
        st = corpus.stats_from_rows(rows)
        n_malformed = 0
    else:
        result = corpus.ingest(args.corpus, format="jsonl")
        st = corpus.stats(result.documents)
        n_malformed = result.n_malformed
    print(st.render_table())
    if args.out:
        out = _out_dir(args)
        _write_json(out / "stats.json", st.to_dict())
        (out / "stats_table.txt").write_text(st.render_table() + "\n", encoding="utf-8")
    tok, doc = st.total
    _summary({"stage": "stats", "total_tokens": tok, "total_documents": doc,
              "malformed": n_malformed})
    return 0


def cmd_train_tokenizer(args) -> int:
    result = corpus.ingest(args.corpus, format=args.format)
    cfg = bpe.TokenizerTrainConfig(vocab_size=args.vocab_size)
    vocab = bpe.train_bpe(result.documents, cfg)
    vocab.save(args.out)
    fert = bpe.fertility(vocab, result.documents)
    _summary({
        "stage": "train-tokenizer", "vocab_size": len(vocab),
        "requested": args.vocab_size, "merges": len(vocab.merges),
        "fertility": fert, "out": str(args.out),
    })
    return 0


def cmd_transplant(args) -> int:
    src_tok = bpe.Vocab.load(args.src_tok)
    tgt_tok = bpe.Vocab.load(args.tgt_tok)
    ckpt = Checkpoint.load(args.ckpt)
    new_ckpt, report = transplant.transplant_model(ckpt, src_tok, tgt_tok)
    if args.out:
        new_ckpt.save(args.out)
    _summary({"stage": "transplant", **report.to_dict(),
              "out": str(args.out) if args.out else None})
    return 0


def cmd_pretrain(args) -> int:
    vocab = bpe.Vocab.load(args.tokenizer)
    result = corpus.ingest(args.corpus, format=args.format)
    tokens = training.pack_corpus(result.documents, vocab)
    if args.ckpt:
        ckpt = Checkpoint.load(args.ckpt)
    else:
        cfg = ModelConfig(
            vocab_size=len(vocab), n_layers=args.n_layers, n_heads=args.n_heads,
            d_model=args.d_model, max_seq_len=args.max_seq_len,
        )
        ckpt = Checkpoint.init(cfg, seed=args.seed)
    opt_cfg = training.OptimizerConfig(
        total_steps=args.steps, lr0=args.lr, weight_decay=args.weight_decay,
        warmup_steps=args.warmup,
    )
    train_cfg = training.TrainConfig(
        seq_len=args.seq_len, batch_size=args.batch_size, seed=args.seed,
        checkpoint_every=args.checkpoint_every, grad_clip=args.grad_clip,
    )
    out = _out_dir(args)
    res = training.train(ckpt, tokens, train_cfg, opt_cfg, out_dir=out)
    res.checkpoint.save(out / "final.ltb")
    training.write_loss_curve(res.history, out / "loss.csv")
    first = res.history[0][2] if res.history else None
    last = res.history[-1][2] if res.history else None
    _summary({
        "stage": "pretrain", "steps": res.checkpoint.step, "first_loss": first,
        "last_loss": last, "tokens": int(len(tokens)), "out": str(out),
    })
    return 0


def cmd_eval(args) -> int:
    vocab = bpe.Vocab.load(args.tokenizer)
    ckpt = Checkpoint.load(args.ckpt)
    task = fewshot.load_task(args.task)
    result = fewshot.evaluate(ckpt, vocab, task, k=args.k, seed=args.seed)
    print(fewshot.render_result_row(task.name, result))
    if args.out:
        out = _out_dir(args)
        _write_json(out / f"{task.name}_result.json", result.to_dict())
        fewshot.write_per_item_csv(result, out / f"{task.name}_items.csv")
    _summary({"stage": "eval", "task": task.name, **result.to_dict()})
    return 0


def cmd_humeval_build(args) -> int:
    result = corpus.ingest(args.corpus, format=args.format)
    sel_cfg = humeval.SelectionConfig(
        n_texts=args.n_texts, min_chars=args.min_chars, max_chars=args.max_chars
    )
    texts = humeval.select_texts(result.documents, sel_cfg, seed=args.seed)
    vocab = bpe.Vocab.load(args.tokenizer)
    ckpt = Checkpoint.load(args.ckpt)
    decode_cfg = GenerateConfig(
        mode="top_p", temperature=args.temperature, top_p=args.top_p, seed=args.seed
    )
    decode_meta = {"mode": "top_p", "temperature": args.temperature,
                   "top_p": args.top_p, "seed": args.seed}
    gen = humeval.model_generator(ckpt, vocab, decode_cfg)
    experiment = humeval.build_experiment(
        texts, gen, seed=args.seed, model_id=args.model_id, decode_meta=decode_meta
    )
    if args.evaluators:
        evaluators = [e.strip() for e in args.evaluators.split(",") if e.strip()]
        experiment.metadata["evaluators"] = humeval.assign_evaluators(evaluators, args.seed)
    experiment.save(args.out)
    mean_len = sum(len(t.text) for t in texts) / len(texts)
    _summary({
        "stage": "humeval-build", "items": len(experiment.items),
        "lists": {k: len(v) for k, v in experiment.lists.items()},
        "mean_text_chars": mean_len, "out": str(args.out),
    })
    return 0


def cmd_humeval_serve(args) -> int:
    experiment = humeval.Experiment.load(args.bundle)
    store = humeval.AnnotationStore(args.log)
    httpd = server.make_server(
        experiment, store, host=args.host, port=args.port, static_dir=args.static
    )
    _summary({
        "stage": "humeval-serve",
        "url": f"http://{httpd.server_address[0]}:{httpd.server_address[1]}",
        "items": len(experiment.items), "log": str(args.log),
    })
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
    return 0


def cmd_humeval_report(args) -> int:
    experiment = humeval.Experiment.load(args.bundle)
    store = humeval.AnnotationStore(args.log)
    report = humeval.aggregate(store.annotations(), experiment)
    print(report.render_table())
    if args.out:
        out = _out_dir(args)
        _write_json(out / "report.json", report.to_dict())
        report.to_csv(out / "report.csv")
        store.export_csv(out / "annotations.csv")
    _summary({"stage": "humeval-report", "annotations": len(store.annotations()),
              "conditions": report.conditions})
    return 0


def build_parser(config: dict | None = None) -> _Parser:
    config = config or {}
    parser = _Parser(prog="lmadapt", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with per-stage default flags")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def stage(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=fn)
        p.set_defaults(**{k.replace("-", "_"): v for k, v in config.get(name, {}).items()})
        return p

    p = stage("clean", cmd_clean, help="perplexity-filter a corpus")
    p.add_argument("corpus")
    p.add_argument("--format", default="jsonl", choices=["jsonl", "plain_dir"])
    p.add_argument("--out", default="clean_out")
    p.add_argument("--min-chars", type=int, default=25)
    p.add_argument("--percentile", type=float, default=95.0)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=1)

    p = stage("stats", cmd_stats, help="corpus statistics table")
    p.add_argument("corpus")
    p.add_argument("--out", default=None)

    p = stage("train-tokenizer", cmd_train_tokenizer, help="train a byte-level BPE tokenizer")
    p.add_argument("corpus")
    p.add_argument("--format", default="jsonl", choices=["jsonl", "plain_dir"])
    p.add_argument("--vocab-size", type=int, default=50257)
    p.add_argument("--out", default="tokenizer.json")

    p = stage("transplant", cmd_transplant, help="transplant embeddings to a new vocabulary")
    p.add_argument("--src-tok", required=True)
    p.add_argument("--tgt-tok", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", default=None)

    p = stage("pretrain", cmd_pretrain, help="run the continual-pretraining loop")
    p.add_argument("--corpus", required=True)
    p.add_argument("--format", default="jsonl", choices=["jsonl", "plain_dir"])
    p.add_argument("--tokenizer", required=True)
    p.add_argument("--ckpt", default=None, help="start checkpoint; omit to initialize fresh")
    p.add_argument("--out", default="train_out")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seq-len", type=int, default=64)
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--weight-decay", type=float, default=0.1)
    p.add_argument("--warmup", type=int, default=0)
    p.add_argument("--grad-clip", type=float, default=None)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-layers", type=int, default=2)
    p.add_argument("--n-heads", type=int, default=2)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--max-seq-len", type=int, default=128)

    p = stage("eval", cmd_eval, help="few-shot multiple-choice evaluation")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--tokenizer", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)

    p = stage("humeval-build", cmd_humeval_build, help="build the human-evaluation bundle")
    p.add_argument("--corpus", required=True, help="held-out corpus (never trained on)")
    p.add_argument("--format", default="jsonl", choices=["jsonl", "plain_dir"])
    p.add_argument("--ckpt", required=True)
    p.add_argument("--tokenizer", required=True)
    p.add_argument("--out", default="experiment.json")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-texts", type=int, default=60)
    p.add_argument("--min-chars", type=int, default=250)
    p.add_argument("--max-chars", type=int, default=1400)
    p.add_argument("--temperature", type=float, default=0.8)
    p.add_argument("--top-p", type=float, default=0.9)
    p.add_argument("--model-id", default="model")
    p.add_argument("--evaluators", default=None, help="comma-separated evaluator ids")

    p = stage("humeval-serve", cmd_humeval_serve, help="serve lists and collect annotations")
    p.add_argument("--bundle", required=True)
    p.add_argument("--log", default="annotations.jsonl")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--static", default=None, help="directory with the annotator frontend")

    p = stage("humeval-report", cmd_humeval_report, help="aggregate annotations into a report")
    p.add_argument("--bundle", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--out", default=None)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    pre_args, _ = pre.parse_known_args(argv)
    config = {}
    if pre_args.config:
        try:
            config = json.loads(Path(pre_args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            print(f"error: cannot read config: {err}", file=sys.stderr)
            return 2
    parser = build_parser(config)
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
