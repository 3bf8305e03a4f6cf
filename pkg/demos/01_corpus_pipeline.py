"""Corpus pipeline walkthrough: ingest raw documents, filter boilerplate by
perplexity, print the statistics table, and carve out a held-out pool.

Run: python demos/01_corpus_pipeline.py
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from lmadapt.corpus import (
    CleanerConfig,
    NgramModel,
    calibrate_threshold,
    clean_corpus,
    ingest,
    perplexity,
    split,
    stats,
)

rng = np.random.default_rng(0)
WORDS = ["casa", "camino", "montana", "rio", "cidade", "tempo", "historia", "xente"]

# Write a small JSONL corpus: clean prose plus a few noisy records.
workdir = Path(tempfile.mkdtemp(prefix="lmadapt_demo_"))
corpus_path = workdir / "corpus.jsonl"
with open(corpus_path, "w", encoding="utf-8") as fh:
    for i in range(40):
        sentences = [
            " ".join(rng.choice(WORDS, size=8)).capitalize() + "."
            for _ in range(4)
        ]
        fh.write(json.dumps({
            "id": f"doc{i:03d}",
            "subcorpus": "transfer" if i % 3 == 0 else "public",
            "genre": ["press", "web", "books"][i % 3],
            "text": " ".join(sentences),
        }) + "\n")
    # boilerplate-like noise: rare characters the n-gram model never saw
    for i in range(5):
        fh.write(json.dumps({
            "id": f"noise{i}",
            "subcorpus": "public",
            "genre": "web",
            "text": " ".join("qzxkwj"[j % 6] * 7 for j in range(20)),
        }) + "\n")
    fh.write("{malformed line\n")

result = ingest(corpus_path, format="jsonl")
print(f"ingested {len(result.documents)} documents ({result.n_malformed} malformed skipped)")

# Fit the cleaning model on the corpus itself and calibrate the threshold
# at the 95th percentile of document perplexities.
model = NgramModel.train((d.text for d in result.documents), order=2, alpha=1.0)
ppls = [perplexity(d.text, model) for d in result.documents]
threshold = calibrate_threshold(ppls, 95.0)
print(f"perplexity threshold (95th percentile): {threshold:.2f}")

cfg = CleanerConfig(ppl_threshold=threshold, min_chars=20, model=model)
decisions = clean_corpus(result.documents, cfg)
kept = [doc for doc, decision in decisions if decision.keep]
for doc, decision in decisions:
    if not decision.keep:
        print(f"  dropped {doc.id}: {decision.reason}")

print(f"\nkept {len(kept)} of {len(result.documents)} documents")
print("\ncorpus statistics:")
print(stats(kept).render_table())

train_docs, heldout_docs = split(kept, heldout_fraction=0.1, seed=7)
print(f"\nsplit: {len(train_docs)} train / {len(heldout_docs)} held out "
      "(held-out texts are never trained on)")
