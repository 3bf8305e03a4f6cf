"""Byte-level BPE in action: train on one language, measure how badly that
tokenizer fits another language (fertility), then retrain for the target.

Run: python demos/02_tokenizer.py
"""

import numpy as np

from lmadapt.bpe import TokenizerTrainConfig, train_bpe, fertility

rng = np.random.default_rng(1)

SOURCE_WORDS = ["palabra", "tiempo", "ciudad", "historia", "camino", "montana"]
TARGET_WORDS = ["verba", "tempo", "cidade", "historia", "camino", "montana",
                "xente", "chuvia", "praia"]

source_corpus = [" ".join(rng.choice(SOURCE_WORDS, size=10)) for _ in range(200)]
target_corpus = [" ".join(rng.choice(TARGET_WORDS, size=10)) for _ in range(200)]

budget = TokenizerTrainConfig(vocab_size=256 + 1 + 60)
source_tok = train_bpe(source_corpus, budget)
target_tok = train_bpe(target_corpus, budget)

print(f"source tokenizer: {len(source_tok)} entries, {len(source_tok.merges)} merges")
print("first merges:", [(a + b).decode("latin-1") for a, b in source_tok.merges[:8]])

sample = "cidade verba chuvia tempo"
print(f"\nencoding {sample!r}:")
for name, tok in [("source", source_tok), ("target", target_tok)]:
    ids = tok.encode(sample)
    pieces = [tok.token_bytes(i).decode("latin-1") for i in ids]
    print(f"  {name}-trained: {len(ids):2d} tokens {pieces}")
    assert tok.decode(ids) == sample  # byte-level round-trip always holds

print("\nfertility on target-language text (tokens per word, lower = better fit):")
print(f"  source-trained tokenizer: {fertility(source_tok, target_corpus):.2f}")
print(f"  target-trained tokenizer: {fertility(target_tok, target_corpus):.2f}")
