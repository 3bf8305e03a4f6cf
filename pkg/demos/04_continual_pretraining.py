"""The full adaptation recipe at desk scale: pretrain a toy model on language
A, swap in a language-B tokenizer via embedding transplant, continue
pretraining on B, and watch held-out perplexity drop.

Run: python demos/04_continual_pretraining.py   (about half a minute on CPU)
"""

import numpy as np

from lmadapt.bpe import TokenizerTrainConfig, train_bpe
from lmadapt.model import Checkpoint, ModelConfig
from lmadapt.training import (
    OptimizerConfig,
    TrainConfig,
    evaluate_perplexity,
    pack_corpus,
    train,
)
from lmadapt.transplant import transplant_model


def toy_language(words, seed, n=80):
    rng = np.random.default_rng(seed)
    return [" ".join(rng.choice(words, size=int(rng.integers(6, 12)))) for _ in range(n)]


lang_a = toy_language(["bala", "duna", "kilo", "mano", "rusa", "tema"], seed=1)
lang_b = toy_language(["pyl", "gork", "zhum", "vret", "skif", "blon"], seed=2)
held_b = toy_language(["pyl", "gork", "zhum", "vret", "skif", "blon"], seed=3, n=20)

tok_a = train_bpe(lang_a, TokenizerTrainConfig(vocab_size=256 + 1 + 24))
tok_b = train_bpe(lang_b, TokenizerTrainConfig(vocab_size=256 + 1 + 24))

print("stage 1: pretrain the source model on language A")
cfg = ModelConfig(vocab_size=len(tok_a), n_layers=2, n_heads=2, d_model=32,
                  max_seq_len=64)
source = Checkpoint.init(cfg, seed=0)
res_a = train(source, pack_corpus(lang_a, tok_a),
              TrainConfig(seq_len=32, batch_size=4, seed=0),
              OptimizerConfig(total_steps=150, lr0=3e-3))
print(f"  loss {res_a.history[0][2]:.3f} -> {res_a.history[-1][2]:.3f}")

print("stage 2: transplant to the language-B tokenizer")
adapted, report = transplant_model(source, tok_a, tok_b)
print(f"  shared {report.n_shared}, new {report.n_new}")

held_tokens = pack_corpus(held_b, tok_b)
ppl_before = evaluate_perplexity(adapted, held_tokens, seq_len=32)
print(f"  held-out B perplexity before training: {ppl_before:.2f}")

print("stage 3: continual pretraining on language B (200 steps)")
res_b = train(adapted, pack_corpus(lang_b, tok_b),
              TrainConfig(seq_len=32, batch_size=4, seed=0),
              OptimizerConfig(total_steps=200, lr0=3e-3))
first = np.mean([h[2] for h in res_b.history[:10]])
last = np.mean([h[2] for h in res_b.history[-10:]])
print(f"  smoothed loss {first:.3f} -> {last:.3f} "
      f"({100 * (1 - last / first):.0f}% lower)")

ppl_after = evaluate_perplexity(res_b.checkpoint, held_tokens, seq_len=32)
print(f"  held-out B perplexity after training:  {ppl_after:.2f}")
assert ppl_after < ppl_before
