"""Embedding transplant: align two vocabularies, keep the rows of shared
tokens, fill every new row with the mean of all source rows.

Run: python demos/03_transplant.py
"""

import numpy as np

from lmadapt.bpe import TokenizerTrainConfig, train_bpe
from lmadapt.model import Checkpoint, ModelConfig
from lmadapt.transplant import NEW, align_vocabs, transplant_embeddings, transplant_model

rng = np.random.default_rng(2)

source_corpus = ["palabra tiempo ciudad historia camino " * 20]
target_corpus = ["verba tempo cidade historia camino xente chuvia " * 20]
budget = TokenizerTrainConfig(vocab_size=256 + 1 + 40)
src_tok = train_bpe(source_corpus, budget)
tgt_tok = train_bpe(target_corpus, budget)

align = align_vocabs(src_tok, tgt_tok)
print(f"source vocab {align.source_vocab_size}, target vocab {align.target_vocab_size}")
print(f"shared tokens: {align.n_shared} (the 256 byte tokens are always shared)")
print(f"new tokens:    {align.n_new}")

# Matrix-level view: shared rows copy, new rows take the overall mean.
emb = rng.standard_normal((len(src_tok), 8)).astype(np.float32)
out = transplant_embeddings(emb, align)
shared = align.mapping != NEW
print("\nshared rows bit-identical:",
      bool((out[shared] == emb[align.mapping[shared]]).all()))
new_rows = out[~shared]
print("all new rows equal the mean vector:",
      bool((new_rows == new_rows[0]).all()) if len(new_rows) else "n/a")
print("mean vector:", np.round(new_rows[0], 4) if len(new_rows) else "n/a")

# Checkpoint-level view: embeddings replaced, everything else untouched,
# optimizer state reset.
cfg = ModelConfig(vocab_size=len(src_tok), n_layers=2, n_heads=2, d_model=16,
                  max_seq_len=64)
src_ckpt = Checkpoint.init(cfg, seed=0)
new_ckpt, report = transplant_model(src_ckpt, src_tok, tgt_tok)
print("\ntransplant report:", report.to_dict())
unchanged = all(
    new_ckpt.params[k].tobytes() == v.tobytes()
    for k, v in src_ckpt.params.items() if k != "tok_emb"
)
print("non-embedding parameters bit-identical:", unchanged)
print("optimizer state reset:", new_ckpt.opt_m == {} and new_ckpt.step == 0)
