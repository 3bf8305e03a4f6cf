"""Few-shot multiple-choice evaluation: build a toy task, score each choice
by summed log-likelihood, and print a results row in reporting style.

Run: python demos/05_fewshot_eval.py
"""

import numpy as np

from lmadapt.bpe import TokenizerTrainConfig, train_bpe
from lmadapt.fewshot import Task, TaskItem, build_prompt, evaluate, render_result_row
from lmadapt.model import Checkpoint, ModelConfig
from lmadapt.training import OptimizerConfig, TrainConfig, pack_corpus, train

rng = np.random.default_rng(3)

# A toy "language" where the word after "cor" is usually "azul".
sentences = []
for _ in range(120):
    color = rng.choice(["azul", "azul", "azul", "verde"])
    sentences.append(f"o ceo ten cor {color} hoxe")
vocab = train_bpe(sentences, TokenizerTrainConfig(vocab_size=256 + 1 + 24))

cfg = ModelConfig(vocab_size=len(vocab), n_layers=2, n_heads=2, d_model=32,
                  max_seq_len=128)
ckpt = Checkpoint.init(cfg, seed=0)
train(ckpt, pack_corpus(sentences, vocab),
      TrainConfig(seq_len=32, batch_size=4, seed=0),
      OptimizerConfig(total_steps=150, lr0=3e-3))

items = [TaskItem("o ceo ten cor", ("azul", "verde"), 0) for _ in range(8)]
pool = [TaskItem(f"exemplo {i} o ceo ten cor", ("azul", "verde"), 0) for i in range(6)]
task = Task(name="color-choice", items=items, fewshot_pool=pool)

print("5-shot prompt for the first item:")
print("-" * 50)
print(build_prompt(items[0], k=5, pool=pool, seed=0))
print("-" * 50)

for k in (0, 5):
    result = evaluate(ckpt, vocab, task, k=k, seed=0)
    print(f"k={k}: {render_result_row(task.name, result)}   (n={result.n})")

result = evaluate(ckpt, vocab, task, k=5, seed=0)
print("\nper-item log (choice log-likelihoods):")
for r in result.per_item[:3]:
    scores = ", ".join(f"{s:.2f}" for s in r.scores)
    print(f"  item {r.index}: scores [{scores}] pred={r.pred} gold={r.gold}")
