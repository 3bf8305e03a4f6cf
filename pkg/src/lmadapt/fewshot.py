"""Few-shot multiple-choice evaluation harness.

Prompt template: each exemplar renders as "<context> <gold choice>", the
exemplars and the query context are joined with newlines, and each candidate
choice is scored as the continuation " " + choice (summed token
log-likelihood; the prompt itself is never scored).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .bpe import Vocab
from .model import Checkpoint, forward, log_softmax


@dataclass(frozen=True)
class TaskItem:
    context: str
    choices: tuple[str, ...]
    gold: int

    def __post_init__(self):
        object.__setattr__(self, "choices", tuple(self.choices))
        if len(self.choices) < 2:
            raise ValueError("an item needs at least two choices")
        if not 0 <= self.gold < len(self.choices):
            raise ValueError("gold index outside choices")


@dataclass
class Task:
    name: str
    items: list[TaskItem]
    fewshot_pool: list[TaskItem] = field(default_factory=list)

    def __post_init__(self):
        overlap = set(self.items) & set(self.fewshot_pool)
        if overlap:
            raise ValueError(f"{len(overlap)} items appear in both the task and the pool")


@dataclass
class ItemResult:
    index: int
    scores: list[float]
    norm_scores: list[float]
    pred: int
    gold: int
    correct: bool


@dataclass
class EvalResult:
    accuracy: float
    stderr: float
    n: int
    k: int
    seed: int
    per_item: list[ItemResult]

    def format(self) -> str:
        return f"{self.accuracy:.3f}±{self.stderr:.3f}"

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "stderr": self.stderr,
            "n": self.n,
            "k": self.k,
            "seed": self.seed,
        }


def binomial_stderr(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n)


def build_prompt(item: TaskItem, k: int = 5, pool: Sequence[TaskItem] = (), seed: int = 0) -> str:
    """k solved exemplars followed by the bare query context. Exemplars are
    drawn without replacement, deterministically per seed."""
    if k == 0:
        return item.context
    if len(pool) < k:
        raise ValueError(f"few-shot pool has {len(pool)} items, need {k}")
    idx = np.random.default_rng(seed).choice(len(pool), size=k, replace=False)
    lines = [f"{pool[i].context} {pool[i].choices[pool[i].gold]}" for i in idx]
    lines.append(item.context)
    return "\n".join(lines)


def score_choice(ckpt: Checkpoint, vocab: Vocab, prompt: str, choice: str) -> float:
    """Sum of log p(token | everything before it) over the choice tokens.

    An empty choice scores 0. A prompt that tokenizes to nothing is
    replaced by the end-of-text token so the first choice token is
    conditioned on something.
    """
    choice_ids = vocab.encode(choice)
    if not choice_ids:
        return 0.0
    prompt_ids = vocab.encode(prompt)
    if not prompt_ids:
        prompt_ids = [vocab.eot_id]
    ids = prompt_ids + choice_ids
    if len(ids) > ckpt.config.max_seq_len:
        raise ValueError(
            f"prompt+choice is {len(ids)} tokens; context window is {ckpt.config.max_seq_len}"
        )
    logits = forward(ckpt, np.asarray(ids[:-1], dtype=np.int64))
    logp = log_softmax(logits.astype(np.float64))
    start = len(prompt_ids) - 1
    total = 0.0
    for offset, tok in enumerate(choice_ids):
        total += float(logp[start + offset, tok])
    return total


def evaluate(
    ckpt: Checkpoint, vocab: Vocab, task: Task, k: int = 5, seed: int = 0
) -> EvalResult:
    """Accuracy over argmax-of-log-likelihood predictions; ties go to the
    lowest choice index. stderr is the binomial sqrt(p(1-p)/n)."""
    if not task.items:
        raise ValueError(f"task {task.name!r} has no items")
    per_item = []
    n_correct = 0
    for index, item in enumerate(task.items):
        prompt = build_prompt(item, k=k, pool=task.fewshot_pool, seed=seed)
        scores = []
        norm_scores = []
        for choice in item.choices:
            s = score_choice(ckpt, vocab, prompt, " " + choice)
            scores.append(s)
            norm_scores.append(s / max(1, len(choice.encode("utf-8"))))
        best = max(scores)
        pred = scores.index(best)
        correct = pred == item.gold
        n_correct += correct
        per_item.append(
            ItemResult(index=index, scores=scores, norm_scores=norm_scores,
                       pred=pred, gold=item.gold, correct=correct)
        )
    n = len(task.items)
    acc = n_correct / n
    return EvalResult(
        accuracy=acc, stderr=binomial_stderr(acc, n), n=n, k=k, seed=seed, per_item=per_item
    )


def render_result_row(name: str, result: EvalResult) -> str:
    return f"{name:<20} {result.format()}"


def load_task(path: str | Path) -> Task:
    """Task header JSON: {"name", "items": <jsonl path>, "fewshot_pool": <jsonl path>},
    paths relative to the header file."""
    path = Path(path)
    header = json.loads(path.read_text(encoding="utf-8"))
    items = _load_items(path.parent / header["items"])
    pool = _load_items(path.parent / header["fewshot_pool"]) if header.get("fewshot_pool") else []
    return Task(name=header["name"], items=items, fewshot_pool=pool)


def _load_items(path: Path) -> list[TaskItem]:
    items = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            items.append(TaskItem(rec["context"], tuple(rec["choices"]), int(rec["gold"])))
    return items


def write_per_item_csv(result: EvalResult, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item", "gold", "pred", "correct", "scores", "norm_scores"])
        for r in result.per_item:
            writer.writerow([
                r.index, r.gold, r.pred, int(r.correct),
                "|".join(f"{s:.6f}" for s in r.scores),
                "|".join(f"{s:.6f}" for s in r.norm_scores),
            ])
