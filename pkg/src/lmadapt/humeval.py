"""Counterbalanced human evaluation of model continuations.

Builds the experiment (text selection, four split strategies, authentic vs
synthetic continuation pairs, two Latin-square lists), stores blinded
annotations, and aggregates six binary error categories into a report.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
import threading
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

from .bpe import Vocab
from .corpus import Document
from .model import Checkpoint, GenerateConfig, generate

CATEGORIES = ("form", "content", "register", "repetitive", "inappropriate", "factual")

AUTHENTIC = "authentic"
SYNTHETIC = "synthetic"

# sentence terminator, optionally followed by closing quotes/brackets
_SENT_END = re.compile(r"[.!?…]+[\"'”’»)\]]*")
_WORD = re.compile(r"\S+")


class SplitStrategy(str, Enum):
    BEGIN_MID = "begin_mid_sentence"
    BEGIN_END = "begin_end_sentence"
    MIDDLE_MID = "middle_mid_sentence"
    MIDDLE_END = "middle_end_sentence"


STRATEGIES = tuple(SplitStrategy)


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """(start, end) spans of sentences; a trailing fragment without a
    terminator counts as a final sentence."""
    spans = []
    start = 0
    for m in _SENT_END.finditer(text):
        spans.append((start, m.end()))
        start = m.end()
    if text[start:].strip():
        spans.append((start, len(text)))
    return spans


def _word_midpoint(text: str, span: tuple[int, int]) -> int:
    words = list(_WORD.finditer(text, span[0], span[1]))
    if not words:
        raise ValueError("cannot mid-split a sentence with no words")
    return words[(len(words) + 1) // 2 - 1].end()


def split_text(text: str, strategy: SplitStrategy) -> tuple[str, str]:
    """Split into (context, continuation) such that context + continuation
    reconstructs the text exactly.

    Begin splits cut after sentence 1 (end-sentence) or at the word
    midpoint of sentence 2 (mid-sentence); Middle splits do the same
    around sentence ceil(S/2).
    """
    spans = sentence_spans(text)
    s = len(spans)
    if s < 2:
        raise ValueError("text must contain at least two sentences")
    if strategy == SplitStrategy.BEGIN_END:
        cut = spans[0][1]
    elif strategy == SplitStrategy.BEGIN_MID:
        cut = _word_midpoint(text, spans[1])
    elif strategy == SplitStrategy.MIDDLE_END:
        cut = spans[math.ceil(s / 2) - 1][1]
    elif strategy == SplitStrategy.MIDDLE_MID:
        cut = _word_midpoint(text, spans[math.ceil(s / 2)])
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return text[:cut], text[cut:]


def _splittable(text: str) -> bool:
    try:
        for strategy in STRATEGIES:
            context, continuation = split_text(text, strategy)
            if not context.strip() or not continuation.strip():
                return False
    except ValueError:
        return False
    return True


@dataclass
class SelectionConfig:
    n_texts: int = 60
    min_chars: int = 250
    max_chars: int = 1400

    def __post_init__(self):
        if self.min_chars >= self.max_chars:
            raise ValueError("min_chars must be below max_chars")


def select_texts(docs: Sequence[Document], cfg: SelectionConfig, seed: int) -> list[Document]:
    """Pick n_texts length-bounded, splittable documents, balanced across
    genres round-robin; deterministic per seed."""
    eligible = [
        d for d in docs
        if cfg.min_chars <= len(d.text) <= cfg.max_chars and _splittable(d.text)
    ]
    if len(eligible) < cfg.n_texts:
        raise ValueError(
            f"selection pool exhausted: need {cfg.n_texts} texts within "
            f"[{cfg.min_chars}, {cfg.max_chars}] chars with >=2 sentences, "
            f"found {len(eligible)}"
        )
    rng = np.random.default_rng(seed)
    by_genre: dict[str, list[Document]] = {}
    for d in eligible:
        by_genre.setdefault(d.genre, []).append(d)
    for genre in by_genre:
        order = rng.permutation(len(by_genre[genre]))
        by_genre[genre] = [by_genre[genre][i] for i in order]
    picked: list[Document] = []
    genres = sorted(by_genre)
    round_idx = 0
    while len(picked) < cfg.n_texts:
        progressed = False
        for genre in genres:
            if len(picked) >= cfg.n_texts:
                break
            if round_idx < len(by_genre[genre]):
                picked.append(by_genre[genre][round_idx])
                progressed = True
        if not progressed:
            break
        round_idx += 1
    return picked[: cfg.n_texts]


@dataclass
class EvalItem:
    item_id: str
    base_id: str
    context: str
    continuation: str
    origin: str  # AUTHENTIC | SYNTHETIC
    list_id: str  # "A" | "B"
    model_id: str | None = None
    strategy: str | None = None
    decode_meta: dict | None = None


@dataclass
class Experiment:
    items: list[EvalItem]
    lists: dict[str, list[str]]  # list id -> ordered item ids
    metadata: dict = field(default_factory=dict)

    def item_by_id(self, item_id: str) -> EvalItem:
        for item in self.items:
            if item.item_id == item_id:
                return item
        raise KeyError(f"unknown item id {item_id!r}")

    def blinded_list(self, list_id: str) -> list[dict]:
        """Evaluator-facing payload: no origin, no model id."""
        if list_id not in self.lists:
            raise KeyError(f"unknown list {list_id!r}")
        by_id = {item.item_id: item for item in self.items}
        ordered = [by_id[i] for i in self.lists[list_id]]
        return [
            {
                "item_id": item.item_id,
                "context": item.context,
                "continuation": item.continuation,
                "position": pos + 1,
                "total": len(ordered),
            }
            for pos, item in enumerate(ordered)
        ]

    def to_dict(self) -> dict:
        return {
            "items": [asdict(item) for item in self.items],
            "lists": self.lists,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Experiment":
        return cls(
            items=[EvalItem(**rec) for rec in data["items"]],
            lists={k: list(v) for k, v in data["lists"].items()},
            metadata=data.get("metadata", {}),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "Experiment":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def model_generator(
    ckpt: Checkpoint, vocab: Vocab, decode_cfg: GenerateConfig | None = None
) -> Callable[[str, int], str]:
    """Continuation generator that samples from the model and truncates at
    the last token boundary fitting the character budget."""
    decode_cfg = decode_cfg or GenerateConfig(
        mode="top_p", temperature=0.8, top_p=0.9, stop_id=None
    )

    def gen(context: str, max_chars: int, seed: int) -> str:
        if max_chars <= 0:
            return ""
        cfg = GenerateConfig(
            mode=decode_cfg.mode,
            temperature=decode_cfg.temperature,
            top_p=decode_cfg.top_p,
            seed=seed,
            stop_id=decode_cfg.stop_id,
        )
        prompt = vocab.encode(context)
        window = ckpt.config.max_seq_len
        if len(prompt) >= window:
            prompt = prompt[-(window // 2):]
        budget = min(max_chars + 2, window - len(prompt))
        out = generate(ckpt, prompt, max_new=budget, cfg=cfg)
        new_ids = out[len(prompt):]
        while new_ids and len(vocab.decode(new_ids)) > max_chars:
            new_ids.pop()
        return vocab.decode(new_ids)

    return gen


def build_latin_square(version_pairs: Sequence[tuple[EvalItem, EvalItem]]) -> dict[str, list[str]]:
    """Assign each (authentic, synthetic) pair to complementary lists.

    Bases alternate, so every base appears exactly once per list, versions
    are complementary across lists, and each list holds the same number of
    authentic and synthetic items for an even base count.
    """
    lists: dict[str, list[str]] = {"A": [], "B": []}
    for i, (auth, synth) in enumerate(version_pairs):
        if auth.base_id != synth.base_id:
            raise ValueError(f"pair {i} mixes bases {auth.base_id!r} and {synth.base_id!r}")
        if auth.origin != AUTHENTIC or synth.origin != SYNTHETIC:
            raise ValueError(f"pair {i} must be (authentic, synthetic)")
        auth.list_id, synth.list_id = ("A", "B") if i % 2 == 0 else ("B", "A")
        lists[auth.list_id].append(auth.item_id)
        lists[synth.list_id].append(synth.item_id)
    return lists


def build_experiment(
    texts: Sequence[Document],
    generate_fn: Callable[[str, int, int], str],
    seed: int,
    model_id: str = "model",
    decode_meta: dict | None = None,
) -> Experiment:
    """Authentic/synthetic item pairs under counterbalanced split strategies,
    distributed over two complementary Latin-square lists."""
    n = len(texts)
    if n % 4 != 0:
        raise ValueError("number of texts must be divisible by 4 for counterbalancing")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    pairs: list[tuple[EvalItem, EvalItem]] = []
    strategy_counts = {s.value: 0 for s in STRATEGIES}
    dropped: list[str] = []
    for pos, text_idx in enumerate(order):
        doc = texts[int(text_idx)]
        strategy = STRATEGIES[pos % len(STRATEGIES)]
        strategy_counts[strategy.value] += 1
        context, continuation = split_text(doc.text, strategy)
        try:
            synthetic = generate_fn(context, len(continuation), seed + pos)
        except Exception as err:
            logger.warning("generation failed for base %r, dropping it: %s", doc.id, err)
            dropped.append(doc.id)
            strategy_counts[strategy.value] -= 1
            continue
        if len(synthetic) > len(continuation):
            raise ValueError(
                f"generator exceeded the length budget for base {doc.id!r}"
            )
        auth = EvalItem(
            item_id=f"{doc.id}::auth",
            base_id=doc.id,
            context=context,
            continuation=continuation,
            origin=AUTHENTIC,
            list_id="",
            strategy=strategy.value,
        )
        synth = EvalItem(
            item_id=f"{doc.id}::synth",
            base_id=doc.id,
            context=context,
            continuation=synthetic,
            origin=SYNTHETIC,
            list_id="",
            model_id=model_id,
            strategy=strategy.value,
            decode_meta=decode_meta,
        )
        pairs.append((auth, synth))
    lists = build_latin_square(pairs)
    items = [item for pair in pairs for item in pair]
    metadata = {
        "seed": seed,
        "model_id": model_id,
        "n_bases": len(pairs),
        "strategy_counts": strategy_counts,
        "dropped_bases": dropped,
        "decode_meta": decode_meta,
    }
    return Experiment(items=items, lists=lists, metadata=metadata)


def assign_evaluators(evaluators: Sequence[str], seed: int) -> dict[str, list[str]]:
    """Split an even number of evaluator ids over the two lists, half each."""
    if len(evaluators) % 2 != 0:
        raise ValueError("need an even number of evaluators")
    order = np.random.default_rng(seed).permutation(len(evaluators))
    shuffled = [evaluators[int(i)] for i in order]
    half = len(shuffled) // 2
    return {"A": shuffled[:half], "B": shuffled[half:]}


@dataclass(frozen=True)
class Annotation:
    item_id: str
    evaluator_id: str
    flags: dict
    timestamp: str = ""

    def __post_init__(self):
        if set(self.flags) != set(CATEGORIES):
            raise ValueError(f"flags must cover exactly the categories {CATEGORIES}")
        for cat, value in self.flags.items():
            if not isinstance(value, bool):
                raise ValueError(f"flag {cat!r} must be a boolean")
        if not self.timestamp:
            object.__setattr__(
                self, "timestamp", datetime.now(timezone.utc).isoformat()
            )


class DuplicateAnnotation(ValueError):
    pass


class AnnotationStore:
    """Append-only annotation log; one annotation per (item, evaluator),
    first writer wins. Safe for concurrent submissions."""

    def __init__(self, log_path: str | Path | None = None):
        self._lock = threading.Lock()
        self._by_key: dict[tuple[str, str], Annotation] = {}
        self._log_path = Path(log_path) if log_path else None
        if self._log_path and self._log_path.exists():
            with open(self._log_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        ann = Annotation(**rec)
                        self._by_key.setdefault((ann.item_id, ann.evaluator_id), ann)

    def add(self, ann: Annotation) -> None:
        key = (ann.item_id, ann.evaluator_id)
        with self._lock:
            if key in self._by_key:
                raise DuplicateAnnotation(
                    f"evaluator {ann.evaluator_id!r} already annotated item {ann.item_id!r}"
                )
            self._by_key[key] = ann
            if self._log_path:
                with open(self._log_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({
                        "item_id": ann.item_id,
                        "evaluator_id": ann.evaluator_id,
                        "flags": ann.flags,
                        "timestamp": ann.timestamp,
                    }, ensure_ascii=False) + "\n")

    def annotations(self) -> list[Annotation]:
        with self._lock:
            return list(self._by_key.values())

    def count_for(self, evaluator_id: str) -> int:
        with self._lock:
            return sum(1 for (_, e) in self._by_key if e == evaluator_id)

    def annotated_items(self, evaluator_id: str) -> set[str]:
        with self._lock:
            return {i for (i, e) in self._by_key if e == evaluator_id}

    def export_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["item_id", "evaluator_id", *CATEGORIES, "timestamp"])
            for ann in sorted(self.annotations(), key=lambda a: (a.item_id, a.evaluator_id)):
                writer.writerow([
                    ann.item_id, ann.evaluator_id,
                    *(int(ann.flags[c]) for c in CATEGORIES),
                    ann.timestamp,
                ])


@dataclass
class ErrorReport:
    conditions: list[str]
    judgment_pct: dict  # condition -> category -> percent of judgments flagged
    item_pct: dict      # condition -> category -> percent of items any-flagged
    judgment_n: dict    # condition -> judgment count
    item_n: dict        # condition -> item count

    def to_dict(self) -> dict:
        return {
            "categories": list(CATEGORIES),
            "conditions": self.conditions,
            "judgment_level": self.judgment_pct,
            "item_level": self.item_pct,
            "denominators": {"judgments": self.judgment_n, "items": self.item_n},
        }

    def to_csv(self, path: str | Path) -> None:
        """Grouped-bar layout: one row per condition x category."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["condition", "category", "pct_judgments", "pct_items"])
            for cond in self.conditions:
                for cat in CATEGORIES:
                    writer.writerow([
                        cond, cat,
                        f"{self.judgment_pct[cond][cat]:.1f}",
                        f"{self.item_pct[cond][cat]:.1f}",
                    ])

    def render_table(self) -> str:
        width = max(12, *(len(c) + 2 for c in self.conditions))
        lines = [
            f"{'condition':<{width}}" + "".join(f"{c:>14}" for c in CATEGORIES),
        ]
        for cond in self.conditions:
            cells = "".join(f"{self.judgment_pct[cond][cat]:>13.1f}%" for cat in CATEGORIES)
            lines.append(f"{cond:<{width}}{cells}")
        return "\n".join(lines)


def aggregate(annotations: Iterable[Annotation], experiment: Experiment) -> ErrorReport:
    """Percentage of judgments (and of items, any-evaluator) flagged per
    condition x category. Conditions are "authentic" plus one per model."""
    items_by_id = {item.item_id: item for item in experiment.items}
    conditions: list[str] = [AUTHENTIC]
    for item in experiment.items:
        if item.origin == SYNTHETIC and item.model_id not in conditions:
            conditions.append(item.model_id)

    judgment_flagged = {c: {cat: 0 for cat in CATEGORIES} for c in conditions}
    judgment_total = {c: 0 for c in conditions}
    item_flags: dict[str, dict[str, bool]] = {}
    seen_keys: set[tuple[str, str]] = set()

    for ann in annotations:
        item = items_by_id.get(ann.item_id)
        if item is None:
            raise ValueError(f"annotation references unknown item {ann.item_id!r}")
        key = (ann.item_id, ann.evaluator_id)
        if key in seen_keys:
            raise DuplicateAnnotation(f"duplicate annotation {key}")
        seen_keys.add(key)
        cond = AUTHENTIC if item.origin == AUTHENTIC else item.model_id
        judgment_total[cond] += 1
        flags = item_flags.setdefault(ann.item_id, {cat: False for cat in CATEGORIES})
        for cat in CATEGORIES:
            if ann.flags[cat]:
                judgment_flagged[cond][cat] += 1
                flags[cat] = True

    item_flagged = {c: {cat: 0 for cat in CATEGORIES} for c in conditions}
    item_total = {c: 0 for c in conditions}
    for item_id, flags in item_flags.items():
        item = items_by_id[item_id]
        cond = AUTHENTIC if item.origin == AUTHENTIC else item.model_id
        item_total[cond] += 1
        for cat in CATEGORIES:
            if flags[cat]:
                item_flagged[cond][cat] += 1

    def pct(num: int, den: int) -> float:
        return 100.0 * num / den if den else 0.0

    return ErrorReport(
        conditions=conditions,
        judgment_pct={
            c: {cat: pct(judgment_flagged[c][cat], judgment_total[c]) for cat in CATEGORIES}
            for c in conditions
        },
        item_pct={
            c: {cat: pct(item_flagged[c][cat], item_total[c]) for cat in CATEGORIES}
            for c in conditions
        },
        judgment_n=judgment_total,
        item_n=item_total,
    )
