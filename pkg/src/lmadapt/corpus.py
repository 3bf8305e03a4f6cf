"""Corpus ingestion, perplexity-based cleaning, statistics, and held-out splitting."""

from __future__ import annotations

import json
import logging
import math
import random
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SUBCORPUS_TRANSFER = "transfer"
SUBCORPUS_PUBLIC = "public"
_SUBCORPORA = (SUBCORPUS_TRANSFER, SUBCORPUS_PUBLIC)
_SUBCORPUS_LABELS = {
    SUBCORPUS_TRANSFER: "Transfer agreement",
    SUBCORPUS_PUBLIC: "Public sources",
}

_BOS = "<s>"
_UNK = "<unk>"


@dataclass(frozen=True)
class Document:
    id: str
    subcorpus: str
    genre: str
    text: str


@dataclass
class IngestResult:
    documents: list[Document]
    n_malformed: int


def ingest(path: str | Path, format: str = "jsonl") -> IngestResult:
    """Read documents from a JSONL file or a directory of .txt files.

    Documents come back sorted by id; malformed records are skipped,
    logged, and counted in the result.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"corpus path does not exist: {path}")
    if format == "jsonl":
        result = _ingest_jsonl(path)
    elif format == "plain_dir":
        result = _ingest_plain_dir(path)
    else:
        raise ValueError(f"unknown corpus format: {format!r}")
    result.documents.sort(key=lambda d: d.id)
    return result


def _ingest_jsonl(path: Path) -> IngestResult:
    docs: list[Document] = []
    seen: set[str] = set()
    n_bad = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                doc = Document(
                    id=str(rec["id"]),
                    subcorpus=rec["subcorpus"],
                    genre=str(rec["genre"]),
                    text=rec["text"],
                )
                if doc.subcorpus not in _SUBCORPORA:
                    raise ValueError(f"bad subcorpus {doc.subcorpus!r}")
                if not isinstance(doc.text, str):
                    raise ValueError("text is not a string")
                if doc.id in seen:
                    raise ValueError(f"duplicate id {doc.id!r}")
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
                logger.warning("%s:%d skipped malformed record: %s", path, lineno, err)
                n_bad += 1
                continue
            seen.add(doc.id)
            docs.append(doc)
    return IngestResult(docs, n_bad)


def _ingest_plain_dir(path: Path) -> IngestResult:
    docs = []
    n_bad = 0
    for p in sorted(path.glob("*.txt")):
        try:
            text = p.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as err:
            logger.warning("%s skipped: %s", p, err)
            n_bad += 1
            continue
        docs.append(Document(id=p.name, subcorpus=SUBCORPUS_PUBLIC, genre="unknown", text=text))
    return IngestResult(docs, n_bad)


class NgramModel:
    """Additively smoothed word n-gram model over whitespace tokens.

    Contexts shorter than order-1 are padded with a start symbol; tokens
    outside the closed vocabulary map to an unknown type that counts as
    one vocabulary entry, so every (token, context) probability is > 0.
    """

    def __init__(self, order: int, vocab: frozenset[str], counts: dict, alpha: float = 1.0):
        if order < 1:
            raise ValueError("order must be >= 1")
        if alpha <= 0:
            raise ValueError("smoothing constant must be > 0")
        if not vocab:
            raise ValueError("vocabulary must be non-empty")
        self.order = order
        self.alpha = alpha
        self.vocab = vocab
        self.counts = counts
        self._totals = {ctx: sum(c.values()) for ctx, c in counts.items()}

    @classmethod
    def train(cls, texts: Iterable[str], order: int = 2, alpha: float = 1.0) -> "NgramModel":
        vocab: set[str] = {_UNK}
        counts: dict[tuple, Counter] = {}
        for text in texts:
            tokens = text.split()
            vocab.update(tokens)
            padded = [_BOS] * (order - 1) + tokens
            for i in range(len(tokens)):
                ctx = tuple(padded[i : i + order - 1])
                counts.setdefault(ctx, Counter())[tokens[i]] += 1
        return cls(order, frozenset(vocab), counts, alpha)

    @classmethod
    def uniform(cls, n_types: int) -> "NgramModel":
        """Unigram model with no observations: every token scores 1/n_types."""
        if n_types < 1:
            raise ValueError("n_types must be >= 1")
        types = frozenset([_UNK] + [f"t{i}" for i in range(n_types - 1)])
        return cls(order=1, vocab=types, counts={}, alpha=1.0)

    def _map(self, token: str) -> str:
        return token if token in self.vocab else _UNK

    def logprob(self, token: str, context: Sequence[str]) -> float:
        if self.order == 1:
            ctx: tuple = ()
        else:
            tail = context[-(self.order - 1) :]
            ctx = tuple(t if (t == _BOS or t in self.vocab) else _UNK for t in tail)
        table = self.counts.get(ctx)
        v = len(self.vocab)
        if table is None:
            return math.log(1.0 / v)
        c = table.get(self._map(token), 0)
        total = self._totals[ctx]
        return math.log((c + self.alpha) / (total + self.alpha * v))


def perplexity(text: str, model: NgramModel) -> float:
    """exp of mean negative log-probability per whitespace token."""
    tokens = text.split()
    if not tokens:
        raise ValueError("cannot score text with zero tokens")
    padded = [_BOS] * (model.order - 1) + tokens
    logp = 0.0
    for i, tok in enumerate(tokens):
        logp += model.logprob(tok, padded[i : i + model.order - 1])
    return math.exp(-logp / len(tokens))


@dataclass
class CleanerConfig:
    ppl_threshold: float
    min_chars: int
    model: NgramModel

    def __post_init__(self):
        if self.ppl_threshold <= 1:
            raise ValueError("ppl_threshold must be > 1")
        if self.min_chars < 0:
            raise ValueError("min_chars must be >= 0")


@dataclass(frozen=True)
class CleanDecision:
    keep: bool
    reason: str | None = None
    perplexity: float | None = None


def clean(doc: Document, cfg: CleanerConfig) -> CleanDecision:
    """Length gate first, then perplexity gate; deterministic per document."""
    if len(doc.text) < cfg.min_chars:
        return CleanDecision(keep=False, reason="too_short")
    ppl = perplexity(doc.text, cfg.model)
    if ppl > cfg.ppl_threshold:
        return CleanDecision(keep=False, reason="high_perplexity", perplexity=ppl)
    return CleanDecision(keep=True, perplexity=ppl)


def clean_corpus(
    docs: Sequence[Document], cfg: CleanerConfig, workers: int = 1
) -> list[tuple[Document, CleanDecision]]:
    """Score every document; per-document decisions are pure, so the
    result is identical for any worker count."""
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            decisions = list(pool.map(lambda d: clean(d, cfg), docs))
    else:
        decisions = [clean(d, cfg) for d in docs]
    return list(zip(docs, decisions))


def calibrate_threshold(perplexities: Sequence[float], percentile: float = 95.0) -> float:
    """Default cleaner threshold: a high percentile of a calibration sample."""
    if not len(perplexities):
        raise ValueError("need at least one calibration perplexity")
    return float(np.percentile(np.asarray(perplexities, dtype=np.float64), percentile))


@dataclass(frozen=True)
class GenreRow:
    subcorpus: str
    genre: str
    tokens: int
    documents: int


@dataclass
class CorpusStats:
    rows: list[GenreRow] = field(default_factory=list)

    def subcorpora(self) -> list[str]:
        out = []
        for row in self.rows:
            if row.subcorpus not in out:
                out.append(row.subcorpus)
        return out

    def subtotal(self, subcorpus: str) -> tuple[int, int]:
        tok = sum(r.tokens for r in self.rows if r.subcorpus == subcorpus)
        doc = sum(r.documents for r in self.rows if r.subcorpus == subcorpus)
        return tok, doc

    @property
    def total(self) -> tuple[int, int]:
        return (
            sum(self.subtotal(s)[0] for s in self.subcorpora()),
            sum(self.subtotal(s)[1] for s in self.subcorpora()),
        )

    def to_dict(self) -> dict:
        return {
            "rows": [
                {"subcorpus": r.subcorpus, "genre": r.genre,
                 "tokens": r.tokens, "documents": r.documents}
                for r in self.rows
            ],
            "subtotals": {
                s: {"tokens": self.subtotal(s)[0], "documents": self.subtotal(s)[1]}
                for s in self.subcorpora()
            },
            "total": {"tokens": self.total[0], "documents": self.total[1]},
        }

    def render_table(self) -> str:
        """Plain-text table: genre rows, per-subcorpus subtotals, grand total."""
        lines = []
        header = f"{'Subcorpus':<22} {'Genre':<22} {'Tokens':>15} {'Documents':>12}"
        rule = "-" * len(header)
        lines.append(header)
        lines.append(rule)
        for sub in self.subcorpora():
            label = _SUBCORPUS_LABELS.get(sub, sub)
            for row in (r for r in self.rows if r.subcorpus == sub):
                lines.append(
                    f"{label:<22} {row.genre:<22} {row.tokens:>15,} {row.documents:>12,}"
                )
                label = ""
            tok, doc = self.subtotal(sub)
            lines.append(f"{'':<22} {'Subtotal':<22} {tok:>15,} {doc:>12,}")
            lines.append(rule)
        tok, doc = self.total
        lines.append(f"{'':<22} {'Total':<22} {tok:>15,} {doc:>12,}")
        return "\n".join(lines)


def stats(docs: Iterable[Document]) -> CorpusStats:
    """Whitespace-token and document counts grouped by (subcorpus, genre)."""
    tokens: Counter = Counter()
    documents: Counter = Counter()
    for doc in docs:
        key = (doc.subcorpus, doc.genre)
        tokens[key] += len(doc.text.split())
        documents[key] += 1
    rows = [
        GenreRow(sub, genre, tokens[(sub, genre)], documents[(sub, genre)])
        for sub, genre in sorted(tokens)
    ]
    return CorpusStats(rows)


def stats_from_rows(rows: Iterable[dict]) -> CorpusStats:
    """Build stats from pre-aggregated rows ({subcorpus, genre, tokens, documents})."""
    return CorpusStats([
        GenreRow(str(r["subcorpus"]), str(r["genre"]), int(r["tokens"]), int(r["documents"]))
        for r in rows
    ])


def split(
    docs: Sequence[Document], heldout_fraction: float, seed: int
) -> tuple[list[Document], list[Document]]:
    """Disjoint, exhaustive train/held-out partition, deterministic per seed."""
    if not docs:
        raise ValueError("corpus must be non-empty")
    if not 0 < heldout_fraction < 1:
        raise ValueError("heldout_fraction must be in (0, 1)")
    n = len(docs)
    n_held = int(round(heldout_fraction * n))
    order = list(range(n))
    random.Random(seed).shuffle(order)
    held_idx = set(order[:n_held])
    train = [d for i, d in enumerate(docs) if i not in held_idx]
    heldout = [d for i, d in enumerate(docs) if i in held_idx]
    return train, heldout
