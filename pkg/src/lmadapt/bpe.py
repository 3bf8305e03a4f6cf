"""Byte-level BPE tokenizer: training, encode/decode, JSON serialization.

Tokens are byte strings. The base alphabet is the 256 single bytes
(ids 0..255), merged tokens take ids 256+rank, and special tokens sit at
the end of the id space. Merges are learned inside whitespace-delimited
words only, so whitespace always stays as single-byte tokens and
decode(encode(s)) == s for every string s.
"""

from __future__ import annotations

import heapq
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

END_OF_TEXT = "<|endoftext|>"

_CHUNK_RE = re.compile(r"\S+|\s+")


@dataclass
class TokenizerTrainConfig:
    vocab_size: int = 50257
    special_tokens: list[str] = field(default_factory=lambda: [END_OF_TEXT])

    def __post_init__(self):
        if self.vocab_size < 256 + len(self.special_tokens):
            raise ValueError("vocab_size must cover the 256 byte tokens plus special tokens")


class Vocab:
    """Byte-level BPE vocabulary: 256 byte tokens + ordered merges + specials."""

    def __init__(self, merges: Sequence[tuple[bytes, bytes]], special_tokens: Sequence[str]):
        self.merges = [(bytes(a), bytes(b)) for a, b in merges]
        self.special_tokens = list(special_tokens)
        self._ranks = {pair: rank for rank, pair in enumerate(self.merges)}
        self.token_to_id: dict[bytes, int] = {bytes([i]): i for i in range(256)}
        for rank, (a, b) in enumerate(self.merges):
            tok = a + b
            if tok in self.token_to_id:
                raise ValueError(f"merge {rank} produces duplicate token {tok!r}")
            self.token_to_id[tok] = 256 + rank
        for name in self.special_tokens:
            if name.encode("utf-8") in self.token_to_id:
                raise ValueError(f"special token {name!r} collides with a byte-level token")
        self.special_to_id = {
            name: 256 + len(self.merges) + i for i, name in enumerate(self.special_tokens)
        }
        self.id_to_token: dict[int, bytes] = {i: t for t, i in self.token_to_id.items()}
        for name, idx in self.special_to_id.items():
            self.id_to_token[idx] = name.encode("utf-8")
        self._cache: dict[bytes, list[int]] = {}

    def __len__(self) -> int:
        return 256 + len(self.merges) + len(self.special_tokens)

    @property
    def eot_id(self) -> int:
        if not self.special_tokens:
            raise ValueError("vocabulary has no special tokens")
        return self.special_to_id[self.special_tokens[0]]

    def token_bytes(self, idx: int) -> bytes:
        try:
            return self.id_to_token[idx]
        except KeyError:
            raise ValueError(f"unknown token id {idx}") from None

    def _apply_merges(self, chunk: bytes) -> list[bytes]:
        word = [chunk[i : i + 1] for i in range(len(chunk))]
        while len(word) > 1:
            best_rank = None
            for i in range(len(word) - 1):
                r = self._ranks.get((word[i], word[i + 1]))
                if r is not None and (best_rank is None or r < best_rank):
                    best_rank = r
            if best_rank is None:
                break
            a, b = self.merges[best_rank]
            out = []
            i = 0
            while i < len(word):
                if i + 1 < len(word) and word[i] == a and word[i + 1] == b:
                    out.append(a + b)
                    i += 2
                else:
                    out.append(word[i])
                    i += 1
            word = out
        return word

    def encode_chunk(self, chunk: bytes) -> list[int]:
        cached = self._cache.get(chunk)
        if cached is None:
            cached = [self.token_to_id[t] for t in self._apply_merges(chunk)]
            if len(self._cache) < 1_000_000:
                self._cache[chunk] = cached
        return cached

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        for chunk in _CHUNK_RE.findall(text):
            ids.extend(self.encode_chunk(chunk.encode("utf-8")))
        return ids

    def decode_bytes(self, ids: Sequence[int]) -> bytes:
        return b"".join(self.token_bytes(i) for i in ids)

    def decode(self, ids: Sequence[int]) -> str:
        """Inverse of encode on valid UTF-8; stray byte sequences become U+FFFD."""
        return self.decode_bytes(ids).decode("utf-8", errors="replace")

    def to_json_dict(self) -> dict:
        vocab_items = sorted(self.id_to_token.items())
        return {
            "version": 1,
            "byte_level": True,
            "special_tokens": self.special_tokens,
            "merges": [[a.decode("latin-1"), b.decode("latin-1")] for a, b in self.merges],
            "vocab": {tok.decode("latin-1"): idx for idx, tok in vocab_items},
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Vocab":
        if data.get("version") != 1:
            raise ValueError(f"unsupported tokenizer file version: {data.get('version')!r}")
        merges = [(a.encode("latin-1"), b.encode("latin-1")) for a, b in data["merges"]]
        vocab = cls(merges, data.get("special_tokens", []))
        if "vocab" in data and len(data["vocab"]) != len(vocab):
            raise ValueError("tokenizer file vocab table inconsistent with merge list")
        return vocab

    def save(self, path: str | Path) -> None:
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, ensure_ascii=True, separators=(",", ":"))
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def _word_frequencies(corpus: Iterable) -> Counter:
    freq: Counter = Counter()
    for item in corpus:
        text = item.text if hasattr(item, "text") else item
        freq.update(text.split())
    return freq


def train_bpe(corpus: Iterable, cfg: TokenizerTrainConfig | None = None) -> Vocab:
    """Greedy BPE: merge the most frequent adjacent token pair until the
    vocabulary budget is reached; ties break on the lexicographically
    smallest (left, right) byte pair, so training is deterministic.

    Stops early with a warning when the corpus has no pairs left.
    """
    cfg = cfg or TokenizerTrainConfig()
    freq = _word_frequencies(corpus)
    if not freq:
        raise ValueError("cannot train a tokenizer on an empty corpus")
    n_target = cfg.vocab_size - 256 - len(cfg.special_tokens)

    words: list[list[bytes]] = []
    counts: list[int] = []
    for word, n in freq.items():
        raw = word.encode("utf-8")
        words.append([raw[i : i + 1] for i in range(len(raw))])
        counts.append(n)

    pair_counts: Counter = Counter()
    pair_words: dict[tuple[bytes, bytes], set[int]] = {}
    for widx, word in enumerate(words):
        for pair in zip(word, word[1:]):
            pair_counts[pair] += counts[widx]
            pair_words.setdefault(pair, set()).add(widx)

    heap: list[tuple[int, bytes, bytes]] = [
        (-n, a, b) for (a, b), n in pair_counts.items()
    ]
    heapq.heapify(heap)
    existing = {bytes([i]) for i in range(256)}
    existing.update(name.encode("utf-8") for name in cfg.special_tokens)
    banned: set[tuple[bytes, bytes]] = set()
    merges: list[tuple[bytes, bytes]] = []

    def _bump(pair: tuple[bytes, bytes], delta: int, widx: int) -> None:
        n = pair_counts[pair] + delta
        if n <= 0:
            pair_counts.pop(pair, None)
        else:
            pair_counts[pair] = n
            heapq.heappush(heap, (-n, pair[0], pair[1]))
        if delta > 0:
            pair_words.setdefault(pair, set()).add(widx)

    while len(merges) < n_target and heap:
        negn, a, b = heapq.heappop(heap)
        pair = (a, b)
        if pair in banned or pair_counts.get(pair, 0) != -negn:
            continue
        new_tok = a + b
        if new_tok in existing:
            banned.add(pair)
            continue
        merges.append(pair)
        existing.add(new_tok)
        for widx in list(pair_words.pop(pair, ())):
            word = words[widx]
            before = Counter(zip(word, word[1:]))
            if pair not in before:
                continue
            merged = []
            i = 0
            while i < len(word):
                if i + 1 < len(word) and word[i] == a and word[i + 1] == b:
                    merged.append(new_tok)
                    i += 2
                else:
                    merged.append(word[i])
                    i += 1
            words[widx] = merged
            after = Counter(zip(merged, merged[1:]))
            for p in set(before) | set(after):
                delta = after.get(p, 0) - before.get(p, 0)
                if delta:
                    _bump(p, delta * counts[widx], widx)
        pair_counts.pop(pair, None)

    if len(merges) < n_target:
        logger.warning(
            "corpus exhausted after %d merges; vocabulary has %d entries instead of %d",
            len(merges), 256 + len(merges) + len(cfg.special_tokens), cfg.vocab_size,
        )
    return Vocab(merges, cfg.special_tokens)


def fertility(vocab: Vocab, corpus: Iterable) -> float:
    """Mean number of tokens per whitespace word; 1.0 means whole-word tokens."""
    total_tokens = 0
    total_words = 0
    for item in corpus:
        text = item.text if hasattr(item, "text") else item
        for word in text.split():
            total_tokens += len(vocab.encode_chunk(word.encode("utf-8")))
            total_words += 1
    if total_words == 0:
        raise ValueError("fertility requires a corpus with at least one word")
    return total_tokens / total_words
