"""Vocabulary alignment and embedding-matrix transplant.

Adapting a trained model to a new tokenizer keeps the embedding rows of
tokens present in both vocabularies and fills every remaining row with the
column-wise mean over ALL source rows. The mean is accumulated serially in
float64 in row order, then rounded once to storage precision, so the result
is reproducible bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bpe import Vocab
from .model import Checkpoint, ModelConfig

NEW = -1


@dataclass
class VocabAlignment:
    mapping: np.ndarray  # target id -> source id, or NEW
    n_shared: int
    n_new: int
    source_vocab_size: int
    target_vocab_size: int


@dataclass
class TransplantReport:
    n_shared: int
    n_new: int
    source_vocab_size: int
    target_vocab_size: int
    mean_vector_norm: float

    def to_dict(self) -> dict:
        return {
            "n_shared": self.n_shared,
            "n_new": self.n_new,
            "source_vocab_size": self.source_vocab_size,
            "target_vocab_size": self.target_vocab_size,
            "mean_vector_norm": self.mean_vector_norm,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


def align_vocabs(src: Vocab, tgt: Vocab) -> VocabAlignment:
    """Map each target token to the source id of the byte-identical token,
    or NEW when the source vocabulary lacks it."""
    src_ids = {src.token_bytes(i): i for i in range(len(src))}
    mapping = np.full(len(tgt), NEW, dtype=np.int64)
    for i in range(len(tgt)):
        sid = src_ids.get(tgt.token_bytes(i))
        if sid is not None:
            mapping[i] = sid
    n_shared = int((mapping != NEW).sum())
    return VocabAlignment(
        mapping=mapping,
        n_shared=n_shared,
        n_new=len(tgt) - n_shared,
        source_vocab_size=len(src),
        target_vocab_size=len(tgt),
    )


def mean_embedding(src_emb: np.ndarray) -> np.ndarray:
    """Column-wise mean over all rows: serial float64 accumulation in row
    order, rounded to the source dtype."""
    if src_emb.ndim != 2:
        raise ValueError("embedding matrix must be 2-D")
    acc = np.zeros(src_emb.shape[1], dtype=np.float64)
    for row in src_emb:
        acc += row
    return (acc / src_emb.shape[0]).astype(src_emb.dtype)


def transplant_embeddings(src_emb: np.ndarray, align: VocabAlignment) -> np.ndarray:
    """Shared rows are copied bit for bit; every NEW row gets the mean vector."""
    src_emb = np.asarray(src_emb)
    if src_emb.ndim != 2 or src_emb.shape[0] != align.source_vocab_size:
        raise ValueError(
            f"embedding rows {src_emb.shape} do not match source vocab size "
            f"{align.source_vocab_size}"
        )
    mean = mean_embedding(src_emb)
    out = np.empty((align.target_vocab_size, src_emb.shape[1]), dtype=src_emb.dtype)
    shared = align.mapping != NEW
    out[shared] = src_emb[align.mapping[shared]]
    out[~shared] = mean
    return out


def transplant_model(
    src_ckpt: Checkpoint, src_tok: Vocab, tgt_tok: Vocab
) -> tuple[Checkpoint, TransplantReport]:
    """Rebuild the token embedding (and the output projection when untied)
    for the target vocabulary; every other parameter is copied unchanged,
    and the optimizer state and schedule position start from zero."""
    if src_ckpt.params["tok_emb"].shape[0] != len(src_tok):
        raise ValueError(
            f"checkpoint embedding rows ({src_ckpt.params['tok_emb'].shape[0]}) "
            f"do not match source vocabulary ({len(src_tok)})"
        )
    align = align_vocabs(src_tok, tgt_tok)
    new_params = {k: v.copy() for k, v in src_ckpt.params.items()}
    new_params["tok_emb"] = transplant_embeddings(src_ckpt.params["tok_emb"], align)
    if not src_ckpt.config.tie_embeddings:
        new_params["out_w"] = transplant_embeddings(src_ckpt.params["out_w"], align)

    cfg = src_ckpt.config
    new_cfg = ModelConfig(
        vocab_size=len(tgt_tok),
        n_layers=cfg.n_layers,
        n_heads=cfg.n_heads,
        d_model=cfg.d_model,
        d_ff=cfg.d_ff,
        max_seq_len=cfg.max_seq_len,
        tie_embeddings=cfg.tie_embeddings,
    )
    new_ckpt = Checkpoint(config=new_cfg, params=new_params, opt_m={}, opt_v={}, step=0)
    report = TransplantReport(
        n_shared=align.n_shared,
        n_new=align.n_new,
        source_vocab_size=len(src_tok),
        target_vocab_size=len(tgt_tok),
        mean_vector_norm=float(
            np.linalg.norm(mean_embedding(src_ckpt.params["tok_emb"]).astype(np.float64))
        ),
    )
    return new_ckpt, report
