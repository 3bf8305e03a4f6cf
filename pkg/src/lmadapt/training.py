"""Continual-pretraining loop: AdamW with decoupled decay, linear LR schedule,
contiguous batch packing, resumable deterministic training."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bpe import Vocab
from .model import Checkpoint, forward, loss, loss_and_grads

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class OptimizerConfig:
    total_steps: int
    lr0: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.1
    warmup_steps: int = 0

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be > 0")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if not 0 <= self.warmup_steps < self.total_steps:
            raise ValueError("warmup_steps must lie in [0, total_steps)")


@dataclass
class TrainConfig:
    seq_len: int = 2048
    batch_size: int = 8
    seed: int = 0
    checkpoint_every: int = 0  # 0 disables periodic checkpoints
    grad_clip: float | None = None


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def lr_at(step: int, cfg: OptimizerConfig) -> float:
    """Linear warmup (if any) to lr0, then linear decay to 0 at total_steps."""
    if not 0 <= step <= cfg.total_steps:
        raise ValueError(f"step {step} outside [0, {cfg.total_steps}]")
    if cfg.warmup_steps and step < cfg.warmup_steps:
        return cfg.lr0 * (step / cfg.warmup_steps)
    return cfg.lr0 * ((cfg.total_steps - step) / (cfg.total_steps - cfg.warmup_steps))


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    cfg: OptimizerConfig,
    step: int,
    lr: float | None = None,
) -> None:
    """One bias-corrected AdamW update, in place. Weight decay is decoupled
    and multiplicative, so with zero gradients parameters shrink by exactly
    (1 - lr*wd) per step:
    theta <- theta * (1 - lr*wd) - lr * m_hat / (sqrt(v_hat) + eps).
    """
    if step < 1:
        raise ValueError("step must be >= 1")
    if lr is None:
        lr = lr_at(step - 1, cfg)
    bc1 = 1.0 - cfg.beta1 ** step
    bc2 = 1.0 - cfg.beta2 ** step
    for name in sorted(params):
        g = grads[name]
        if not np.isfinite(g).all():
            raise ValueError(f"non-finite gradient in tensor {name!r}")
        m = state.m.setdefault(name, np.zeros_like(params[name]))
        v = state.v.setdefault(name, np.zeros_like(params[name]))
        m[...] = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v[...] = cfg.beta2 * v + (1.0 - cfg.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        params[name][...] = (
            params[name] * (1.0 - lr * cfg.weight_decay)
            - lr * (m_hat / (np.sqrt(v_hat) + cfg.epsilon))
        )


def pack_corpus(docs: Iterable, vocab: Vocab) -> np.ndarray:
    """Encode documents and join them with the end-of-text token."""
    ids: list[int] = []
    for item in docs:
        text = item.text if hasattr(item, "text") else item
        ids.extend(vocab.encode(text))
        ids.append(vocab.eot_id)
    return np.asarray(ids, dtype=np.int64)


def make_batches(
    tokens: Sequence[int], seq_len: int, batch_size: int, seed: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Contiguous (input, target) blocks with targets shifted one token;
    block order is a seeded permutation, grouped into fixed-size batches."""
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 1:
        raise ValueError("token stream must be one-dimensional")
    n_blocks = (len(tokens) - 1) // seq_len
    if n_blocks < 1:
        raise ValueError(f"need at least {seq_len + 1} tokens, got {len(tokens)}")
    inputs = np.stack([tokens[i * seq_len : (i + 1) * seq_len] for i in range(n_blocks)])
    targets = np.stack([tokens[i * seq_len + 1 : (i + 1) * seq_len + 1] for i in range(n_blocks)])
    order = np.random.default_rng(seed).permutation(n_blocks)
    n_batches = n_blocks // batch_size
    if n_batches < 1:
        raise ValueError(f"need at least {batch_size} blocks for one batch, got {n_blocks}")
    batches = []
    for b in range(n_batches):
        sel = order[b * batch_size : (b + 1) * batch_size]
        batches.append((inputs[sel], targets[sel]))
    return batches


def _clip_grads(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[tuple[int, float, float]]  # (step, lr, loss)


def train(
    ckpt: Checkpoint,
    tokens: Sequence[int],
    train_cfg: TrainConfig,
    opt_cfg: OptimizerConfig,
    out_dir: str | Path | None = None,
    until_step: int | None = None,
) -> TrainResult:
    """Run (or resume) the training loop up to opt_cfg.total_steps.

    Resuming from a saved checkpoint continues the identical loss curve:
    batches are regenerated from the seed and indexed by step, and all
    state lives in the checkpoint. `until_step` pauses the run early
    without altering the schedule.
    """
    if train_cfg.seq_len > ckpt.config.max_seq_len:
        raise ValueError("seq_len exceeds the model context window")
    batches = make_batches(tokens, train_cfg.seq_len, train_cfg.batch_size, train_cfg.seed)
    state = AdamState(m=ckpt.opt_m, v=ckpt.opt_v)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    last = opt_cfg.total_steps if until_step is None else min(until_step, opt_cfg.total_steps)
    history: list[tuple[int, float, float]] = []
    for step in range(ckpt.step + 1, last + 1):
        inputs, targets = batches[(step - 1) % len(batches)]
        loss_val, grads = loss_and_grads(ckpt.params, ckpt.config, inputs, targets)
        if not math.isfinite(loss_val):
            raise TrainingDiverged(
                f"non-finite loss at step {step}; last good checkpoint is step {ckpt.step}"
            )
        if train_cfg.grad_clip is not None:
            _clip_grads(grads, train_cfg.grad_clip)
        lr = lr_at(step - 1, opt_cfg)
        adam_step(ckpt.params, grads, state, opt_cfg, step, lr=lr)
        ckpt.step = step
        history.append((step, lr, loss_val))
        if (
            out_dir is not None
            and train_cfg.checkpoint_every
            and step % train_cfg.checkpoint_every == 0
        ):
            ckpt.save(out_dir / f"step{step:06d}.ltb")
    return TrainResult(checkpoint=ckpt, history=history)


def evaluate_perplexity(ckpt: Checkpoint, tokens: Sequence[int], seq_len: int) -> float:
    """exp of the mean next-token cross-entropy over contiguous blocks."""
    tokens = np.asarray(tokens, dtype=np.int64)
    n_blocks = (len(tokens) - 1) // seq_len
    if n_blocks < 1:
        raise ValueError(f"need at least {seq_len + 1} tokens, got {len(tokens)}")
    total = 0.0
    count = 0
    for i in range(n_blocks):
        inp = tokens[i * seq_len : (i + 1) * seq_len]
        tgt = tokens[i * seq_len + 1 : (i + 1) * seq_len + 1]
        total += loss(forward(ckpt, inp), tgt) * seq_len
        count += seq_len
    return float(math.exp(total / count))


def write_loss_curve(history: Sequence[tuple[int, float, float]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "lr", "loss"])
        for step, lr, loss_val in history:
            writer.writerow([step, f"{lr:.12g}", f"{loss_val:.9f}"])
