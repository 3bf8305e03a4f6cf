"""Decoder-only causal transformer in numpy with exact forward/backward.

Reference shape: pre-norm blocks, GELU feed-forward, learned absolute
positions, optionally tied input/output embeddings. Everything runs in the
dtype of the parameter arrays (float32 normally, float64 for gradient
checking), single-threaded and bit-deterministic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import erf

from .tensorio import load_tensors, save_tensors

_LN_EPS = 1e-5
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass
class ModelConfig:
    vocab_size: int
    n_layers: int = 24
    n_heads: int = 16
    d_model: int = 2048
    d_ff: int | None = None
    max_seq_len: int = 2048
    tie_embeddings: bool = True

    def __post_init__(self):
        if self.d_ff is None:
            self.d_ff = 4 * self.d_model
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.max_seq_len < 1:
            raise ValueError("max_seq_len must be >= 1")
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be >= 1")


def init_params(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> dict[str, np.ndarray]:
    """normal(0, 0.02) weights, zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(seed)

    def w(*shape):
        return (rng.standard_normal(shape) * 0.02).astype(dtype)

    d, f = cfg.d_model, cfg.d_ff
    params = {
        "tok_emb": w(cfg.vocab_size, d),
        "pos_emb": w(cfg.max_seq_len, d),
        "ln_f.g": np.ones(d, dtype=dtype),
        "ln_f.b": np.zeros(d, dtype=dtype),
    }
    for i in range(cfg.n_layers):
        p = f"h{i}."
        params[p + "ln1.g"] = np.ones(d, dtype=dtype)
        params[p + "ln1.b"] = np.zeros(d, dtype=dtype)
        params[p + "attn.wq"] = w(d, d)
        params[p + "attn.bq"] = np.zeros(d, dtype=dtype)
        params[p + "attn.wk"] = w(d, d)
        params[p + "attn.bk"] = np.zeros(d, dtype=dtype)
        params[p + "attn.wv"] = w(d, d)
        params[p + "attn.bv"] = np.zeros(d, dtype=dtype)
        params[p + "attn.wo"] = w(d, d)
        params[p + "attn.bo"] = np.zeros(d, dtype=dtype)
        params[p + "ln2.g"] = np.ones(d, dtype=dtype)
        params[p + "ln2.b"] = np.zeros(d, dtype=dtype)
        params[p + "mlp.w1"] = w(d, f)
        params[p + "mlp.b1"] = np.zeros(f, dtype=dtype)
        params[p + "mlp.w2"] = w(f, d)
        params[p + "mlp.b2"] = np.zeros(d, dtype=dtype)
    if not cfg.tie_embeddings:
        params["out_w"] = w(cfg.vocab_size, d)
    return params


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    opt_m: dict[str, np.ndarray] = field(default_factory=dict)
    opt_v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def init(cls, cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> "Checkpoint":
        return cls(config=cfg, params=init_params(cfg, seed, dtype))

    def save(self, path: str | Path) -> None:
        path = Path(path)
        tensors = {f"param.{k}": v for k, v in self.params.items()}
        tensors.update({f"adam_m.{k}": v for k, v in self.opt_m.items()})
        tensors.update({f"adam_v.{k}": v for k, v in self.opt_v.items()})
        save_tensors(path, tensors)
        sidecar = {"config": asdict(self.config), "step": self.step}
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(sidecar, indent=2), encoding="utf-8")
        tmp.replace(path.with_suffix(".json"))

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        path = Path(path)
        sidecar = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
        cfg = ModelConfig(**sidecar["config"])
        tensors = load_tensors(path)
        ckpt = cls(config=cfg, params={}, step=int(sidecar["step"]))
        for name, arr in tensors.items():
            kind, key = name.split(".", 1)
            {"param": ckpt.params, "adam_m": ckpt.opt_m, "adam_v": ckpt.opt_v}[kind][key] = arr
        return ckpt


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def _layernorm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def _layernorm_bwd(dy, g, cache):
    xhat, inv = cache
    dg = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = (dxhat - m1 - xhat * m2) * inv
    return dx, dg, db


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def _gelu_bwd(x):
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * np.exp(-0.5 * x * x) * _INV_SQRT_2PI


def _check_tokens(cfg: ModelConfig, ids: np.ndarray) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.shape[1] > cfg.max_seq_len:
        raise ValueError(f"sequence length {ids.shape[1]} exceeds max_seq_len {cfg.max_seq_len}")
    if ids.shape[1] < 1:
        raise ValueError("sequence must contain at least one token")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise ValueError("token id outside vocabulary")
    return ids


def _forward(params, cfg: ModelConfig, ids: np.ndarray, want_cache: bool = False):
    B, T = ids.shape
    dtype = params["tok_emb"].dtype
    head_dim = cfg.d_model // cfg.n_heads
    scale = 1.0 / math.sqrt(head_dim)
    mask = np.triu(np.ones((T, T), dtype=bool), k=1)

    x = params["tok_emb"][ids] + params["pos_emb"][:T]
    cache = {"ids": ids, "T": T, "layers": []} if want_cache else None

    for i in range(cfg.n_layers):
        p = f"h{i}."
        a, ln1_cache = _layernorm(x, params[p + "ln1.g"], params[p + "ln1.b"])
        q = a @ params[p + "attn.wq"] + params[p + "attn.bq"]
        k = a @ params[p + "attn.wk"] + params[p + "attn.bk"]
        v = a @ params[p + "attn.wv"] + params[p + "attn.bv"]
        qh = q.reshape(B, T, cfg.n_heads, head_dim).transpose(0, 2, 1, 3)
        kh = k.reshape(B, T, cfg.n_heads, head_dim).transpose(0, 2, 1, 3)
        vh = v.reshape(B, T, cfg.n_heads, head_dim).transpose(0, 2, 1, 3)
        scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
        scores = np.where(mask, -np.inf, scores)
        probs = softmax(scores)
        ctx = probs @ vh
        ctx2 = ctx.transpose(0, 2, 1, 3).reshape(B, T, cfg.d_model)
        attn_out = ctx2 @ params[p + "attn.wo"] + params[p + "attn.bo"]
        x_attn = x + attn_out

        m, ln2_cache = _layernorm(x_attn, params[p + "ln2.g"], params[p + "ln2.b"])
        h_pre = m @ params[p + "mlp.w1"] + params[p + "mlp.b1"]
        h = _gelu(h_pre)
        x = x_attn + h @ params[p + "mlp.w2"] + params[p + "mlp.b2"]

        if want_cache:
            cache["layers"].append(
                {"a": a, "ln1": ln1_cache, "qh": qh, "kh": kh, "vh": vh,
                 "probs": probs, "ctx2": ctx2, "m": m, "ln2": ln2_cache,
                 "h_pre": h_pre, "h": h}
            )

    xf, lnf_cache = _layernorm(x, params["ln_f.g"], params["ln_f.b"])
    w_out = params["tok_emb"] if cfg.tie_embeddings else params["out_w"]
    logits = xf @ w_out.T
    if want_cache:
        cache["xf"] = xf
        cache["lnf"] = lnf_cache
        return logits.astype(dtype, copy=False), cache
    return logits.astype(dtype, copy=False)


def forward(ckpt: Checkpoint, tokens: Sequence[int]) -> np.ndarray:
    """Logits [seq x vocab]; position t depends only on tokens <= t."""
    ids = _check_tokens(ckpt.config, np.asarray(tokens))
    logits = _forward(ckpt.params, ckpt.config, ids)
    return logits[0] if np.asarray(tokens).ndim == 1 else logits


def loss(logits: np.ndarray, targets: Sequence[int]) -> float:
    """Mean next-token cross-entropy in nats."""
    logits = np.asarray(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.shape[:-1] != targets.shape:
        raise ValueError("logits and targets shapes disagree")
    logp = log_softmax(logits.astype(np.float64))
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)
    return float(-picked.mean())


def loss_and_grads(
    params: dict[str, np.ndarray], cfg: ModelConfig, ids: np.ndarray, targets: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy and its gradient for every parameter tensor."""
    ids = _check_tokens(cfg, np.asarray(ids))
    targets = np.asarray(targets, dtype=np.int64)
    if targets.ndim == 1:
        targets = targets[None, :]
    if targets.shape != ids.shape:
        raise ValueError("targets must match token shape")

    logits, cache = _forward(params, cfg, ids, want_cache=True)
    B, T = ids.shape
    n = B * T
    dtype = params["tok_emb"].dtype
    head_dim = cfg.d_model // cfg.n_heads
    scale = 1.0 / math.sqrt(head_dim)

    probs_out = softmax(logits.astype(np.float64))
    loss_val = float(
        -np.take_along_axis(log_softmax(logits.astype(np.float64)), targets[..., None], -1).mean()
    )
    dlogits = probs_out.copy()
    np.put_along_axis(
        dlogits, targets[..., None],
        np.take_along_axis(dlogits, targets[..., None], -1) - 1.0, -1,
    )
    dlogits = (dlogits / n).astype(dtype)

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    w_out = params["tok_emb"] if cfg.tie_embeddings else params["out_w"]
    xf = cache["xf"]
    d_wout = np.einsum("btv,btd->vd", dlogits, xf)
    if cfg.tie_embeddings:
        grads["tok_emb"] += d_wout
    else:
        grads["out_w"] += d_wout
    dxf = dlogits @ w_out
    dx, dg, db = _layernorm_bwd(dxf, params["ln_f.g"], cache["lnf"])
    grads["ln_f.g"] += dg
    grads["ln_f.b"] += db

    for i in reversed(range(cfg.n_layers)):
        p = f"h{i}."
        lc = cache["layers"][i]

        # feed-forward branch
        dh = dx @ params[p + "mlp.w2"].T
        grads[p + "mlp.w2"] += lc["h"].reshape(-1, cfg.d_ff).T @ dx.reshape(-1, cfg.d_model)
        grads[p + "mlp.b2"] += dx.sum(axis=(0, 1))
        dh_pre = dh * _gelu_bwd(lc["h_pre"])
        dm = dh_pre @ params[p + "mlp.w1"].T
        grads[p + "mlp.w1"] += lc["m"].reshape(-1, cfg.d_model).T @ dh_pre.reshape(-1, cfg.d_ff)
        grads[p + "mlp.b1"] += dh_pre.sum(axis=(0, 1))
        dx_attn, dg, db = _layernorm_bwd(dm, params[p + "ln2.g"], lc["ln2"])
        grads[p + "ln2.g"] += dg
        grads[p + "ln2.b"] += db
        dx_attn = dx_attn + dx  # residual

        # attention branch
        dctx2 = dx_attn @ params[p + "attn.wo"].T
        grads[p + "attn.wo"] += (
            lc["ctx2"].reshape(-1, cfg.d_model).T @ dx_attn.reshape(-1, cfg.d_model)
        )
        grads[p + "attn.bo"] += dx_attn.sum(axis=(0, 1))
        dctx = dctx2.reshape(B, T, cfg.n_heads, head_dim).transpose(0, 2, 1, 3)
        dprobs = dctx @ lc["vh"].transpose(0, 1, 3, 2)
        dvh = lc["probs"].transpose(0, 1, 3, 2) @ dctx
        dscores = lc["probs"] * (dprobs - (dprobs * lc["probs"]).sum(axis=-1, keepdims=True))
        dqh = (dscores @ lc["kh"]) * scale
        dkh = (dscores.transpose(0, 1, 3, 2) @ lc["qh"]) * scale
        dq = dqh.transpose(0, 2, 1, 3).reshape(B, T, cfg.d_model)
        dk = dkh.transpose(0, 2, 1, 3).reshape(B, T, cfg.d_model)
        dv = dvh.transpose(0, 2, 1, 3).reshape(B, T, cfg.d_model)
        a2 = lc["a"].reshape(-1, cfg.d_model)
        grads[p + "attn.wq"] += a2.T @ dq.reshape(-1, cfg.d_model)
        grads[p + "attn.bq"] += dq.sum(axis=(0, 1))
        grads[p + "attn.wk"] += a2.T @ dk.reshape(-1, cfg.d_model)
        grads[p + "attn.bk"] += dk.sum(axis=(0, 1))
        grads[p + "attn.wv"] += a2.T @ dv.reshape(-1, cfg.d_model)
        grads[p + "attn.bv"] += dv.sum(axis=(0, 1))
        da = (
            dq @ params[p + "attn.wq"].T
            + dk @ params[p + "attn.wk"].T
            + dv @ params[p + "attn.wv"].T
        )
        dx_res, dg, db = _layernorm_bwd(da, params[p + "ln1.g"], lc["ln1"])
        grads[p + "ln1.g"] += dg
        grads[p + "ln1.b"] += db
        dx = dx_attn + dx_res

    np.add.at(grads["tok_emb"], cache["ids"].ravel(), dx.reshape(-1, cfg.d_model))
    grads["pos_emb"][:T] += dx.sum(axis=0)
    return loss_val, grads


def backward(ckpt: Checkpoint, tokens: Sequence[int], targets: Sequence[int]):
    """Gradients of the mean cross-entropy for all parameters."""
    _, grads = loss_and_grads(ckpt.params, ckpt.config, np.asarray(tokens), np.asarray(targets))
    return grads


@dataclass
class GenerateConfig:
    mode: str = "greedy"  # "greedy" | "top_p"
    temperature: float = 1.0
    top_p: float = 0.9
    seed: int = 0
    stop_id: int | None = None

    def __post_init__(self):
        if self.mode not in ("greedy", "top_p"):
            raise ValueError(f"unknown decode mode {self.mode!r}")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")


def generate(
    ckpt: Checkpoint, prompt: Sequence[int], max_new: int, cfg: GenerateConfig | None = None
) -> list[int]:
    """Extend the prompt token by token; greedy is deterministic outright,
    sampling is deterministic given the seed. Stops at max_new tokens, the
    stop token, or the context window edge."""
    cfg = cfg or GenerateConfig()
    ids = [int(t) for t in prompt]
    if len(ids) > ckpt.config.max_seq_len:
        raise ValueError("prompt exceeds the context window")
    rng = np.random.default_rng(cfg.seed)
    for _ in range(max_new):
        if len(ids) >= ckpt.config.max_seq_len:
            break
        logits = forward(ckpt, np.asarray(ids, dtype=np.int64))[-1]
        if cfg.mode == "greedy":
            nxt = int(np.argmax(logits))
        else:
            probs = softmax(logits.astype(np.float64) / cfg.temperature)
            order = np.argsort(-probs, kind="stable")
            csum = np.cumsum(probs[order])
            cut = int(np.searchsorted(csum, cfg.top_p) + 1)
            keep = order[:cut]
            kept = probs[keep] / probs[keep].sum()
            nxt = int(rng.choice(keep, p=kept))
        ids.append(nxt)
        if cfg.stop_id is not None and nxt == cfg.stop_id:
            break
    return ids
