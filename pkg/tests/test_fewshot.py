import json
import math

import numpy as np
import pytest

from lmadapt.bpe import END_OF_TEXT, Vocab
from lmadapt.fewshot import (
    EvalResult,
    Task,
    TaskItem,
    binomial_stderr,
    build_prompt,
    evaluate,
    load_task,
    score_choice,
    write_per_item_csv,
)
from lmadapt.model import Checkpoint, ModelConfig, forward, init_params, log_softmax


POOL = [
    TaskItem("Sky color?", ("green", "blue"), 1),
    TaskItem("Grass color?", ("green", "blue"), 0),
    TaskItem("Sun color?", ("yellow", "purple"), 0),
]


def bytes_vocab():
    return Vocab([], [END_OF_TEXT])


def uniform_ckpt(vocab_size=300, seq=512):
    """All-zero weights (unit LN gains): every logit row is constant."""
    cfg = ModelConfig(vocab_size=vocab_size, n_layers=1, n_heads=1, d_model=4, max_seq_len=seq)
    params = init_params(cfg, seed=0)
    for name, arr in params.items():
        if not name.endswith(".g"):
            arr[...] = 0.0
    return Checkpoint(cfg, params)


# ---------------------------------------------------------------- prompt

def test_zero_shot_prompt_is_bare_context():
    item = TaskItem("Q?", ("a", "b"), 0)
    assert build_prompt(item, k=0, pool=POOL, seed=5) == "Q?"

def test_prompt_deterministic_per_seed():
    item = TaskItem("Q?", ("a", "b"), 0)
    p1 = build_prompt(item, k=2, pool=POOL, seed=7)
    p2 = build_prompt(item, k=2, pool=POOL, seed=7)
    assert p1 == p2
    assert build_prompt(item, k=2, pool=POOL, seed=8) != p1

def test_two_shot_prompt_matches_hand_rendered_template():
    item = TaskItem("Snow color?", ("white", "black"), 0)
    idx = np.random.default_rng(3).choice(len(POOL), size=2, replace=False)
    expected = "\n".join(
        [f"{POOL[i].context} {POOL[i].choices[POOL[i].gold]}" for i in idx]
        + ["Snow color?"]
    )
    assert build_prompt(item, k=2, pool=POOL, seed=3) == expected

def test_prompt_pool_too_small():
    item = TaskItem("Q?", ("a", "b"), 0)
    with pytest.raises(ValueError):
        build_prompt(item, k=5, pool=POOL[:2], seed=0)


# --------------------------------------------------------------- scoring

def test_empty_choice_scores_zero():
    assert score_choice(uniform_ckpt(), bytes_vocab(), "whatever", "") == 0.0

def test_uniform_model_choice_scores_minus_m_log_v():
    vocab = bytes_vocab()
    ckpt = uniform_ckpt(vocab_size=len(vocab))
    choice = "abc"  # 3 byte tokens
    got = score_choice(ckpt, vocab, "xy", choice)
    assert got == pytest.approx(-3 * math.log(len(vocab)), rel=1e-6)

def test_score_matches_manual_probability_chain():
    # tiny trained model; oracle reads softmax probabilities per position
    vocab = bytes_vocab()
    cfg = ModelConfig(vocab_size=len(vocab), n_layers=1, n_heads=2, d_model=8, max_seq_len=32)
    ckpt = Checkpoint(cfg, init_params(cfg, seed=5))
    prompt, choice = "ab", "cd"
    p_ids = vocab.encode(prompt)
    c_ids = vocab.encode(choice)
    ids = p_ids + c_ids
    logits = forward(ckpt, np.asarray(ids[:-1]))
    logp = log_softmax(logits.astype(np.float64))
    expected = sum(
        float(logp[len(p_ids) - 1 + i, tok]) for i, tok in enumerate(c_ids)
    )
    assert score_choice(ckpt, vocab, prompt, choice) == pytest.approx(expected, rel=1e-12)

def test_overlong_input_rejected_not_truncated():
    vocab = bytes_vocab()
    ckpt = uniform_ckpt(vocab_size=len(vocab), seq=8)
    with pytest.raises(ValueError):
        score_choice(ckpt, vocab, "abcdefgh", "ij")


# -------------------------------------------------------------- evaluate

def make_task(golds, n_choices=3):
    # all choices same byte length so a uniform model ties every choice
    words = ["aaa", "bbb", "ccc", "ddd"]
    items = [
        TaskItem(f"query number {i}", tuple(words[:n_choices]), g)
        for i, g in enumerate(golds)
    ]
    pool = [TaskItem(f"pool item {i}", tuple(words[:n_choices]), 0) for i in range(6)]
    return Task(name="toy", items=items, fewshot_pool=pool)

def test_all_correct_gives_one_and_zero_stderr():
    result = EvalResult(accuracy=1.0, stderr=binomial_stderr(1.0, 10), n=10, k=0,
                        seed=0, per_item=[])
    assert result.accuracy == 1.0 and result.stderr == 0.0

def test_three_of_four_accuracy_and_stderr():
    # uniform model predicts index 0 on tied scores
    task = make_task([0, 0, 0, 1])
    vocab = bytes_vocab()
    result = evaluate(uniform_ckpt(len(vocab)), vocab, task, k=0, seed=0)
    assert result.accuracy == 0.75
    assert result.stderr == pytest.approx(math.sqrt(0.75 * 0.25 / 4), abs=1e-12)
    assert result.stderr == pytest.approx(0.2165, abs=1e-4)

def test_uniform_model_tie_break_predicts_index_zero():
    golds = [0, 1, 2, 0, 1, 0]
    task = make_task(golds)
    vocab = bytes_vocab()
    result = evaluate(uniform_ckpt(len(vocab)), vocab, task, k=2, seed=1)
    assert all(r.pred == 0 for r in result.per_item)
    assert result.accuracy == golds.count(0) / len(golds)

def test_stderr_three_decimal_rounding():
    assert f"{binomial_stderr(0.231, 900):.3f}" == "0.014"

def test_result_format_matches_reporting_style():
    r = EvalResult(accuracy=0.231, stderr=binomial_stderr(0.231, 900), n=900,
                   k=5, seed=0, per_item=[])
    assert r.format() == "0.231±0.014"

def test_stderr_recomputable_from_per_item_log():
    task = make_task([0, 1, 0, 0, 2])
    vocab = bytes_vocab()
    result = evaluate(uniform_ckpt(len(vocab)), vocab, task, k=0, seed=0)
    acc = sum(r.correct for r in result.per_item) / len(result.per_item)
    assert result.accuracy == acc
    assert result.stderr == binomial_stderr(acc, len(result.per_item))

def test_permuting_choices_with_gold_preserves_accuracy():
    # a trained (non-tied-score) model must give the identical accuracy
    # when every item's choices are reversed along with its gold index
    vocab = bytes_vocab()
    cfg = ModelConfig(vocab_size=len(vocab), n_layers=1, n_heads=2, d_model=8,
                      max_seq_len=64)
    ckpt = Checkpoint(cfg, init_params(cfg, seed=9))
    golds = [0, 1, 2, 1, 0]
    words = ("maple", "cedar", "birch")
    base = Task(
        name="base",
        items=[TaskItem(f"tree {i}", words, g) for i, g in enumerate(golds)],
        fewshot_pool=[],
    )
    flipped = Task(
        name="flipped",
        items=[
            TaskItem(f"tree {i}", tuple(reversed(words)), len(words) - 1 - g)
            for i, g in enumerate(golds)
        ],
        fewshot_pool=[],
    )
    r1 = evaluate(ckpt, vocab, base, k=0, seed=0)
    r2 = evaluate(ckpt, vocab, flipped, k=0, seed=0)
    assert r1.accuracy == r2.accuracy
    # no exact ties on this model, so predictions map through the permutation
    for a, b in zip(r1.per_item, r2.per_item):
        assert b.pred == len(words) - 1 - a.pred


def test_zero_and_five_shot_share_scoring_path():
    task = make_task([0, 1, 0, 2])
    vocab = bytes_vocab()
    ckpt = uniform_ckpt(len(vocab))
    r0 = evaluate(ckpt, vocab, task, k=0, seed=0)
    r5 = evaluate(ckpt, vocab, task, k=5, seed=0)
    # uniform model: prompts differ but tied scores still pick index 0
    assert [r.pred for r in r0.per_item] == [r.pred for r in r5.per_item]


# ------------------------------------------------------------------ task IO

def test_task_pool_overlap_rejected():
    shared = TaskItem("Q?", ("a", "b"), 0)
    with pytest.raises(ValueError):
        Task(name="bad", items=[shared], fewshot_pool=[shared])

def test_gold_index_validation():
    with pytest.raises(ValueError):
        TaskItem("Q?", ("a", "b"), 2)
    with pytest.raises(ValueError):
        TaskItem("Q?", ("only",), 0)

def test_load_task_and_write_csv(tmp_path):
    items = [{"context": f"q{i}", "choices": ["aaa", "bbb", "ccc"], "gold": i % 3}
             for i in range(4)]
    pool = [{"context": f"p{i}", "choices": ["aaa", "bbb", "ccc"], "gold": 0}
            for i in range(6)]
    (tmp_path / "items.jsonl").write_text("\n".join(json.dumps(r) for r in items))
    (tmp_path / "pool.jsonl").write_text("\n".join(json.dumps(r) for r in pool))
    (tmp_path / "task.json").write_text(json.dumps(
        {"name": "toy", "items": "items.jsonl", "fewshot_pool": "pool.jsonl"}
    ))
    task = load_task(tmp_path / "task.json")
    assert task.name == "toy"
    assert len(task.items) == 4 and len(task.fewshot_pool) == 6

    vocab = bytes_vocab()
    result = evaluate(uniform_ckpt(len(vocab)), vocab, task, k=3, seed=0)
    write_per_item_csv(result, tmp_path / "items.csv")
    lines = (tmp_path / "items.csv").read_text().strip().splitlines()
    assert lines[0] == "item,gold,pred,correct,scores,norm_scores"
    assert len(lines) == 5
