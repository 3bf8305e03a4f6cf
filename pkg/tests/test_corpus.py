import json
import random
from collections import Counter

import numpy as np
import pytest

from lmadapt.corpus import (
    CleanerConfig,
    Document,
    NgramModel,
    calibrate_threshold,
    clean,
    clean_corpus,
    ingest,
    perplexity,
    split,
    stats,
    stats_from_rows,
)


def doc(i, text, sub="public", genre="misc"):
    return Document(id=f"d{i:03d}", subcorpus=sub, genre=genre, text=text)


# ---------------------------------------------------------------- ingest

def test_ingest_empty_file(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    result = ingest(p, format="jsonl")
    assert result.documents == []
    assert result.n_malformed == 0

def test_ingest_skips_malformed_lines(tmp_path):
    p = tmp_path / "corpus.jsonl"
    lines = [
        json.dumps({"id": "a", "subcorpus": "public", "genre": "web", "text": "hola"}),
        "{this is not json",
        json.dumps({"id": "b", "subcorpus": "transfer", "genre": "press", "text": "ola"}),
    ]
    p.write_text("\n".join(lines) + "\n")
    result = ingest(p, format="jsonl")
    assert [d.id for d in result.documents] == ["a", "b"]
    assert result.n_malformed == 1

def test_ingest_rejects_bad_subcorpus_and_duplicates(tmp_path):
    p = tmp_path / "corpus.jsonl"
    lines = [
        json.dumps({"id": "a", "subcorpus": "public", "genre": "g", "text": "x"}),
        json.dumps({"id": "a", "subcorpus": "public", "genre": "g", "text": "y"}),
        json.dumps({"id": "b", "subcorpus": "nope", "genre": "g", "text": "z"}),
    ]
    p.write_text("\n".join(lines) + "\n")
    result = ingest(p, format="jsonl")
    assert [d.id for d in result.documents] == ["a"]
    assert result.n_malformed == 2

def test_ingest_plain_dir_sorted(tmp_path):
    for name in ["c.txt", "a.txt", "b.txt"]:
        (tmp_path / name).write_text(f"contents of {name}")
    result = ingest(tmp_path, format="plain_dir")
    assert [d.id for d in result.documents] == ["a.txt", "b.txt", "c.txt"]
    assert result.n_malformed == 0

def test_ingest_missing_path():
    with pytest.raises(FileNotFoundError):
        ingest("/nonexistent/corpus.jsonl")


# ------------------------------------------------------------ perplexity

def oracle_bigram_perplexity(train_texts, score_text, alpha=1.0):
    """Independent add-alpha bigram scorer: raw counting, product of
    probabilities, no shared code with the package. Each training text
    starts from the sentence-start context."""
    if isinstance(train_texts, str):
        train_texts = [train_texts]
    vocab = {"<unk>"}
    bigrams = Counter()
    context_totals = Counter()
    for text in train_texts:
        prev = "<s>"
        for t in text.split():
            vocab.add(t)
            bigrams[(prev, t)] += 1
            context_totals[prev] += 1
            prev = t
    prob = 1.0
    prev = "<s>"
    score_toks = score_text.split()
    for t in score_toks:
        t_mapped = t if t in vocab else "<unk>"
        p = (bigrams[(prev, t_mapped)] + alpha) / (context_totals[prev] + alpha * len(vocab))
        prob *= p
        prev = t_mapped
    return prob ** (-1.0 / len(score_toks))

def test_uniform_model_perplexity_is_vocab_size():
    model = NgramModel.uniform(100)
    text = " ".join(f"w{i}" for i in range(50))
    assert perplexity(text, model) == pytest.approx(100.0, rel=1e-9)

def test_single_type_model_gives_perplexity_one():
    model = NgramModel.uniform(1)
    assert perplexity("anything at all here", model) == pytest.approx(1.0, rel=1e-12)

def test_bigram_perplexity_matches_hand_oracle():
    # p(a|<s>) = (1+1)/(1+3) = 0.5, p(b|a) = (2+1)/(2+3) = 0.6
    # ppl = (0.5 * 0.6) ** -0.5 = 1.8257418583505538
    model = NgramModel.train(["a b a b"], order=2, alpha=1.0)
    got = perplexity("a b", model)
    assert got == pytest.approx(1.8257418583505538, rel=1e-12)
    assert got == pytest.approx(oracle_bigram_perplexity("a b a b", "a b"), rel=1e-12)

def test_perplexity_rejects_empty_text():
    model = NgramModel.uniform(10)
    with pytest.raises(ValueError):
        perplexity("   ", model)


# ----------------------------------------------------------------- clean

PROSE = [
    "the cat sat on the mat and the dog sat on the rug .",
    "the dog ran to the park and the cat ran to the house .",
    "a bird sang in the tree while the cat slept on the mat .",
    "the sun rose over the hill and the birds sang in the trees .",
    "the children played in the park until the sun went down .",
]

def _gibberish(rng, n_words=12):
    return " ".join(
        "".join(rng.choice("qxzjvkw") for _ in range(rng.randint(4, 9)))
        for _ in range(n_words)
    )

def test_clean_short_document_dropped():
    cfg = CleanerConfig(ppl_threshold=100.0, min_chars=1, model=NgramModel.uniform(10))
    decision = clean(doc(0, ""), cfg)
    assert not decision.keep
    assert decision.reason == "too_short"

def test_clean_threshold_from_calibration_set():
    # oracle: score a 20-doc toy set directly, set the cut at the 95th
    # percentile, and check gibberish lands above it and prose below
    model = NgramModel.train(PROSE, order=2, alpha=1.0)
    rng = random.Random(11)
    calibration = [d for d in PROSE] + [PROSE[i % len(PROSE)] + " " + PROSE[(i + 1) % len(PROSE)]
                                        for i in range(15)]
    assert len(calibration) == 20
    oracle_ppls = [oracle_bigram_perplexity(PROSE, text) for text in calibration]
    threshold = float(np.percentile(oracle_ppls, 95))
    assert threshold == pytest.approx(calibrate_threshold(
        [perplexity(t, model) for t in calibration], 95.0), rel=1e-9)

    cfg = CleanerConfig(ppl_threshold=threshold, min_chars=1, model=model)
    noisy = clean(doc(1, _gibberish(rng)), cfg)
    assert not noisy.keep and noisy.reason == "high_perplexity"
    natural = clean(doc(2, PROSE[0]), cfg)
    assert natural.keep

def test_clean_monotone_in_threshold():
    model = NgramModel.train(PROSE, order=2, alpha=1.0)
    text = _gibberish(random.Random(3))
    ppl = perplexity(text, model)
    hi = CleanerConfig(ppl_threshold=ppl + 1.0, min_chars=0, model=model)
    lo = CleanerConfig(ppl_threshold=max(ppl / 2.0, 1.1), min_chars=0, model=model)
    assert clean(doc(0, text), hi).keep
    dropped = clean(doc(0, text), lo)
    assert not dropped.keep and dropped.reason == "high_perplexity"

def test_clean_corpus_worker_count_does_not_change_decisions():
    model = NgramModel.train(PROSE, order=2, alpha=1.0)
    cfg = CleanerConfig(ppl_threshold=20.0, min_chars=1, model=model)
    docs = [doc(i, PROSE[i % len(PROSE)]) for i in range(10)]
    serial = clean_corpus(docs, cfg, workers=1)
    parallel = clean_corpus(docs, cfg, workers=4)
    assert [(d.id, dec) for d, dec in serial] == [(d.id, dec) for d, dec in parallel]


# ----------------------------------------------------------------- stats

TRANSFER_ROWS = [
    {"subcorpus": "transfer", "genre": "Books", "tokens": 7_255_784, "documents": 104},
    {"subcorpus": "transfer", "genre": "Research articles", "tokens": 2_665_351, "documents": 664},
    {"subcorpus": "transfer", "genre": "Press", "tokens": 124_253_084, "documents": 224_419},
    {"subcorpus": "transfer", "genre": "Governmental", "tokens": 245_897_880, "documents": 654_505},
    {"subcorpus": "transfer", "genre": "Web contents", "tokens": 15_946_686, "documents": 44_165},
    {"subcorpus": "transfer", "genre": "Encyclopedic", "tokens": 4_799_214, "documents": 47_396},
]

def test_stats_transfer_subtotal_rows():
    st = stats_from_rows(TRANSFER_ROWS)
    assert st.subtotal("transfer") == (400_817_999, 971_253)

def test_stats_total_from_subtotals():
    st = stats_from_rows([
        {"subcorpus": "transfer", "genre": "all", "tokens": 400_817_999, "documents": 971_253},
        {"subcorpus": "public", "genre": "all", "tokens": 1_728_404_399, "documents": 8_777_514},
    ])
    assert st.total == (2_129_222_398, 9_748_767)

def test_stats_empty_corpus():
    st = stats([])
    assert st.rows == []
    assert st.total == (0, 0)

def test_stats_counts_whitespace_tokens_and_invariants():
    docs = [
        doc(0, "one two three", sub="transfer", genre="press"),
        doc(1, "four five", sub="transfer", genre="press"),
        doc(2, "six", sub="transfer", genre="books"),
        doc(3, "seven eight nine ten", sub="public", genre="web"),
    ]
    st = stats(docs)
    by_key = {(r.subcorpus, r.genre): r for r in st.rows}
    assert by_key[("transfer", "press")].tokens == 5
    assert by_key[("transfer", "press")].documents == 2
    assert st.subtotal("transfer") == (6, 3)
    assert st.subtotal("public") == (4, 1)
    total_rows = (sum(r.tokens for r in st.rows), sum(r.documents for r in st.rows))
    assert st.total == total_rows == (10, 4)

def test_stats_render_table_shows_totals():
    table = stats_from_rows(TRANSFER_ROWS).render_table()
    assert "400,817,999" in table
    assert "971,253" in table


# ----------------------------------------------------------------- split

def test_split_cardinality_and_disjointness():
    docs = [doc(i, f"text {i}") for i in range(10)]
    train, held = split(docs, 0.2, seed=7)
    assert len(train) == 8 and len(held) == 2
    assert set(d.id for d in train) & set(d.id for d in held) == set()
    assert set(d.id for d in train) | set(d.id for d in held) == set(d.id for d in docs)

def test_split_deterministic():
    docs = [doc(i, f"text {i}") for i in range(25)]
    a = split(docs, 0.3, seed=42)
    b = split(docs, 0.3, seed=42)
    assert [d.id for d in a[0]] == [d.id for d in b[0]]
    assert [d.id for d in a[1]] == [d.id for d in b[1]]

def test_split_half_of_two():
    docs = [doc(0, "a"), doc(1, "b")]
    train, held = split(docs, 0.5, seed=0)
    assert len(train) == 1 and len(held) == 1

def test_split_rejects_bad_fraction():
    docs = [doc(0, "a")]
    for frac in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            split(docs, frac, seed=0)

def test_split_rejects_empty_corpus():
    with pytest.raises(ValueError):
        split([], 0.5, seed=0)
