"""
Text Metric Tests.

Tokenizer behaviour, hand-computed ROUGE values and a brute-force oracle
sweep over random token sequences.
"""
import sys
import os
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import random
from functools import lru_cache

import pytest
from pydantic import ValidationError

from brido.text_metrics import (
    RougeVariant,
    TokenSequence,
    BridoTokenizer,
    composite_rouge,
    rouge_l,
    rouge_n,
    rouge_scores,
    tokenize,
)


def test_tokenize_examples():
    assert tokenize("The cat, sat.").tokens == ("the", "cat", "sat")
    assert tokenize("").tokens == ()
    assert tokenize("A-B  c").tokens == ("a", "b", "c")
    assert tokenize("snake_case Ünïcode").tokens == ("snake", "case", "ünïcode")


def test_from_tokens_rejects_non_canonical_tokens():
    assert TokenSequence.from_tokens(["a", "b"]).text == "a b"
    with pytest.raises(ValidationError):
        TokenSequence.from_tokens(["A"])
    with pytest.raises(ValidationError):
        TokenSequence.from_tokens(["a-b"])


def test_rouge_hand_values():
    a = tokenize("the cat sat")
    b = tokenize("the cat ran")
    assert rouge_n(a, b, 1).f1 == pytest.approx(2 / 3)
    assert rouge_n(a, b, 2).f1 == pytest.approx(1 / 2)
    assert rouge_l(tokenize("a b c d"), tokenize("a c d b")).f1 == pytest.approx(3 / 4)


def test_rouge_backend_uses_project_tokenizer():
    # No stemming: "running" and "run" stay distinct tokens.
    assert BridoTokenizer().tokenize("Running, run_fast") == ["running", "run", "fast"]
    assert rouge_n(tokenize("running"), tokenize("run"), 1).f1 == 0.0
    assert rouge_n(tokenize("A-B c"), tokenize("a b c"), 2).f1 == 1.0


def test_rouge_precision_recall_direction():
    short = tokenize("a b c")
    long = tokenize("a b c d")
    score = rouge_n(short, long, 1)
    assert score.precision == 1.0
    assert score.recall == pytest.approx(0.75)
    assert score.f1 == pytest.approx(6 / 7)


def test_degenerate_inputs_score_zero():
    empty = tokenize("")
    one = tokenize("word")
    assert rouge_n(empty, one, 1).f1 == 0.0
    assert rouge_n(one, one, 2).f1 == 0.0
    assert rouge_l(empty, empty).f1 == 0.0
    assert composite_rouge(one, tokenize("other"), RougeVariant.HARMONIC_R1R2) == 0.0
    with pytest.raises(ValueError):
        rouge_n(one, one, 0)
    with pytest.raises(ValueError):
        rouge_n(one, one, 10)


def test_identical_sequences_score_one():
    a = tokenize("one two three four")
    for v in RougeVariant:
        assert composite_rouge(a, a, v) == pytest.approx(1.0)


def test_composites():
    a = tokenize("the cat sat on the mat")
    b = tokenize("the cat lay on a mat")
    r1 = rouge_n(a, b, 1).f1
    r2 = rouge_n(a, b, 2).f1
    rl = rouge_l(a, b).f1
    assert composite_rouge(a, b, RougeVariant.HARMONIC_R1R2) == pytest.approx(2 * r1 * r2 / (r1 + r2))
    assert composite_rouge(a, b, RougeVariant.MEAN_R1R2RL) == pytest.approx((r1 + r2 + rl) / 3)
    assert composite_rouge(a, b, "rougeL") == pytest.approx(rl)
    scores = rouge_scores(a, b)
    assert set(scores) == {"rouge1", "rouge2", "rougeL"}


def test_f1_is_symmetric():
    a = tokenize("a b a c")
    b = tokenize("b a c c d")
    for v in RougeVariant:
        assert composite_rouge(a, b, v) == pytest.approx(composite_rouge(b, a, v), abs=1e-15)


# --- Brute-force oracle ---

def _oracle_overlap(x, y, n):
    grams_x = [tuple(x[i:i + n]) for i in range(len(x) - n + 1)]
    grams_y = [tuple(y[i:i + n]) for i in range(len(y) - n + 1)]
    overlap = sum(min(grams_x.count(g), grams_y.count(g)) for g in set(grams_x))
    return overlap, len(grams_x), len(grams_y)


def _oracle_lcs(x, y):
    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(x) or j == len(y):
            return 0
        if x[i] == y[j]:
            return 1 + go(i + 1, j + 1)
        return max(go(i + 1, j), go(i, j + 1))
    return go(0, 0)


def _oracle_f1(overlap, size_x, size_y):
    if overlap == 0 or size_x == 0 or size_y == 0:
        return 0.0
    p = overlap / size_x
    r = overlap / size_y
    return 2.0 * p * r / (p + r)


def test_rouge_matches_brute_force_oracle():
    rng = random.Random(1234)
    vocab = ["a", "b", "c", "d", "e"]
    for _ in range(1000):
        x = [rng.choice(vocab) for _ in range(rng.randint(0, 12))]
        y = [rng.choice(vocab) for _ in range(rng.randint(0, 12))]
        a = TokenSequence.from_tokens(x)
        b = TokenSequence.from_tokens(y)
        for n in (1, 2):
            expected = _oracle_f1(*_oracle_overlap(x, y, n))
            assert abs(rouge_n(a, b, n).f1 - expected) < 1e-12
        lcs = _oracle_lcs(tuple(x), tuple(y))
        score_l = rouge_l(a, b)
        assert abs(score_l.f1 - _oracle_f1(lcs, len(x), len(y))) < 1e-12
        if x and y:
            assert score_l.precision == pytest.approx(lcs / len(x), abs=1e-12)
            assert score_l.recall == pytest.approx(lcs / len(y), abs=1e-12)
