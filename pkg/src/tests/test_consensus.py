"""
Consensus Scoring Tests.

Hand-arithmetic examples of the consensus formula, the reference-only limit,
ranking tie-breaks and randomized invariants over generated pools.
"""
import sys
import os
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import random

import numpy as np
import pytest
from pydantic import ValidationError

from brido.consensus import (
    INFINITY,
    Candidate,
    CandidatePool,
    ScoringConfig,
    brio_score,
    consensus_from_matrix,
    consensus_score,
    pairwise_rouge_matrix,
    rank,
    reference_scores,
    select_best,
)
from brido.errors import InsufficientCandidatesError, MissingReferenceError
from brido.text_metrics import RougeVariant, TokenSequence, composite_rouge, tokenize

HAND_MATRIX = np.array([
    [1.0, 0.5, 0.3],
    [0.5, 1.0, 0.7],
    [0.3, 0.7, 1.0],
])


def _pool(texts, reference=None, source="source text"):
    return CandidatePool(
        source=tokenize(source),
        reference=tokenize(reference) if reference is not None else None,
        candidates=tuple(Candidate(seq=tokenize(t)) for t in texts),
    )


def _random_pool(rng, n, with_reference=True):
    vocab = ["a", "b", "c", "d", "e", "f"]
    def seq():
        return TokenSequence.from_tokens([rng.choice(vocab) for _ in range(rng.randint(1, 8))])
    return CandidatePool(
        source=seq(),
        reference=seq() if with_reference else None,
        candidates=tuple(Candidate(seq=seq()) for _ in range(n)),
    )


def test_consensus_hand_example_alpha_zero():
    assert consensus_from_matrix(HAND_MATRIX, None, 0.0) == pytest.approx([0.4, 0.6, 0.5], abs=1e-15)


def test_consensus_hand_example_alpha_one():
    scores = consensus_from_matrix(HAND_MATRIX, [0.2, 0.4, 0.6], 1.0)
    assert scores == pytest.approx([1 / 3, 8 / 15, 8 / 15], abs=1e-15)


def test_consensus_infinity_returns_reference_scores():
    assert consensus_from_matrix(HAND_MATRIX, [0.2, 0.4, 0.6], INFINITY) == [0.2, 0.4, 0.6]


def test_rank_examples():
    assert rank([0.4, 0.6, 0.5]).order == (1, 2, 0)
    assert rank([0.3, 0.3, 0.3, 0.3]).order == (0, 1, 2, 3)
    assert rank([0.7]).order == (0,)
    assert rank([0.4, 0.6, 0.5]).ranked_scores == [0.6, 0.5, 0.4]
    with pytest.raises(ValueError):
        rank([])


def test_pairwise_matrix_trivial_cases():
    same = pairwise_rouge_matrix(_pool(["a b c", "a b c"]), RougeVariant.R1)
    assert same[0, 1] == 1.0 and same[1, 0] == 1.0
    disjoint = pairwise_rouge_matrix(_pool(["a b", "c d"]), RougeVariant.R1)
    assert disjoint[0, 1] == 0.0


def test_pairwise_matrix_hand_values():
    pool = _pool(["a b c", "a b c d", "a x y z"])
    matrix = pairwise_rouge_matrix(pool, RougeVariant.R1)
    expected = np.array([
        [1.0, 6 / 7, 2 / 7],
        [6 / 7, 1.0, 1 / 4],
        [2 / 7, 1 / 4, 1.0],
    ])
    assert np.allclose(matrix, expected, atol=1e-15)
    scores = consensus_score(pool, ScoringConfig(alpha=0.0, variant=RougeVariant.R1))
    assert scores == pytest.approx([4 / 7, 31 / 56, 15 / 56])
    assert select_best(pool, ScoringConfig(alpha=0.0, variant=RougeVariant.R1)) == 0


def test_errors():
    with pytest.raises(InsufficientCandidatesError):
        pairwise_rouge_matrix(_pool(["a b"]), RougeVariant.R1)
    with pytest.raises(InsufficientCandidatesError):
        consensus_score(_pool(["a b"], reference="a"), ScoringConfig(alpha=0.0))
    with pytest.raises(MissingReferenceError):
        consensus_score(_pool(["a b", "b c"]), ScoringConfig(alpha=1.0))
    with pytest.raises(MissingReferenceError):
        brio_score(_pool(["a b", "b c"]), RougeVariant.R1)
    with pytest.raises(ValidationError):
        ScoringConfig(alpha=-1.0)


def test_alpha_zero_needs_no_reference():
    scores = consensus_score(_pool(["a b", "a c", "b c"]), ScoringConfig(alpha=0.0))
    assert len(scores) == 3


def test_brio_trivial_cases():
    pool = _pool(["the cat sat", "dogs bark loudly"], reference="the cat sat")
    assert brio_score(pool, RougeVariant.R1) == [1.0, 0.0]


def test_limit_agreement_on_random_pools():
    rng = random.Random(7)
    for _ in range(100):
        pool = _random_pool(rng, rng.randint(2, 8))
        for v in (RougeVariant.HARMONIC_R1R2, RougeVariant.MEAN_R1R2RL):
            limit = consensus_score(pool, ScoringConfig(alpha=INFINITY, variant=v))
            brio = brio_score(pool, v)
            assert limit == brio
            assert rank(limit).order == rank(brio).order


def test_reference_independence_at_alpha_zero():
    rng = random.Random(11)
    cfg = ScoringConfig(alpha=0.0, variant=RougeVariant.R1)
    for _ in range(100):
        pool = _random_pool(rng, rng.randint(2, 6))
        replaced = pool.model_copy(update={"reference": TokenSequence.from_tokens(["zz", "yy"])})
        removed = pool.model_copy(update={"reference": None})
        assert consensus_score(pool, cfg) == consensus_score(replaced, cfg) == consensus_score(removed, cfg)


def test_permutation_equivariance():
    rng = random.Random(3)
    cfg = ScoringConfig(alpha=2.0, variant=RougeVariant.MEAN_R1R2RL)
    for _ in range(50):
        pool = _random_pool(rng, rng.randint(2, 7))
        perm = list(range(len(pool)))
        rng.shuffle(perm)
        permuted = pool.model_copy(update={"candidates": tuple(pool.candidates[p] for p in perm)})
        base = consensus_score(pool, cfg)
        assert consensus_score(permuted, cfg) == pytest.approx([base[p] for p in perm], abs=1e-12)


def test_scores_lie_between_peer_mean_and_reference():
    rng = random.Random(5)
    for _ in range(50):
        pool = _random_pool(rng, rng.randint(2, 6))
        matrix = pairwise_rouge_matrix(pool, RougeVariant.HARMONIC_R1R2)
        ref = reference_scores(pool, RougeVariant.HARMONIC_R1R2)
        n = len(pool)
        for alpha in (0.5, 3.0, 31.0):
            scores = consensus_score(pool, ScoringConfig(alpha=alpha))
            for i in range(n):
                peer_mean = (matrix[i].sum() - matrix[i, i]) / (n - 1)
                lo, hi = min(peer_mean, ref[i]), max(peer_mean, ref[i])
                assert lo - 1e-12 <= scores[i] <= hi + 1e-12


def test_matrix_is_exactly_symmetric():
    rng = random.Random(9)
    for _ in range(20):
        pool = _random_pool(rng, rng.randint(2, 8))
        matrix = pairwise_rouge_matrix(pool, RougeVariant.RL)
        assert np.array_equal(matrix, matrix.T)
        i, j = 0, len(pool) - 1
        assert matrix[i, j] == composite_rouge(pool.candidates[i].seq, pool.candidates[j].seq, RougeVariant.RL)


def test_candidate_logprob_validation():
    seq = tokenize("a b")
    assert Candidate(seq=seq, token_logprobs=[-0.1, -0.2]).token_logprobs == (-0.1, -0.2)
    with pytest.raises(ValidationError):
        Candidate(seq=seq, token_logprobs=[-0.1])
    with pytest.raises(ValidationError):
        Candidate(seq=seq, token_logprobs=[-0.1, 0.5])
