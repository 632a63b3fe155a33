"""
Inter-candidate consensus scoring.

A candidate's score blends its mean ROUGE against the other candidates of its
pool with its ROUGE against the reference:

    score_i = (sum_{j != i} R(S_i, S_j) + alpha * R(S_i, S*)) / (N - 1 + alpha)

alpha = 0 is the reference-less limit, alpha = INFINITY the reference-only
(BRIO) limit, handled as an exact branch.
"""
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from brido.errors import InsufficientCandidatesError, MissingReferenceError
from brido.text_metrics import RougeVariant, TokenSequence, composite_rouge

INFINITY = "infinity"
AlphaValue = Union[Literal["infinity"], float]


class Candidate(BaseModel):
    model_config = ConfigDict(frozen=True)

    seq: TokenSequence
    token_logprobs: Optional[Tuple[float, ...]] = None

    @model_validator(mode="after")
    def _logprobs_align(self):
        if self.token_logprobs is not None:
            if len(self.token_logprobs) != len(self.seq.tokens):
                raise ValueError(
                    f"token_logprobs has {len(self.token_logprobs)} entries "
                    f"for {len(self.seq.tokens)} tokens"
                )
            if any(lp > 0.0 for lp in self.token_logprobs):
                raise ValueError("token log-probabilities must be <= 0")
        return self


class CandidatePool(BaseModel):
    model_config = ConfigDict(frozen=True)

    source: TokenSequence
    reference: Optional[TokenSequence] = None
    candidates: Tuple[Candidate, ...]

    def __len__(self) -> int:
        return len(self.candidates)


class ScoringConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: AlphaValue = Field(default=31.0, description="Reference weight, or 'infinity' for the BRIO limit.")
    variant: RougeVariant = RougeVariant.HARMONIC_R1R2

    @model_validator(mode="after")
    def _alpha_range(self):
        if not self.is_brio_limit and not (self.alpha >= 0.0 and np.isfinite(self.alpha)):
            raise ValueError(f"alpha must be >= 0 or '{INFINITY}', got {self.alpha}")
        return self

    @property
    def is_brio_limit(self) -> bool:
        return self.alpha == INFINITY

    @property
    def needs_reference(self) -> bool:
        return self.is_brio_limit or self.alpha > 0.0


class Ranking(BaseModel):
    """order[k] is the original index of the k-th best candidate."""
    model_config = ConfigDict(frozen=True)

    order: Tuple[int, ...]
    scores: Tuple[float, ...]

    @property
    def ranked_scores(self) -> List[float]:
        return [self.scores[i] for i in self.order]


def pairwise_rouge_matrix(pool: CandidatePool, v: RougeVariant) -> np.ndarray:
    """Symmetric N x N matrix of candidate-vs-candidate ROUGE; diagonal is 1."""
    n = len(pool.candidates)
    if n < 2:
        raise InsufficientCandidatesError(f"consensus scoring needs at least 2 candidates, got {n}")
    matrix = np.eye(n, dtype=np.float64)
    seqs = [c.seq for c in pool.candidates]
    for i in range(n):
        for j in range(i + 1, n):
            matrix[i, j] = matrix[j, i] = composite_rouge(seqs[i], seqs[j], v)
    return matrix


def reference_scores(pool: CandidatePool, v: RougeVariant) -> List[float]:
    if pool.reference is None:
        raise MissingReferenceError("scoring against the reference requires a reference")
    return [composite_rouge(c.seq, pool.reference, v) for c in pool.candidates]


def consensus_from_matrix(
    matrix: np.ndarray,
    ref_scores: Optional[Sequence[float]],
    alpha: AlphaValue,
) -> List[float]:
    """Applies the consensus formula to a precomputed pairwise matrix."""
    n = matrix.shape[0]
    if n < 2:
        raise InsufficientCandidatesError(f"consensus scoring needs at least 2 candidates, got {n}")
    needs_reference = alpha == INFINITY or alpha > 0.0
    if needs_reference and ref_scores is None:
        raise MissingReferenceError("alpha > 0 requires reference scores")
    if alpha == INFINITY:
        return [float(s) for s in ref_scores]
    scores = []
    for i in range(n):
        total = 0.0
        for j in range(n):
            if j != i:
                total += float(matrix[i, j])
        if alpha > 0.0:
            total += alpha * ref_scores[i]
        scores.append(total / (n - 1 + alpha))
    return scores


def consensus_score(pool: CandidatePool, cfg: ScoringConfig) -> List[float]:
    n = len(pool.candidates)
    if n < 2:
        raise InsufficientCandidatesError(f"consensus scoring needs at least 2 candidates, got {n}")
    if cfg.needs_reference and pool.reference is None:
        raise MissingReferenceError(f"alpha={cfg.alpha} requires a reference summary")
    if cfg.is_brio_limit:
        return brio_score(pool, cfg.variant)
    ref = reference_scores(pool, cfg.variant) if cfg.needs_reference else None
    return consensus_from_matrix(pairwise_rouge_matrix(pool, cfg.variant), ref, cfg.alpha)


def brio_score(pool: CandidatePool, v: RougeVariant) -> List[float]:
    """Reference-only score R(S, S*)."""
    return reference_scores(pool, v)


def rank(scores: Sequence[float]) -> Ranking:
    """Descending by score, ties by ascending original index."""
    if len(scores) == 0:
        raise ValueError("cannot rank an empty score list")
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return Ranking(order=tuple(order), scores=tuple(float(s) for s in scores))


def select_best(pool: CandidatePool, cfg: ScoringConfig) -> int:
    """Index of the consensus-best candidate."""
    return rank(consensus_score(pool, cfg)).order[0]
