"""
Toy conditional token model.

A logits table indexed by (source bucket, previous token, next token) with a
softmax over the next-token axis. It is small enough that every gradient of the
multi-task objective can be written in closed form and checked by brute force,
and it plugs into diverse beam search as a NextTokenModel.
"""
import hashlib
import json
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import log_softmax, softmax
from scipy.stats import kendalltau

from brido.consensus import Candidate, CandidatePool, ScoringConfig, consensus_score, rank
from brido.contrastive import (
    LossBreakdown,
    LossConfig,
    MarginSpec,
    combined_loss,
    ctr_loss,
    ctr_loss_grad,
    f_value,
    f_value_grad,
)
from brido.diverse_beam import BeamConfig, diverse_beam_search
from brido.errors import ConfigVersionError, VocabularyError
from brido.rng import Xoshiro256StarStar
from brido.text_metrics import TokenSequence, composite_rouge, tokenize

BOS = "<s>"
EOS = "</s>"
MODEL_FORMAT_VERSION = 1
INIT_SCALE = 0.1


class ToyModelParams(BaseModel):
    """
    Parameters of the toy model.

    Attributes:
        vocabulary: [BOS, EOS, content tokens...].
        logits: shape (num_buckets, |vocabulary|, |vocabulary| - 1). Rows are the
            previous token (BOS included); columns are the target vocabulary
            (EOS + content), since BOS is never predicted.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    vocabulary: Tuple[str, ...]
    logits: np.ndarray

    @model_validator(mode="after")
    def _shape_matches_vocabulary(self):
        if self.vocabulary[:2] != (BOS, EOS):
            raise VocabularyError("vocabulary must start with BOS and EOS")
        v = len(self.vocabulary)
        if v < 3:
            raise VocabularyError(f"vocabulary needs BOS, EOS and at least one content token, got {v} tokens")
        if self.logits.ndim != 3 or self.logits.shape[1:] != (v, v - 1) or self.logits.shape[0] < 1:
            raise VocabularyError(f"logits shape {self.logits.shape} does not match vocabulary size {v}")
        return self

    # --- NextTokenModel ---

    @property
    def target_vocabulary(self) -> Tuple[str, ...]:
        return self.vocabulary[1:]

    @property
    def eos_token(self) -> str:
        return EOS

    def next_token_logprobs(self, source: TokenSequence, prefix: Sequence[str]) -> np.ndarray:
        prev = prefix[-1] if prefix else BOS
        return self.row_logprobs(self.bucket(source), self.prev_index(prev))

    # --- Table access ---

    @property
    def num_buckets(self) -> int:
        return self.logits.shape[0]

    def bucket(self, source: TokenSequence) -> int:
        digest = hashlib.blake2b(" ".join(source.tokens).encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.num_buckets

    def prev_index(self, token: str) -> int:
        try:
            return self.vocabulary.index(token)
        except ValueError:
            raise VocabularyError(f"token {token!r} is not in the vocabulary") from None

    def target_index(self, token: str) -> int:
        if token == BOS:
            raise VocabularyError("BOS is never a target token")
        return self.prev_index(token) - 1

    def row_logprobs(self, bucket: int, prev: int) -> np.ndarray:
        return log_softmax(self.logits[bucket, prev])

    def with_logits(self, logits: np.ndarray) -> "ToyModelParams":
        return ToyModelParams(vocabulary=self.vocabulary, logits=logits)


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(default=0.002, ge=0.0)
    epochs: int = Field(default=2, ge=0)
    loss_cfg: LossConfig = LossConfig()
    margin: MarginSpec = MarginSpec()
    scoring: ScoringConfig = ScoringConfig()
    beam: BeamConfig = BeamConfig()
    seed: int = Field(default=0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _pool_needs_peers(self):
        if self.beam.num_candidates < 2:
            raise ValueError("training needs at least 2 candidates per pool")
        return self


# --- Construction ---

def init_model(vocab: Sequence[str], num_buckets: int, seed: int, zero: bool = False) -> ToyModelParams:
    """Seeded uniform [-0.1, 0.1] logits (or all zeros) over BOS, EOS and the content tokens."""
    content = [t for t in vocab if t not in (BOS, EOS)]
    if not content:
        raise VocabularyError("vocabulary needs at least one content token besides BOS and EOS")
    if len(set(content)) != len(content):
        raise VocabularyError("vocabulary contains duplicate tokens")
    for token in content:
        if tokenize(token).tokens != (token,):
            raise VocabularyError(f"content token {token!r} is not a single lowercase alphanumeric token")
    if num_buckets < 1:
        raise ValueError(f"num_buckets must be >= 1, got {num_buckets}")
    vocabulary = (BOS, EOS) + tuple(content)
    v = len(vocabulary)
    shape = (num_buckets, v, v - 1)
    if zero:
        logits = np.zeros(shape, dtype=np.float64)
    else:
        rng = Xoshiro256StarStar(seed)
        count = num_buckets * v * (v - 1)
        logits = np.array(rng.uniform_list(count, -INIT_SCALE, INIT_SCALE), dtype=np.float64).reshape(shape)
    return ToyModelParams(vocabulary=vocabulary, logits=logits)


def vocabulary_from_corpus(corpus: Sequence[Tuple[TokenSequence, TokenSequence]]) -> List[str]:
    """Content tokens of all references, in first-seen order."""
    seen: Dict[str, None] = {}
    for _, reference in corpus:
        for token in reference.tokens:
            seen.setdefault(token, None)
    return list(seen)


# --- Scoring ---

def _steps(tokens: Sequence[str], append_eos: bool) -> List[str]:
    return list(tokens) + ([EOS] if append_eos else [])


def sequence_logprob(
    params: ToyModelParams,
    source: TokenSequence,
    tokens: Sequence[str],
    append_eos: bool = False,
) -> List[float]:
    """Per-token log-probabilities, the first step conditioned on BOS."""
    b = params.bucket(source)
    prev = BOS
    out = []
    for token in _steps(tokens, append_eos):
        out.append(float(params.row_logprobs(b, params.prev_index(prev))[params.target_index(token)]))
        prev = token
    return out


def _accumulate_grad(
    grad: np.ndarray,
    params: ToyModelParams,
    bucket: int,
    tokens: Sequence[str],
    coeffs: Sequence[float],
):
    """grad += sum_t coeffs[t] * d logprob_t / d logits."""
    prev = BOS
    for token, c in zip(tokens, coeffs):
        p = params.prev_index(prev)
        probs = softmax(params.logits[bucket, p])
        grad[bucket, p] -= c * probs
        grad[bucket, p, params.target_index(token)] += c
        prev = token


def objective(
    params: ToyModelParams,
    source: TokenSequence,
    reference: TokenSequence,
    candidates: Sequence[Candidate],
    scores: Sequence[float],
    cfg: TrainConfig,
) -> Tuple[LossBreakdown, np.ndarray]:
    """
    Multi-task loss and its gradient with respect to the logits table.

    Candidates and their consensus scores are held fixed; f-values are
    recomputed from the current logits so the gradient is exact.
    """
    b = params.bucket(source)
    grad = np.zeros_like(params.logits)

    ref_steps = _steps(reference.tokens, append_eos=True)
    ref_logprobs = sequence_logprob(params, source, reference.tokens, append_eos=True)
    xent = -sum(ref_logprobs) / len(ref_logprobs)
    _accumulate_grad(grad, params, b, ref_steps, [-1.0 / len(ref_steps)] * len(ref_steps))

    ranking = rank(scores)
    beta = cfg.loss_cfg.beta
    ranked = [candidates[i] for i in ranking.order]
    rescored = [
        Candidate(seq=c.seq, token_logprobs=tuple(sequence_logprob(params, source, c.seq.tokens)))
        for c in ranked
    ]
    f = [f_value(c, beta) for c in rescored]
    scores_ranked = ranking.ranked_scores
    ctr = ctr_loss(f, scores_ranked, cfg.margin)

    gamma = cfg.loss_cfg.gamma
    if gamma > 0.0:
        grad_f = ctr_loss_grad(f, scores_ranked, cfg.margin)
        for c, g in zip(rescored, grad_f):
            if g == 0.0:
                continue
            coeffs = [gamma * g * d for d in f_value_grad(c, beta)]
            _accumulate_grad(grad, params, b, c.seq.tokens, coeffs)

    return combined_loss(xent, ctr, cfg.loss_cfg), grad


def generate_pool(params: ToyModelParams, source: TokenSequence, reference: Optional[TokenSequence], beam: BeamConfig) -> CandidatePool:
    candidates = diverse_beam_search(params, source, beam)
    return CandidatePool(source=source, reference=reference, candidates=tuple(candidates))


def rank_agreement(
    params: ToyModelParams,
    corpus: Sequence[Tuple[TokenSequence, TokenSequence]],
    cfg: TrainConfig,
) -> float:
    """Mean Kendall tau between f-values and consensus scores over freshly generated pools."""
    taus = []
    for source, reference in corpus:
        pool = generate_pool(params, source, reference, cfg.beam)
        scores = consensus_score(pool, cfg.scoring)
        f = [f_value(c, cfg.loss_cfg.beta) for c in pool.candidates]
        tau = kendalltau(f, scores)[0]
        if not np.isnan(tau):
            taus.append(float(tau))
    return sum(taus) / len(taus) if taus else 0.0


def selection_rouge(
    params: ToyModelParams,
    corpus: Sequence[Tuple[TokenSequence, TokenSequence]],
    cfg: TrainConfig,
) -> float:
    """Mean reference ROUGE of the candidate the model itself prefers (highest f-value, lowest index on ties)."""
    if not corpus:
        return 0.0
    total = 0.0
    for source, reference in corpus:
        pool = generate_pool(params, source, reference, cfg.beam)
        f = [f_value(c, cfg.loss_cfg.beta) for c in pool.candidates]
        best = max(range(len(f)), key=lambda i: (f[i], -i))
        total += composite_rouge(pool.candidates[best].seq, reference, cfg.scoring.variant)
    return total / len(corpus)


# --- Serialization ---

def save_model(params: ToyModelParams, path: str):
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "vocabulary": list(params.vocabulary),
        "num_buckets": params.num_buckets,
        "logits": params.logits.tolist(),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)
        f.write("\n")


def load_model(path: str) -> ToyModelParams:
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ConfigVersionError(f"unsupported model format_version {version!r}")
    logits = np.array(payload["logits"], dtype=np.float64)
    if logits.shape[0] != payload["num_buckets"]:
        raise VocabularyError("num_buckets does not match the logits table")
    return ToyModelParams(vocabulary=tuple(payload["vocabulary"]), logits=logits)
