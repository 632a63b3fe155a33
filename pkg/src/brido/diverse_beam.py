"""
Diverse beam search over an abstract next-token model.

The N requested candidates are split into N_g groups of equal width. At each
timestep the groups are expanded in order; inside a group this is ordinary
beam search on cumulative log-probability, except that for groups after the
first the selection score of token w is lowered by eta times the number of
times earlier groups picked w at the same timestep (Hamming diversity).
Penalties only steer selection: candidates carry the model's true token
log-probabilities.
"""
from typing import List, NamedTuple, Optional, Protocol, Sequence, Tuple

import numpy as np
from langsmith import traceable
from pydantic import BaseModel, ConfigDict, Field, model_validator

from brido.consensus import Candidate
from brido.contrastive import f_value
from brido.errors import BeamSearchError, ModelContractError
from brido.text_metrics import TokenSequence

NORMALISATION_TOLERANCE = 1e-9


class NextTokenModel(Protocol):
    """Anything that yields a normalised next-token distribution given a source and prefix."""

    @property
    def target_vocabulary(self) -> Sequence[str]:
        """Index k of the returned log-probabilities refers to target_vocabulary[k]."""

    @property
    def eos_token(self) -> str:
        ...

    def next_token_logprobs(self, source: TokenSequence, prefix: Sequence[str]) -> np.ndarray:
        ...


class BeamConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    eta: float = Field(default=0.3, ge=0.0, description="Diversity penalty.")
    num_groups: int = Field(default=4, ge=1)
    num_candidates: int = Field(default=32, ge=1)
    max_length: int = Field(default=32, ge=1)
    min_length: int = Field(default=1, ge=1, description="End-of-sequence is forbidden before this many tokens.")
    beta: float = Field(default=1.0, ge=0.0, description="Length penalty used for the final ordering.")

    @model_validator(mode="after")
    def _groups_divide_candidates(self):
        if self.num_candidates % self.num_groups != 0:
            raise ValueError(
                f"num_candidates ({self.num_candidates}) must be a multiple of num_groups ({self.num_groups})"
            )
        return self

    @property
    def group_width(self) -> int:
        return self.num_candidates // self.num_groups


class Hypothesis(NamedTuple):
    tokens: Tuple[str, ...]
    logprobs: Tuple[float, ...]
    score: float  # penalised running score, selection only
    finished: bool


class _Expansion(NamedTuple):
    key: float
    hypothesis: Hypothesis
    token_index: Optional[int]  # None for a frozen beam carried over


def _checked_logprobs(model: NextTokenModel, source: TokenSequence, prefix: Sequence[str]) -> np.ndarray:
    logprobs = np.asarray(model.next_token_logprobs(source, prefix), dtype=np.float64)
    if logprobs.shape != (len(model.target_vocabulary),):
        raise ModelContractError(f"expected {len(model.target_vocabulary)} log-probabilities, got shape {logprobs.shape}")
    if np.any(np.isnan(logprobs)) or not np.any(np.isfinite(logprobs)):
        raise BeamSearchError(f"model assigns zero probability to every token after prefix {list(prefix)}")
    total = np.logaddexp.reduce(logprobs)
    if abs(total) > NORMALISATION_TOLERANCE:
        raise ModelContractError(f"next-token probabilities sum to {np.exp(total)!r}, not 1")
    return logprobs


def _expand_group(
    model: NextTokenModel,
    source: TokenSequence,
    beams: List[Hypothesis],
    penalty: np.ndarray,
    width: int,
    step: int,
    min_length: int,
) -> List[_Expansion]:
    vocab = model.target_vocabulary
    eos_index = list(vocab).index(model.eos_token)
    pool: List[_Expansion] = []
    for beam in beams:
        if beam.finished:
            pool.append(_Expansion(beam.score, beam, None))
            continue
        logprobs = _checked_logprobs(model, source, beam.tokens)
        selection = beam.score + logprobs - penalty
        for k, token in enumerate(vocab):
            if not np.isfinite(logprobs[k]):
                continue
            key = float(selection[k])
            if k == eos_index:
                if step < min_length:
                    continue
                pool.append(_Expansion(key, Hypothesis(beam.tokens, beam.logprobs, key, True), k))
            else:
                extended = Hypothesis(beam.tokens + (token,), beam.logprobs + (float(logprobs[k]),), key, False)
                pool.append(_Expansion(key, extended, k))
    if not pool:
        raise BeamSearchError(f"no expandable token at step {step}")
    # stable sort: ties keep beam order, then vocabulary order
    pool.sort(key=lambda e: -e.key)
    selected = pool[:width]
    # too few live expansions: repeat the best ones so the group keeps its width
    k = 0
    while len(selected) < width:
        selected.append(selected[k])
        k += 1
    return selected


@traceable(run_type="chain", name="diverse_beam_search")
def diverse_beam_search_groups(
    model: NextTokenModel,
    source: TokenSequence,
    cfg: BeamConfig,
) -> List[List[Hypothesis]]:
    """Runs the grouped search and returns the final hypotheses of each group."""
    if len(model.target_vocabulary) == 0:
        raise BeamSearchError("model vocabulary is empty")
    width = cfg.group_width
    groups = [[Hypothesis((), (), 0.0, False)] for _ in range(cfg.num_groups)]

    for step in range(cfg.max_length):
        if all(h.finished for group in groups for h in group):
            break
        counts = np.zeros(len(model.target_vocabulary), dtype=np.float64)
        for g in range(cfg.num_groups):
            if all(h.finished for h in groups[g]):
                continue
            expansions = _expand_group(model, source, groups[g], cfg.eta * counts, width, step, cfg.min_length)
            for e in expansions:
                if e.token_index is not None:
                    counts[e.token_index] += 1.0
            groups[g] = [e.hypothesis for e in expansions]
    return groups


def diverse_beam_search(model: NextTokenModel, source: TokenSequence, cfg: BeamConfig) -> List[Candidate]:
    """N candidates ordered by descending f-value, ties by group then beam index."""
    groups = diverse_beam_search_groups(model, source, cfg)
    keyed = []
    for g, group in enumerate(groups):
        for b, h in enumerate(group):
            candidate = Candidate(seq=TokenSequence.from_tokens(h.tokens), token_logprobs=h.logprobs)
            keyed.append((f_value(candidate, cfg.beta), g, b, candidate))
    keyed.sort(key=lambda item: (-item[0], item[1], item[2]))
    return [candidate for _, _, _, candidate in keyed]
