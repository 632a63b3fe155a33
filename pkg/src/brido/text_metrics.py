"""
Tokenization and ROUGE family metrics.

ROUGE is treated here as a symmetric-in-F1 lexical similarity between any two
token sequences, not only candidate-vs-reference. All scores are 64-bit floats
in [0, 1]; degenerate inputs (no n-grams, empty sequences) score 0.
Overlap counting is delegated to the rouge-score package, fed with this
module's tokenizer instead of its stemming default.
"""
import re
from enum import Enum
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator
from rouge_score import rouge_scorer, scoring, tokenizers

_SEPARATORS = re.compile(r"[\W_]+", re.UNICODE)


class TokenSequence(BaseModel):
    """A text and its deterministic tokenization."""
    model_config = ConfigDict(frozen=True)

    text: str
    tokens: Tuple[str, ...]

    @model_validator(mode="after")
    def _tokens_match_text(self):
        if any(not t for t in self.tokens):
            raise ValueError("tokens must be non-empty strings")
        if tuple(_split(self.text)) != self.tokens:
            raise ValueError("tokens must be the tokenization of text")
        return self

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "TokenSequence":
        """Builds a sequence from pre-split tokens; text is their space-joined form."""
        return cls(text=" ".join(tokens), tokens=tuple(tokens))

    def __len__(self) -> int:
        return len(self.tokens)


class RougeScore(BaseModel):
    model_config = ConfigDict(frozen=True)

    precision: float = Field(ge=0.0, le=1.0)
    recall: float = Field(ge=0.0, le=1.0)
    f1: float = Field(ge=0.0, le=1.0)


class RougeVariant(str, Enum):
    R1 = "rouge1"
    R2 = "rouge2"
    RL = "rougeL"
    HARMONIC_R1R2 = "harmonic_r1_r2"  # XSum ranking composite
    MEAN_R1R2RL = "mean_r1_r2_rl"  # CNN/DM ranking composite


def _split(text: str):
    return [t for t in _SEPARATORS.split(text.lower()) if t]


def tokenize(text: str) -> TokenSequence:
    """Lowercases and splits on runs of non-alphanumeric characters."""
    return TokenSequence(text=text, tokens=tuple(_split(text)))


# --- rouge-score backend ---

MAX_NGRAM_ORDER = 9  # rouge-score accepts rouge1 .. rouge9


class BridoTokenizer(tokenizers.Tokenizer):
    """Feeds rouge-score the same tokens as tokenize(), without stemming."""

    def tokenize(self, text: str) -> List[str]:
        return _split(text)


@lru_cache(maxsize=None)
def _scorer(*rouge_types: str) -> rouge_scorer.RougeScorer:
    return rouge_scorer.RougeScorer(list(rouge_types), tokenizer=BridoTokenizer())


def _to_rouge_score(score: scoring.Score) -> RougeScore:
    return RougeScore(precision=score.precision, recall=score.recall, f1=score.fmeasure)


def _score_pair(a: TokenSequence, b: TokenSequence, *rouge_types: str) -> Dict[str, RougeScore]:
    # rouge-score measures precision against the prediction, so a is the prediction.
    raw = _scorer(*rouge_types).score(target=b.text, prediction=a.text)
    return {key: _to_rouge_score(raw[key]) for key in rouge_types}


def rouge_n(a: TokenSequence, b: TokenSequence, n: int) -> RougeScore:
    """Clipped n-gram overlap; precision is relative to a, recall to b."""
    if not 1 <= n <= MAX_NGRAM_ORDER:
        raise ValueError(f"n must be in [1, {MAX_NGRAM_ORDER}], got {n}")
    rouge_type = f"rouge{n}"
    return _score_pair(a, b, rouge_type)[rouge_type]


def rouge_l(a: TokenSequence, b: TokenSequence) -> RougeScore:
    """Sentence-level ROUGE-L from the longest common subsequence."""
    return _score_pair(a, b, RougeVariant.RL.value)[RougeVariant.RL.value]


def composite_rouge(a: TokenSequence, b: TokenSequence, v: RougeVariant) -> float:
    """The F1 of one variant, or one of the two ranking composites."""
    v = RougeVariant(v)
    if v is RougeVariant.R1:
        return rouge_n(a, b, 1).f1
    if v is RougeVariant.R2:
        return rouge_n(a, b, 2).f1
    if v is RougeVariant.RL:
        return rouge_l(a, b).f1
    if v is RougeVariant.HARMONIC_R1R2:
        scores = _score_pair(a, b, RougeVariant.R1.value, RougeVariant.R2.value)
        r1 = scores[RougeVariant.R1.value].f1
        r2 = scores[RougeVariant.R2.value].f1
        if r1 + r2 == 0.0:
            return 0.0
        return 2.0 * r1 * r2 / (r1 + r2)
    scores = rouge_scores(a, b)
    return sum(s.f1 for s in scores.values()) / 3.0


def rouge_scores(a: TokenSequence, b: TokenSequence) -> Dict[str, RougeScore]:
    """R-1, R-2 and R-L together, keyed by variant value."""
    return _score_pair(a, b, RougeVariant.R1.value, RougeVariant.R2.value, RougeVariant.RL.value)
