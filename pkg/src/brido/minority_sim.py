"""
Monte-Carlo check of the minority conjecture.

Each trial builds a pool of candidates from a fact template. A candidate
replaces each slot's correct value by a uniformly drawn distractor with
probability halluc_prob. If hallucinated values are scattered while the correct
value is shared, consensus scoring should place faithful candidates above
hallucinated ones, increasingly so as the pool grows.
"""
from typing import List, Optional, Sequence, Tuple

from langsmith import traceable
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import pointbiserialr

from brido.consensus import AlphaValue, Candidate, CandidatePool, ScoringConfig, consensus_score, rank
from brido.logging_utils import log_activity
from brido.rng import Xoshiro256StarStar, derive_seed
from brido.text_metrics import RougeVariant, TokenSequence


class SimConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    num_slots: int = Field(default=4, ge=1, description="Facts per summary.")
    vocab_per_slot: int = Field(default=10, ge=2, description="Correct value plus distractors.")
    halluc_prob: float = Field(default=0.2, ge=0.0, lt=1.0)
    pool_size: int = Field(default=16, ge=2)
    trials: int = Field(default=1000, ge=1)
    alpha: AlphaValue = 0.0
    variant: RougeVariant = RougeVariant.HARMONIC_R1R2
    seed: int = Field(default=0, ge=0, lt=2**64)
    corrupt_reference: bool = False

    @property
    def scoring(self) -> ScoringConfig:
        return ScoringConfig(alpha=self.alpha, variant=self.variant)


class SimReport(BaseModel):
    """score_gap = mean_score_faithful - mean_score_hallucinated over contested trials."""
    pool_size: int
    alpha: AlphaValue
    top1_faithful_rate: float
    mean_score_faithful: float
    mean_score_hallucinated: float
    score_gap: float
    rank_correlation: float
    contested_trials: int
    trials_without_faithful: int
    score_gap_defined: bool
    correlation_defined: bool


def _slot_value(slot: int, value: int) -> str:
    return f"s{slot}v{value}"


def _render(values: Sequence[int]) -> TokenSequence:
    tokens: List[str] = []
    for slot, value in enumerate(values):
        tokens.extend(["the", f"attr{slot}", "is", _slot_value(slot, value)])
    return TokenSequence.from_tokens(tokens)


def _distractor(rng: Xoshiro256StarStar, vocab_per_slot: int) -> int:
    return 1 + rng.randbelow(vocab_per_slot - 1)


def generate_pool(cfg: SimConfig, trial_index: int) -> Tuple[CandidatePool, List[bool]]:
    """One trial's pool and per-candidate faithfulness labels."""
    rng = Xoshiro256StarStar(derive_seed(cfg.seed, trial_index))
    truth = [0] * cfg.num_slots
    candidates = []
    labels = []
    for _ in range(cfg.pool_size):
        values = []
        for _slot in range(cfg.num_slots):
            if rng.random() < cfg.halluc_prob:
                values.append(_distractor(rng, cfg.vocab_per_slot))
            else:
                values.append(0)
        candidates.append(Candidate(seq=_render(values)))
        labels.append(values == truth)
    reference_values = truth
    if cfg.corrupt_reference:
        reference_values = [_distractor(rng, cfg.vocab_per_slot) for _ in range(cfg.num_slots)]
    pool = CandidatePool(source=_render(truth), reference=_render(reference_values), candidates=tuple(candidates))
    return pool, labels


@traceable(run_type="chain", name="evaluate_conjecture")
def evaluate_conjecture(cfg: SimConfig, run_id: Optional[str] = None) -> SimReport:
    scoring = cfg.scoring
    all_scores: List[float] = []
    all_labels: List[bool] = []
    top1_hits = 0
    eligible = 0
    trials_without_faithful = 0
    sum_faithful = 0.0
    sum_hallucinated = 0.0
    contested = 0

    for trial in range(cfg.trials):
        pool, labels = generate_pool(cfg, trial)
        scores = consensus_score(pool, scoring)
        all_scores.extend(scores)
        all_labels.extend(labels)

        n_faithful = sum(labels)
        if n_faithful == 0:
            trials_without_faithful += 1
        else:
            eligible += 1
            if labels[rank(scores).order[0]]:
                top1_hits += 1

        if 0 < n_faithful < len(labels):
            contested += 1
            faithful = [s for s, ok in zip(scores, labels) if ok]
            hallucinated = [s for s, ok in zip(scores, labels) if not ok]
            sum_faithful += sum(faithful) / len(faithful)
            sum_hallucinated += sum(hallucinated) / len(hallucinated)

    mean_faithful = sum_faithful / contested if contested else 0.0
    mean_hallucinated = sum_hallucinated / contested if contested else 0.0

    correlation_defined = 0 < sum(all_labels) < len(all_labels) and len(set(all_scores)) > 1
    correlation = 0.0
    if correlation_defined:
        correlation = float(pointbiserialr(all_labels, all_scores)[0])

    report = SimReport(
        pool_size=cfg.pool_size,
        alpha=cfg.alpha,
        top1_faithful_rate=top1_hits / eligible if eligible else 0.0,
        mean_score_faithful=mean_faithful,
        mean_score_hallucinated=mean_hallucinated,
        score_gap=mean_faithful - mean_hallucinated,
        rank_correlation=correlation,
        contested_trials=contested,
        trials_without_faithful=trials_without_faithful,
        score_gap_defined=contested > 0,
        correlation_defined=correlation_defined,
    )
    log_activity(run_id, "Simulator", f"pool_size={cfg.pool_size}, alpha={cfg.alpha}, trials={cfg.trials}", metrics=report.model_dump(), status="DONE")
    return report


def sweep_pool_sizes(cfg: SimConfig, sizes: Sequence[int], run_id: Optional[str] = None) -> List[SimReport]:
    """The same experiment at several pool sizes; other settings unchanged."""
    return [
        evaluate_conjecture(SimConfig.model_validate({**cfg.model_dump(), "pool_size": size}), run_id=run_id)
        for size in sizes
    ]


def sweep_alphas(cfg: SimConfig, alphas: Sequence[AlphaValue], run_id: Optional[str] = None) -> List[SimReport]:
    """The same experiment at several reference weights, from reference-free to reference-only."""
    return [
        evaluate_conjecture(SimConfig.model_validate({**cfg.model_dump(), "alpha": alpha}), run_id=run_id)
        for alpha in alphas
    ]
