"""
Rank-margin contrastive loss and its combination with cross-entropy.

Candidates are consumed in rank order (best first). For every ranked pair
i < j the hinge max(0, f_j - f_i + lambda_ij) asks the better candidate to
out-score the worse one by the target margin:

    fixed:      lambda_ij = (j - i) * lambda
    difference: lambda_ij = (score_i - score_j) * lambda

Under the fixed scheme, pairs with exactly equal scores are skipped.
"""
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from brido.consensus import Candidate
from brido.errors import (
    InsufficientCandidatesError,
    InvalidRankPairError,
    KinkProximityError,
    MissingLogprobsError,
)
from brido.rng import Xoshiro256StarStar


class MarginScheme(str, Enum):
    FIXED = "fixed"
    DIFFERENCE = "difference"


class MarginSpec(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    scheme: MarginScheme = MarginScheme.DIFFERENCE
    lam: float = Field(default=0.01, gt=0.0, alias="lambda")


class LossConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    gamma: float = Field(default=50.0, ge=0.0, description="Weight of the contrastive loss.")
    beta: float = Field(default=1.0, ge=0.0, description="Length-normalisation exponent.")


class LossBreakdown(BaseModel):
    model_config = ConfigDict(frozen=True)

    xent: float
    ctr: float = Field(ge=0.0)
    total: float


# --- f-values ---

def _require_logprobs(c: Candidate) -> Sequence[float]:
    if not c.token_logprobs:
        raise MissingLogprobsError("f-value requires non-empty token log-probabilities")
    return c.token_logprobs


def f_value(c: Candidate, beta: float) -> float:
    """Length-normalised log probability: sum(logprobs) / |c|^beta."""
    logprobs = _require_logprobs(c)
    return sum(logprobs) / (len(logprobs) ** beta)


def f_value_grad(c: Candidate, beta: float) -> List[float]:
    """d f / d logprob_t, identical for every token."""
    logprobs = _require_logprobs(c)
    return [1.0 / (len(logprobs) ** beta)] * len(logprobs)


# --- Margins and hinge terms ---

def margin(i: int, j: int, scores_ranked: Sequence[float], m: MarginSpec) -> float:
    """Target separation lambda_ij between the rank-i and rank-j candidates (0-based ranks)."""
    if i >= j:
        raise InvalidRankPairError(f"margin needs i < j, got i={i}, j={j}")
    if m.scheme is MarginScheme.FIXED:
        return (j - i) * m.lam
    return (scores_ranked[i] - scores_ranked[j]) * m.lam


def _hinge_arguments(f: Sequence[float], scores_ranked: Sequence[float], m: MarginSpec):
    """Yields (i, j, f_j - f_i + lambda_ij) for every pair that takes part in the loss."""
    n = len(f)
    if n < 2:
        raise InsufficientCandidatesError(f"contrastive loss needs at least 2 candidates, got {n}")
    if len(scores_ranked) != n:
        raise ValueError(f"{len(scores_ranked)} scores for {n} f-values")
    for i in range(n):
        for j in range(i + 1, n):
            if m.scheme is MarginScheme.FIXED and scores_ranked[i] == scores_ranked[j]:
                continue
            yield i, j, f[j] - f[i] + margin(i, j, scores_ranked, m)


def ctr_loss(f: Sequence[float], scores_ranked: Sequence[float], m: MarginSpec) -> float:
    """Sum over ranked pairs of max(0, f_j - f_i + lambda_ij)."""
    total = 0.0
    for _, _, arg in _hinge_arguments(f, scores_ranked, m):
        if arg > 0.0:
            total += arg
    return total


def ctr_loss_grad(f: Sequence[float], scores_ranked: Sequence[float], m: MarginSpec) -> List[float]:
    """Subgradient of ctr_loss with respect to the ranked f-values; kinks contribute 0."""
    grad = [0.0] * len(f)
    for i, j, arg in _hinge_arguments(f, scores_ranked, m):
        if arg > 0.0:
            grad[i] -= 1.0
            grad[j] += 1.0
    return grad


def combined_loss(xent: float, ctr: float, cfg: LossConfig) -> LossBreakdown:
    if ctr < 0.0:
        raise ValueError(f"contrastive loss must be non-negative, got {ctr}")
    return LossBreakdown(xent=xent, ctr=ctr, total=xent + cfg.gamma * ctr)


# --- Finite-difference verification ---

def grad_check(
    point: Sequence[float],
    scores_ranked: Sequence[float],
    m: MarginSpec,
    epsilon: float = 1e-6,
) -> float:
    """Max relative error between ctr_loss_grad and central differences of ctr_loss."""
    f = np.asarray(point, dtype=np.float64)
    for i, j, arg in _hinge_arguments(f, scores_ranked, m):
        if abs(arg) < 10.0 * epsilon:
            raise KinkProximityError(
                f"pair ({i}, {j}) hinge argument {arg:.3e} is within 10*epsilon of the kink; resample the point"
            )
    analytic = ctr_loss_grad(f, scores_ranked, m)
    worst = 0.0
    for k in range(len(f)):
        up = f.copy()
        down = f.copy()
        up[k] += epsilon
        down[k] -= epsilon
        numeric = (ctr_loss(up, scores_ranked, m) - ctr_loss(down, scores_ranked, m)) / (2.0 * epsilon)
        err = abs(numeric - analytic[k]) / max(1.0, abs(analytic[k]))
        worst = max(worst, float(err))
    return float(worst)


def random_grad_check(
    scores_ranked: Sequence[float],
    m: MarginSpec,
    epsilon: float = 1e-6,
    samples: int = 100,
    seed: int = 0,
    spread: float = 1.0,
    max_attempts: Optional[int] = None,
) -> float:
    """Worst grad_check error over random non-kink f vectors (kinks are resampled)."""
    rng = Xoshiro256StarStar(seed)
    max_attempts = max_attempts or 100 * samples
    worst = 0.0
    checked = 0
    attempts = 0
    while checked < samples:
        attempts += 1
        if attempts > max_attempts:
            raise KinkProximityError(f"could not draw {samples} non-kink points in {max_attempts} attempts")
        point = rng.uniform_list(len(scores_ranked), -spread, 0.0)
        try:
            worst = max(worst, grad_check(point, scores_ranked, m, epsilon))
        except KinkProximityError:
            continue
        checked += 1
    return float(worst)
