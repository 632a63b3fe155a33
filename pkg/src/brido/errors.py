"""
Exception hierarchy for the BRIDO toolkit.

Every error raised on purpose by the library derives from BridoError, which
itself is a ValueError so callers treating bad inputs generically keep working.
"""
from typing import Optional


class BridoError(ValueError):
    """Base class for all toolkit errors."""


class InsufficientCandidatesError(BridoError):
    """A pool has fewer candidates than the operation needs."""


class MissingReferenceError(BridoError):
    """Reference-dependent scoring was requested on a pool without a reference."""


class MissingLogprobsError(BridoError):
    """A candidate lacks the token log-probabilities an operation consumes."""


class InvalidRankPairError(BridoError):
    """A rank pair (i, j) did not satisfy i < j."""


class KinkProximityError(BridoError):
    """A gradient-check point sits too close to a hinge kink; resample it."""


class BeamSearchError(BridoError):
    """The search reached a state with no expandable token."""


class ModelContractError(BridoError):
    """A next-token model returned something that is not a distribution."""


class VocabularyError(BridoError):
    """Undersized vocabulary or out-of-vocabulary token."""


class ConfigVersionError(BridoError):
    """Config file declares a version this build does not understand."""


class IngestError(BridoError):
    """A JSON-lines input could not be turned into pools."""

    def __init__(self, line: int, message: str, candidate_index: Optional[int] = None):
        self.line = line
        self.candidate_index = candidate_index
        where = f"line {line}"
        if candidate_index is not None:
            where += f", candidate {candidate_index}"
        super().__init__(f"{where}: {message}")
