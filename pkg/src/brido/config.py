"""
Run configuration.

A RunConfig is one JSON document holding every tunable of every command, so a
single file reproduces an experiment. Defaults are the best XSum settings:
N=32 candidates in N/8 = 4 groups, gamma=50, lambda=0.01 with the difference
margin, eta=0.3, alpha=31.
"""
import json
import os
from typing import Annotated, Any, Dict, List, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, model_validator

from brido.consensus import AlphaValue, ScoringConfig
from brido.contrastive import LossConfig, MarginScheme, MarginSpec
from brido.diverse_beam import BeamConfig
from brido.errors import ConfigVersionError
from brido.minority_sim import SimConfig
from brido.text_metrics import RougeVariant
from brido.toy_lm import TrainConfig

load_dotenv()

CONFIG_VERSION = 1
ROOT_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".."))
DEFAULT_OUTPUT_DIR = os.path.join(ROOT_DIR, "output")


def get_output_dir() -> str:
    """Directory for models and rendered reports, overridable through BRIDO_OUTPUT_DIR."""
    output_dir = os.getenv("BRIDO_OUTPUT_DIR", DEFAULT_OUTPUT_DIR)
    if not os.path.exists(output_dir):
        os.makedirs(output_dir)
    return output_dir


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    version: int = CONFIG_VERSION

    # --- Scoring ---
    variant: RougeVariant = RougeVariant.HARMONIC_R1R2
    alpha: AlphaValue = 31.0

    # --- Loss ---
    lam: float = Field(default=0.01, gt=0.0, alias="lambda")
    margin_scheme: MarginScheme = MarginScheme.DIFFERENCE
    gamma: float = Field(default=50.0, ge=0.0)
    beta: float = Field(default=1.0, ge=0.0)
    epsilon: float = Field(default=1e-6, gt=0.0, description="Finite-difference step for gradcheck.")
    grad_tolerance: float = Field(default=1e-5, gt=0.0)
    random_points: int = Field(default=0, ge=0, description="Random f vectors per pool in gradcheck; 0 checks the pool's own f-values.")

    # --- Diverse beam search ---
    eta: float = Field(default=0.3, ge=0.0)
    num_candidates: int = Field(default=32, ge=1)
    num_groups: int = Field(default=4, ge=1)
    max_length: int = Field(default=32, ge=1)
    min_length: int = Field(default=1, ge=1)

    # --- Toy model training ---
    learning_rate: float = Field(default=0.002, ge=0.0)
    epochs: int = Field(default=2, ge=0)
    num_buckets: int = Field(default=8, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)

    # --- Minority simulation ---
    num_slots: int = Field(default=4, ge=1)
    vocab_per_slot: int = Field(default=10, ge=2)
    halluc_prob: float = Field(default=0.2, ge=0.0, lt=1.0)
    pool_size: int = Field(default=16, ge=2)
    trials: int = Field(default=1000, ge=1)
    sim_alpha: AlphaValue = 0.0
    pool_sweep: List[int] = Field(default_factory=list)

    # --- Experiment sweeps ---
    alpha_sweep: List[AlphaValue] = Field(default_factory=list, description="Reference weights compared by train and simulate.")
    eta_sweep: List[Annotated[float, Field(ge=0.0)]] = Field(default_factory=list, description="Diversity penalties compared by train.")

    # --- Paths ---
    pools_path: Optional[str] = None
    corpus_path: Optional[str] = None
    heldout_path: Optional[str] = None
    model_path: Optional[str] = None
    output_path: Optional[str] = None

    @model_validator(mode="after")
    def _sub_configs_valid(self):
        self.scoring_config()
        self.beam_config()
        self.sim_config()
        for alpha in self.alpha_sweep:
            ScoringConfig(alpha=alpha, variant=self.variant)
        return self

    def scoring_config(self) -> ScoringConfig:
        return ScoringConfig(alpha=self.alpha, variant=self.variant)

    def margin_spec(self) -> MarginSpec:
        return MarginSpec(scheme=self.margin_scheme, lam=self.lam)

    def loss_config(self) -> LossConfig:
        return LossConfig(gamma=self.gamma, beta=self.beta)

    def beam_config(self) -> BeamConfig:
        return BeamConfig(
            eta=self.eta,
            num_groups=self.num_groups,
            num_candidates=self.num_candidates,
            max_length=self.max_length,
            min_length=self.min_length,
            beta=self.beta,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            loss_cfg=self.loss_config(),
            margin=self.margin_spec(),
            scoring=self.scoring_config(),
            beam=self.beam_config(),
            seed=self.seed,
        )

    def sim_config(self) -> SimConfig:
        return SimConfig(
            num_slots=self.num_slots,
            vocab_per_slot=self.vocab_per_slot,
            halluc_prob=self.halluc_prob,
            pool_size=self.pool_size,
            trials=self.trials,
            alpha=self.sim_alpha,
            variant=self.variant,
            seed=self.seed,
        )


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Reads a config file (if any) and applies non-None overrides on top, then validates."""
    data: Dict[str, Any] = {}
    if path:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        version = data.get("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigVersionError(f"{path}: config version {version!r} is not supported (expected {CONFIG_VERSION})")
    for key, value in (overrides or {}).items():
        if value is not None:
            if key == "lam":
                data.pop("lambda", None)
            data[key] = value
    return RunConfig.model_validate(data)


def dump_run_config(cfg: RunConfig) -> str:
    """Canonical JSON form, using the public 'lambda' key."""
    return json.dumps(cfg.model_dump(mode="json", by_alias=True), indent=2, sort_keys=True)
