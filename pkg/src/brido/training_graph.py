"""
This module uses LangGraph to define one step of multi-task training.
The step is a linear workflow: generate candidates with diverse beam search,
score and rank them by consensus, evaluate the cross-entropy + contrastive
objective with its gradient, and apply a plain gradient-descent update.
`train` runs the compiled step over a corpus for a number of epochs.
"""
import os
from typing import List, Optional, Sequence, Tuple, TypedDict

import numpy as np
from dotenv import load_dotenv
from langgraph.graph import END, StateGraph
from langsmith import traceable
from pydantic import BaseModel

from brido.consensus import Candidate, CandidatePool, consensus_score
from brido.contrastive import LossBreakdown
from brido.logging_utils import log_activity, log_system_event
from brido.text_metrics import TokenSequence
from brido.toy_lm import ToyModelParams, TrainConfig, generate_pool, objective

load_dotenv()


def check_tracing() -> str:
    """Describes whether LangSmith tracing is active for this process."""
    if os.getenv("LANGCHAIN_TRACING_V2") == "true":
        if not os.getenv("LANGCHAIN_API_KEY"):
            return "WARNING: LANGCHAIN_TRACING_V2 is true but LANGCHAIN_API_KEY is missing. Tracing may fail."
        return f"✅ LangSmith Tracing Enabled. Project: {os.getenv('LANGCHAIN_PROJECT', 'default')}"
    return "ℹ️ LangSmith Tracing is DISABLED. Set LANGCHAIN_TRACING_V2=true to enable."


# --- State Definition ---
class TrainState(TypedDict, total=False):
    """
    State flowing through one training step.

    Attributes:
        params: Model parameters before the update (replaced by apply_update).
        source: Source text conditioning the model.
        reference: Reference summary for the cross-entropy term and alpha > 0 scoring.
        cfg: Training configuration.
        run_id: Run log id, or None to disable logging.
        step: Global step counter, for logging only.
        candidates: Diverse-beam candidates for this source.
        scores: Consensus scores aligned with candidates.
        breakdown: Pre-update loss breakdown.
        grad: dL/dlogits, same shape as params.logits.
    """
    params: ToyModelParams
    source: TokenSequence
    reference: TokenSequence
    cfg: TrainConfig
    run_id: Optional[str]
    step: int
    candidates: List[Candidate]
    scores: List[float]
    breakdown: LossBreakdown
    grad: np.ndarray


class EpochTrace(BaseModel):
    epoch: int
    xent: float
    ctr: float
    total: float


# --- Nodes ---
@traceable(run_type="chain", name="generate_candidates")
def generate_candidates_node(state: TrainState):
    """Diverse beam search from the current parameters."""
    pool = generate_pool(state["params"], state["source"], state["reference"], state["cfg"].beam)
    return {"candidates": list(pool.candidates)}


@traceable(run_type="chain", name="score_candidates")
def score_candidates_node(state: TrainState):
    """Consensus scores for the freshly generated pool."""
    pool = CandidatePool(
        source=state["source"],
        reference=state["reference"],
        candidates=tuple(state["candidates"]),
    )
    return {"scores": consensus_score(pool, state["cfg"].scoring)}


@traceable(run_type="chain", name="compute_objective")
def compute_objective_node(state: TrainState):
    breakdown, grad = objective(
        state["params"], state["source"], state["reference"], state["candidates"], state["scores"], state["cfg"]
    )
    return {"breakdown": breakdown, "grad": grad}


@traceable(run_type="chain", name="apply_update")
def apply_update_node(state: TrainState):
    """One plain gradient-descent step; logs the pre-update losses."""
    params = state["params"]
    lr = state["cfg"].learning_rate
    updated = params.with_logits(params.logits - lr * state["grad"]) if lr > 0.0 else params
    breakdown = state["breakdown"]
    log_activity(
        state.get("run_id"),
        "Trainer",
        f"source: {state['source'].text[:60]}",
        step=state.get("step"),
        metrics=breakdown.model_dump(),
        status="UPDATED" if lr > 0.0 else "FROZEN",
    )
    return {"params": updated}


# --- Graph Construction ---
workflow = StateGraph(TrainState)

workflow.add_node("generate", generate_candidates_node)
workflow.add_node("score", score_candidates_node)
workflow.add_node("objective", compute_objective_node)
workflow.add_node("update", apply_update_node)

workflow.set_entry_point("generate")
workflow.add_edge("generate", "score")
workflow.add_edge("score", "objective")
workflow.add_edge("objective", "update")
workflow.add_edge("update", END)

train_step_graph = workflow.compile()


def train_step(
    params: ToyModelParams,
    source: TokenSequence,
    reference: TokenSequence,
    cfg: TrainConfig,
    run_id: Optional[str] = None,
    step: int = 0,
) -> Tuple[ToyModelParams, LossBreakdown]:
    """Runs one step of the workflow; returns updated params and the pre-update losses."""
    result = train_step_graph.invoke({
        "params": params,
        "source": source,
        "reference": reference,
        "cfg": cfg,
        "run_id": run_id,
        "step": step,
    })
    return result["params"], result["breakdown"]


def train(
    params: ToyModelParams,
    corpus: Sequence[Tuple[TokenSequence, TokenSequence]],
    cfg: TrainConfig,
    run_id: Optional[str] = None,
) -> Tuple[ToyModelParams, List[EpochTrace]]:
    """epochs x corpus sequential steps in corpus order; returns the per-epoch mean losses."""
    if not corpus:
        raise ValueError("training corpus is empty")
    log_system_event(run_id, "TRAIN_START", f"{len(corpus)} examples, {cfg.epochs} epochs, config: {cfg.model_dump_json()}")
    trace: List[EpochTrace] = []
    step = 0
    for epoch in range(cfg.epochs):
        xent = ctr = total = 0.0
        for source, reference in corpus:
            params, breakdown = train_step(params, source, reference, cfg, run_id=run_id, step=step)
            xent += breakdown.xent
            ctr += breakdown.ctr
            total += breakdown.total
            step += 1
        n = len(corpus)
        trace.append(EpochTrace(epoch=epoch, xent=xent / n, ctr=ctr / n, total=total / n))
        log_system_event(run_id, "EPOCH_END", trace[-1].model_dump_json())
    return params, trace
