"""
Data ingestion, command implementations and report emission.

Every command returns a CommandResult holding JSON-ready records in input
order. Per-record failures become {"line": n, "error": "..."} entries so one
bad pool never stops a batch; the CLI turns the aggregate into an exit code.
"""
import json
import os
import sys
from typing import Any, Dict, Iterable, List, Optional, Tuple

from fpdf import FPDF
from fpdf.enums import XPos, YPos
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from brido.config import RunConfig, get_output_dir
from brido.consensus import Candidate, CandidatePool, brio_score, consensus_score, rank
from brido.contrastive import (
    combined_loss,
    ctr_loss,
    f_value,
    grad_check,
    random_grad_check,
)
from brido.diverse_beam import diverse_beam_search
from brido.errors import BridoError, IngestError, MissingLogprobsError, MissingReferenceError
from brido.logging_utils import log_activity, log_system_event
from brido.minority_sim import SimConfig, sweep_pool_sizes
from brido.rng import derive_seed
from brido.text_metrics import TokenSequence, tokenize
from brido.toy_lm import (
    ToyModelParams,
    init_model,
    load_model,
    rank_agreement,
    save_model,
    selection_rouge,
    vocabulary_from_corpus,
)
from brido.training_graph import train

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_CHECK_FAILED = 3


# --- Wire formats ---

class CandidateRecord(BaseModel):
    text: str
    token_logprobs: Optional[List[float]] = None


class PoolRecord(BaseModel):
    source: str
    reference: Optional[str] = None
    reference_token_logprobs: Optional[List[float]] = None
    candidates: List[CandidateRecord] = Field(default_factory=list)


class CorpusRecord(BaseModel):
    source: str
    reference: Optional[str] = None


class IngestedPool(BaseModel):
    model_config = ConfigDict(frozen=True)

    line: int
    pool: CandidatePool
    reference_logprobs: Optional[Tuple[float, ...]] = None


class CommandResult(BaseModel):
    records: List[Dict[str, Any]] = Field(default_factory=list)
    failures: int = 0
    check_failed: bool = False

    @property
    def exit_code(self) -> int:
        if self.failures:
            return EXIT_INPUT_ERROR
        if self.check_failed:
            return EXIT_CHECK_FAILED
        return EXIT_OK


# --- Ingestion ---

def read_jsonl(path: str) -> List[Tuple[int, Dict[str, Any]]]:
    """(line number, object) for every non-blank line, 1-based line numbers."""
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise IngestError(line_no, f"malformed JSON: {e.msg}") from e
            if not isinstance(obj, dict):
                raise IngestError(line_no, "expected a JSON object")
            rows.append((line_no, obj))
    return rows


def _to_pool(line_no: int, record: PoolRecord) -> IngestedPool:
    candidates = []
    for k, c in enumerate(record.candidates):
        seq = tokenize(c.text)
        if c.token_logprobs is not None and len(c.token_logprobs) != len(seq.tokens):
            raise IngestError(
                line_no,
                f"{len(c.token_logprobs)} token_logprobs for {len(seq.tokens)} tokens",
                candidate_index=k,
            )
        try:
            candidates.append(Candidate(seq=seq, token_logprobs=c.token_logprobs))
        except ValidationError as e:
            raise IngestError(line_no, str(e.errors()[0]["msg"]), candidate_index=k) from e
    pool = CandidatePool(
        source=tokenize(record.source),
        reference=tokenize(record.reference) if record.reference is not None else None,
        candidates=tuple(candidates),
    )
    return IngestedPool(line=line_no, pool=pool, reference_logprobs=_reference_logprobs(line_no, record, pool))


def _reference_logprobs(line_no: int, record: PoolRecord, pool: CandidatePool) -> Optional[Tuple[float, ...]]:
    """One log-probability per reference token plus the closing EOS, all <= 0."""
    logprobs = record.reference_token_logprobs
    if logprobs is None:
        return None
    if pool.reference is None:
        raise IngestError(line_no, "reference_token_logprobs given without a reference")
    expected = len(pool.reference.tokens) + 1
    if len(logprobs) != expected:
        raise IngestError(
            line_no,
            f"{len(logprobs)} reference_token_logprobs for {expected - 1} reference tokens plus EOS",
        )
    if any(lp > 0.0 for lp in logprobs):
        raise IngestError(line_no, "reference log-probabilities must be <= 0")
    return tuple(logprobs)


def ingest(path: str) -> List[IngestedPool]:
    """Tokenized pools in file order; the first bad line raises IngestError."""
    pools = []
    for line_no, obj in read_jsonl(path):
        try:
            record = PoolRecord.model_validate(obj)
        except ValidationError as e:
            raise IngestError(line_no, f"not a pool record: {e.errors()[0]['msg']}") from e
        pools.append(_to_pool(line_no, record))
    return pools


def ingest_corpus(path: str, require_reference: bool = True) -> List[Tuple[int, TokenSequence, Optional[TokenSequence]]]:
    rows = []
    for line_no, obj in read_jsonl(path):
        try:
            record = CorpusRecord.model_validate(obj)
        except ValidationError as e:
            raise IngestError(line_no, f"not a corpus record: {e.errors()[0]['msg']}") from e
        if require_reference and record.reference is None:
            raise IngestError(line_no, "training needs a reference")
        reference = tokenize(record.reference) if record.reference is not None else None
        rows.append((line_no, tokenize(record.source), reference))
    return rows


# --- Emission ---

def format_jsonl(records: Iterable[Dict[str, Any]]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)


def write_jsonl(records: Iterable[Dict[str, Any]], path: Optional[str] = None):
    """Writes records to path, or to stdout when path is None."""
    text = format_jsonl(records)
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def _error_record(line: int, error: Exception) -> Dict[str, Any]:
    return {"line": line, "error": f"{type(error).__name__}: {error}"}


def _run_per_pool(pools: List[IngestedPool], fn, run_id: Optional[str], command: str) -> CommandResult:
    result = CommandResult()
    for item in pools:
        try:
            record = fn(item)
            result.records.append(record)
            log_activity(run_id, command, f"line {item.line}", status="SUCCESS")
        except BridoError as e:
            result.records.append(_error_record(item.line, e))
            result.failures += 1
            log_activity(run_id, command, f"line {item.line}: {e}", status="FAILED")
    return result


# --- Scoring commands ---

def _scores(pool: CandidatePool, cfg: RunConfig, brio: bool) -> List[float]:
    if brio:
        return brio_score(pool, cfg.variant)
    return consensus_score(pool, cfg.scoring_config())


def cmd_score(pools: List[IngestedPool], cfg: RunConfig, brio: bool = False, run_id: Optional[str] = None) -> CommandResult:
    """Per-pool consensus (or reference-only) scores."""
    def one(item: IngestedPool):
        if brio and item.pool.reference is None:
            raise MissingReferenceError("brio mode requires a reference")
        return {"line": item.line, "scores": _scores(item.pool, cfg, brio)}
    return _run_per_pool(pools, one, run_id, "score")


def cmd_rank(pools: List[IngestedPool], cfg: RunConfig, brio: bool = False, run_id: Optional[str] = None) -> CommandResult:
    """Per-pool scores plus the descending order (0-based indices)."""
    def one(item: IngestedPool):
        if brio and item.pool.reference is None:
            raise MissingReferenceError("brio mode requires a reference")
        ranking = rank(_scores(item.pool, cfg, brio))
        return {"line": item.line, "scores": list(ranking.scores), "order": list(ranking.order)}
    return _run_per_pool(pools, one, run_id, "rank")


# --- Loss commands ---

def _ranked_f_values(item: IngestedPool, cfg: RunConfig):
    for k, c in enumerate(item.pool.candidates):
        if not c.token_logprobs:
            raise MissingLogprobsError(f"loss requires token log-probabilities (candidate {k} has none)")
    ranking = rank(consensus_score(item.pool, cfg.scoring_config()))
    f = [f_value(item.pool.candidates[i], cfg.beta) for i in ranking.order]
    return ranking, f


def cmd_loss(pools: List[IngestedPool], cfg: RunConfig, run_id: Optional[str] = None) -> CommandResult:
    """Contrastive loss over the consensus ranking, combined with xent when reference log-probs exist."""
    def one(item: IngestedPool):
        ranking, f = _ranked_f_values(item, cfg)
        ctr = ctr_loss(f, ranking.ranked_scores, cfg.margin_spec())
        xent = 0.0
        if item.reference_logprobs:
            xent = -sum(item.reference_logprobs) / len(item.reference_logprobs)
        breakdown = combined_loss(xent, ctr, cfg.loss_config())
        return {
            "line": item.line,
            "order": list(ranking.order),
            "f_values": f,
            "xent": breakdown.xent,
            "ctr": breakdown.ctr,
            "total": breakdown.total,
            "xent_available": item.reference_logprobs is not None,
        }
    return _run_per_pool(pools, one, run_id, "loss")


def cmd_gradcheck(pools: List[IngestedPool], cfg: RunConfig, run_id: Optional[str] = None) -> CommandResult:
    """Finite-difference check of the contrastive gradient; flags errors above grad_tolerance."""
    def one(item: IngestedPool):
        ranking, f = _ranked_f_values(item, cfg)
        if cfg.random_points:
            err = random_grad_check(
                ranking.ranked_scores,
                cfg.margin_spec(),
                cfg.epsilon,
                samples=cfg.random_points,
                seed=derive_seed(cfg.seed, item.line),
            )
        else:
            err = grad_check(f, ranking.ranked_scores, cfg.margin_spec(), cfg.epsilon)
        return {"line": item.line, "max_relative_error": err, "passed": bool(err <= cfg.grad_tolerance)}

    result = _run_per_pool(pools, one, run_id, "gradcheck")
    result.check_failed = any(not r.get("passed", True) for r in result.records)
    return result


# --- Model commands ---

def _required(path: Optional[str], name: str) -> str:
    if not path:
        raise ValueError(f"{name} is required for this command")
    return path


def _fresh_model(cfg: RunConfig, corpus) -> ToyModelParams:
    pairs = [(source, reference) for _, source, reference in corpus if reference is not None]
    return init_model(vocabulary_from_corpus(pairs), cfg.num_buckets, cfg.seed)


def cmd_beam(cfg: RunConfig, run_id: Optional[str] = None) -> CommandResult:
    """Diverse-beam candidates per corpus source, as pool records with log-probabilities.

    Decodes with the saved model at model_path when set, otherwise with a freshly
    initialised model over the corpus references.
    """
    corpus = ingest_corpus(_required(cfg.corpus_path, "corpus_path"), require_reference=False)
    model = load_model(cfg.model_path) if cfg.model_path else _fresh_model(cfg, corpus)
    beam = cfg.beam_config()
    result = CommandResult()
    for line_no, source, reference in corpus:
        try:
            candidates = diverse_beam_search(model, source, beam)
        except BridoError as e:
            result.records.append(_error_record(line_no, e))
            result.failures += 1
            continue
        result.records.append({
            "line": line_no,
            "source": source.text,
            "reference": reference.text if reference is not None else None,
            "candidates": [
                {
                    "text": c.seq.text,
                    "token_logprobs": list(c.token_logprobs),
                    "f_value": f_value(c, beam.beta),
                }
                for c in candidates
            ],
        })
        log_activity(run_id, "beam", f"line {line_no}: {len(candidates)} candidates", status="SUCCESS")
    return result


def cmd_train(cfg: RunConfig, run_id: Optional[str] = None) -> CommandResult:
    """Trains a freshly initialised toy model; emits the per-epoch trace and saves the model when model_path is set.

    With alpha_sweep or eta_sweep set, trains one fresh model per setting instead
    and emits one comparison record per setting, evaluated on heldout_path.
    """
    corpus = ingest_corpus(_required(cfg.corpus_path, "corpus_path"))
    pairs = [(source, reference) for _, source, reference in corpus]
    if cfg.alpha_sweep or cfg.eta_sweep:
        return _train_sweeps(cfg, corpus, pairs, run_id)

    train_cfg = cfg.train_config()
    model, trace = train(_fresh_model(cfg, corpus), pairs, train_cfg, run_id=run_id)
    result = CommandResult(records=[t.model_dump() for t in trace])
    if cfg.heldout_path:
        heldout = [(source, reference) for _, source, reference in ingest_corpus(cfg.heldout_path)]
        result.records.append({"heldout_rank_agreement": rank_agreement(model, heldout, train_cfg)})
    if cfg.model_path:
        save_model(model, cfg.model_path)
        log_system_event(run_id, "MODEL_SAVED", cfg.model_path)
    return result


def _train_sweeps(cfg: RunConfig, corpus, pairs, run_id: Optional[str]) -> CommandResult:
    heldout_path = _required(cfg.heldout_path, "heldout_path")
    heldout = [(source, reference) for _, source, reference in ingest_corpus(heldout_path)]
    settings = [("alpha", alpha) for alpha in cfg.alpha_sweep] + [("eta", eta) for eta in cfg.eta_sweep]
    result = CommandResult()
    for name, value in settings:
        setting_cfg = RunConfig.model_validate({**cfg.model_dump(), name: value, "alpha_sweep": [], "eta_sweep": []})
        train_cfg = setting_cfg.train_config()
        model, trace = train(_fresh_model(setting_cfg, corpus), pairs, train_cfg, run_id=run_id)
        record = {
            "sweep": name,
            name: value,
            "final_xent": trace[-1].xent if trace else None,
            "final_ctr": trace[-1].ctr if trace else None,
            "heldout_rank_agreement": rank_agreement(model, heldout, train_cfg),
            "heldout_selection_rouge": selection_rouge(model, heldout, train_cfg),
        }
        result.records.append(record)
        log_activity(run_id, "Sweep", f"{name}={value}", metrics=record, status="DONE")
    return result


# --- Simulation ---

def cmd_simulate(cfg: RunConfig, run_id: Optional[str] = None) -> CommandResult:
    """One report per (alpha, pool size) pair; alpha_sweep and pool_sweep default to the single configured values."""
    sim_cfg = cfg.sim_config()
    sizes = cfg.pool_sweep or [sim_cfg.pool_size]
    reports = []
    for alpha in cfg.alpha_sweep or [sim_cfg.alpha]:
        alpha_cfg = SimConfig.model_validate({**sim_cfg.model_dump(), "alpha": alpha})
        reports.extend(sweep_pool_sizes(alpha_cfg, sizes, run_id=run_id))
    return CommandResult(records=[r.model_dump() for r in reports])


# --- Reports ---

def summarize_records(rows: List[Tuple[int, Dict[str, Any]]]) -> Dict[str, Any]:
    """Record/error counts and mean/min/max of every top-level numeric field."""
    fields: Dict[str, List[float]] = {}
    errors = 0
    for _, obj in rows:
        if "error" in obj:
            errors += 1
        for key, value in obj.items():
            if key == "line" or isinstance(value, bool):
                continue
            if isinstance(value, (int, float)):
                fields.setdefault(key, []).append(float(value))
    stats = {
        key: {"count": len(vals), "mean": sum(vals) / len(vals), "min": min(vals), "max": max(vals)}
        for key, vals in sorted(fields.items())
    }
    return {"records": len(rows), "errors": errors, "fields": stats}


def render_markdown(title: str, summary: Dict[str, Any]) -> str:
    lines = [f"# {title}", "", f"- Records: {summary['records']}", f"- Errors: {summary['errors']}", ""]
    if summary["fields"]:
        lines += ["| Field | Count | Mean | Min | Max |", "|---|---|---|---|---|"]
        for key, s in summary["fields"].items():
            lines.append(f"| {key} | {s['count']} | {s['mean']!r} | {s['min']!r} | {s['max']!r} |")
    return "\n".join(lines) + "\n"


def save_as_pdf(filepath: str, content: str):
    """Renders plain text/markdown lines into a PDF with the core Helvetica font."""
    clean_content = content.encode("latin-1", "replace").decode("latin-1")
    pdf = FPDF()
    pdf.add_page()
    pdf.set_font("Helvetica", size=11)
    for line in clean_content.split("\n"):
        pdf.multi_cell(0, 8, text=line, new_x=XPos.LMARGIN, new_y=YPos.NEXT)
    pdf.output(filepath)


def cmd_report(input_path: str, fmt: str = "md", run_id: Optional[str] = None) -> CommandResult:
    """Summarises an emitted JSON-lines file into output/<stem>_report.<fmt>."""
    if fmt not in ("md", "pdf"):
        raise ValueError(f"unsupported report format {fmt!r}")
    rows = read_jsonl(input_path)
    summary = summarize_records(rows)
    stem = os.path.splitext(os.path.basename(input_path))[0]
    markdown = render_markdown(f"Report: {stem}", summary)
    filename = f"{stem}_report.{fmt}"
    filepath = os.path.join(get_output_dir(), filename)
    if fmt == "md":
        with open(filepath, "w", encoding="utf-8") as f:
            f.write(markdown)
    else:
        save_as_pdf(filepath, markdown)
    log_system_event(run_id, "REPORT_SAVED", filepath)
    return CommandResult(records=[{"input": os.path.basename(input_path), "artifact": filename, **summary}])
