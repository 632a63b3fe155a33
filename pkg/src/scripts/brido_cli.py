"""
BRIDO Command Line Interface.

Scores, ranks and trains on candidate pools from the terminal. Results are
JSON lines on stdout (or --output); status lines, the run log path and the
tracing state go to stderr so piped output stays clean.
"""

import argparse
import os
import sys
import uuid

# Add root to path to find 'brido'
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))
from pydantic import ValidationError

from brido.config import dump_run_config, load_run_config
from brido.consensus import INFINITY
from brido.errors import BridoError
from brido.logging_utils import get_log_path, log_system_event
from brido.pipeline import (
    EXIT_INPUT_ERROR,
    cmd_beam,
    cmd_gradcheck,
    cmd_loss,
    cmd_rank,
    cmd_report,
    cmd_score,
    cmd_simulate,
    cmd_train,
    ingest,
    write_jsonl,
)
from brido.training_graph import check_tracing

POOL_COMMANDS = ("score", "rank", "loss", "gradcheck")


def _alpha(value: str):
    if value.lower() in (INFINITY, "inf"):
        return INFINITY
    return float(value)


def _int_list(value: str):
    return [int(v) for v in value.split(",") if v.strip()]


def _float_list(value: str):
    return [float(v) for v in value.split(",") if v.strip()]


def _alpha_list(value: str):
    return [_alpha(v.strip()) for v in value.split(",") if v.strip()]


def _status(message: str):
    print(message, file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="BRIDO consensus ranking toolkit")
    parser.add_argument("command", choices=POOL_COMMANDS + ("beam", "train", "simulate", "report"))
    parser.add_argument("input", nargs="?", help="Pools JSONL (score/rank/loss/gradcheck) or emitted JSONL (report)")
    parser.add_argument("--config", type=str, help="RunConfig JSON file; flags override its values")
    parser.add_argument("-o", "--output", dest="output_path", type=str, help="Write JSON lines here instead of stdout")
    parser.add_argument("--run-id", type=str, help="Append to an existing run log")
    parser.add_argument("--brio", action="store_true", help="Reference-only scoring (same as --alpha infinity)")
    parser.add_argument("--format", dest="report_format", choices=("md", "pdf"), default="md", help="Report format")
    parser.add_argument("--print-config", action="store_true", help="Print the merged config to stderr")

    scoring = parser.add_argument_group("scoring")
    scoring.add_argument("--variant", type=str)
    scoring.add_argument("--alpha", type=_alpha)

    loss = parser.add_argument_group("loss")
    loss.add_argument("--lambda", dest="lam", type=float)
    loss.add_argument("--margin-scheme", type=str, choices=("fixed", "difference"))
    loss.add_argument("--gamma", type=float)
    loss.add_argument("--beta", type=float)
    loss.add_argument("--epsilon", type=float)
    loss.add_argument("--grad-tolerance", type=float)
    loss.add_argument("--random-points", type=int)

    beam = parser.add_argument_group("diverse beam search")
    beam.add_argument("--eta", type=float)
    beam.add_argument("--num-candidates", type=int)
    beam.add_argument("--num-groups", type=int)
    beam.add_argument("--max-length", type=int)
    beam.add_argument("--min-length", type=int)

    train = parser.add_argument_group("training")
    train.add_argument("--learning-rate", type=float)
    train.add_argument("--epochs", type=int)
    train.add_argument("--num-buckets", type=int)
    train.add_argument("--seed", type=int)
    train.add_argument("--corpus", dest="corpus_path", type=str)
    train.add_argument("--heldout", dest="heldout_path", type=str)
    train.add_argument("--model", dest="model_path", type=str)

    sim = parser.add_argument_group("simulation")
    sim.add_argument("--num-slots", type=int)
    sim.add_argument("--vocab-per-slot", type=int)
    sim.add_argument("--halluc-prob", type=float)
    sim.add_argument("--pool-size", type=int)
    sim.add_argument("--trials", type=int)
    sim.add_argument("--sim-alpha", type=_alpha)
    sim.add_argument("--pool-sweep", type=_int_list, help="Comma-separated pool sizes")

    sweeps = parser.add_argument_group("experiment sweeps")
    sweeps.add_argument("--alpha-sweep", type=_alpha_list, help="Comma-separated reference weights (train, simulate)")
    sweeps.add_argument("--eta-sweep", type=_float_list, help="Comma-separated diversity penalties (train)")
    return parser


CONFIG_FLAGS = (
    "variant", "alpha", "lam", "margin_scheme", "gamma", "beta", "epsilon", "grad_tolerance",
    "random_points", "eta", "num_candidates", "num_groups", "max_length", "min_length",
    "learning_rate", "epochs", "num_buckets", "seed", "corpus_path", "heldout_path", "model_path",
    "num_slots", "vocab_per_slot", "halluc_prob", "pool_size", "trials", "sim_alpha", "pool_sweep",
    "alpha_sweep", "eta_sweep", "output_path",
)


def run(args: argparse.Namespace, run_id: str):
    overrides = {name: getattr(args, name) for name in CONFIG_FLAGS}
    if args.command in POOL_COMMANDS:
        overrides["pools_path"] = args.input
    cfg = load_run_config(args.config, overrides)
    if args.print_config:
        _status(dump_run_config(cfg))
    log_system_event(run_id, "RUN_START", f"command={args.command}, config={cfg.model_dump_json(by_alias=True)}")

    if args.command in POOL_COMMANDS:
        if not cfg.pools_path:
            raise ValueError(f"{args.command} needs a pools JSONL input")
        pools = ingest(cfg.pools_path)
        _status(f"📥 Ingested {len(pools)} pools from {cfg.pools_path}")
        if args.command == "score":
            return cmd_score(pools, cfg, brio=args.brio, run_id=run_id), cfg
        if args.command == "rank":
            return cmd_rank(pools, cfg, brio=args.brio, run_id=run_id), cfg
        if args.command == "loss":
            return cmd_loss(pools, cfg, run_id=run_id), cfg
        return cmd_gradcheck(pools, cfg, run_id=run_id), cfg
    if args.command == "beam":
        return cmd_beam(cfg, run_id=run_id), cfg
    if args.command == "train":
        return cmd_train(cfg, run_id=run_id), cfg
    if args.command == "simulate":
        return cmd_simulate(cfg, run_id=run_id), cfg
    if not args.input:
        raise ValueError("report needs an emitted JSONL input")
    return cmd_report(args.input, fmt=args.report_format, run_id=run_id), cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    run_id = args.run_id or str(uuid.uuid4())

    _status(f"🚀 BRIDO {args.command}")
    _status(f"Log File: {get_log_path(run_id)}")
    _status(check_tracing())

    try:
        result, cfg = run(args, run_id)
    except (BridoError, ValidationError, ValueError, OSError) as e:
        log_system_event(run_id, "RUN_FAILED", f"{type(e).__name__}: {e}")
        _status(f"❌ Error: {e}")
        return EXIT_INPUT_ERROR

    write_jsonl(result.records, cfg.output_path)
    if cfg.output_path:
        _status(f"💾 Wrote {len(result.records)} records to {cfg.output_path}")
    if result.failures:
        _status(f"⚠️ {result.failures} record(s) failed")
    elif result.check_failed:
        _status("❌ Check failed")
    else:
        _status("✅ Done")
    log_system_event(run_id, "RUN_END", f"exit_code={result.exit_code}, records={len(result.records)}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
