"""
Logging Utilities

Structured logging to local text files on a per-run basis.
It distinguishes between component activity (training steps, simulations,
per-record command results) and system-level events (config, run start/end,
errors). Result files are never written here, so logs may carry timestamps
without breaking output determinism.
"""
import os
from datetime import datetime
from typing import Any, Dict, Optional

from dotenv import load_dotenv

load_dotenv()

DEFAULT_LOG_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "..", "logs"))


def get_log_dir() -> str:
    """Log directory, overridable through BRIDO_LOG_DIR."""
    log_dir = os.getenv("BRIDO_LOG_DIR", DEFAULT_LOG_DIR)
    if not os.path.exists(log_dir):
        os.makedirs(log_dir)
    return log_dir


def get_log_path(run_id: str) -> str:
    """Returns the absolute path to the log file for a given run."""
    return os.path.abspath(os.path.join(get_log_dir(), f"run_{run_id}.txt"))


def log_activity(
    run_id: Optional[str],
    component: str,
    message: str,
    step: Optional[int] = None,
    metrics: Optional[Dict[str, Any]] = None,
    status: Optional[str] = None,
):
    """Appends a structured log entry to the run log file. No-op without a run id."""
    if not run_id:
        return
    timestamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")

    log_entry = f"[{timestamp}] [{component}]"
    if step is not None:
        log_entry += f" [STEP: {step}]"
    if status:
        log_entry += f" [STATUS: {status}]"

    log_entry += f"\nMessage: {message}\n"

    if metrics:
        log_entry += f"Metrics: {metrics}\n"

    log_entry += "-" * 40 + "\n"

    with open(get_log_path(run_id), "a", encoding="utf-8") as f:
        f.write(log_entry)


def log_system_event(run_id: Optional[str], event_type: str, message: str):
    """Logs a system-level event (config, run lifecycle, failures)."""
    if not run_id:
        return
    timestamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")

    log_entry = f"[{timestamp}] [SYSTEM:{event_type}]\n"
    log_entry += f"Details: {message}\n"
    log_entry += "=" * 40 + "\n"

    with open(get_log_path(run_id), "a", encoding="utf-8") as f:
        f.write(log_entry)
