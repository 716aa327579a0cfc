"""
Run logging
-----------
Console and file logging for CLI runs, plus the JSON run history.
"""
from __future__ import annotations

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Mapping

from rich.console import Console
from rich.logging import RichHandler

from choquetrl.config import app_home

OPERATIONS_LOG = "operations.log"
RUN_HISTORY = "run_history.json"


def log_dir() -> Path:
    return app_home() / "logs"


class OperationFormatter(logging.Formatter):
    """[timestamp] [context] [stage] message"""

    def format(self, record: logging.LogRecord) -> str:
        stage = getattr(record, "stage", record.levelname.lower())
        return f"[{datetime.fromtimestamp(record.created).isoformat()}] [{record.name}] [{stage}] {record.getMessage()}"


def setup_logging(verbose: int = 0, log_to_file: bool = True) -> logging.Logger:
    """Install the stderr RichHandler and, optionally, the operations log."""
    logger = logging.getLogger("choquetrl")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.setLevel(logging.DEBUG)
    logger.propagate = False

    console = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=False)
    console.setLevel(logging.WARNING - 10 * min(verbose, 2))
    logger.addHandler(console)

    if log_to_file:
        directory = log_dir()
        directory.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(directory / OPERATIONS_LOG)
        file_handler.setLevel(logging.INFO)
        file_handler.setFormatter(OperationFormatter())
        logger.addHandler(file_handler)
    return logger


def log_run(command: str, params: Mapping[str, Any], results: Mapping[str, Any], exit_code: int) -> None:
    """Log the run to the history file"""
    history_file = log_dir() / RUN_HISTORY
    history_file.parent.mkdir(parents=True, exist_ok=True)

    runs: list[Any] = []
    if history_file.exists():
        try:
            with open(history_file) as f:
                loaded = json.load(f)
            if isinstance(loaded, list):
                runs = loaded
        except (OSError, json.JSONDecodeError):
            runs = []

    runs.append(
        {
            "timestamp": datetime.now().isoformat(),
            "command": command,
            "params": params,
            "results": results,
            "exit_code": exit_code,
        }
    )
    with open(history_file, "w") as f:
        json.dump(runs, f, indent=2, default=str)
