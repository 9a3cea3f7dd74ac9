"""
structlog setup shared by the library and the CLI.

Records are JSON lines on standard error; standard output is left to command
results so that runs with the same seed print identical bytes. `trace` is
`debug` plus thread and caller context on every record.
"""

import logging
import sys
import threading
import traceback
from pathlib import Path
from typing import Any

import structlog

LOG_LEVELS = ("warning", "info", "debug", "trace")

_STDLIB_LEVELS = {
    "warning": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
    "trace": logging.DEBUG,
}

_INTERNAL_FRAMES = ("logging", "structlog")


def setup_logging(log_level: str = "warning", log_file: Path | None = None, enable_trace: bool = False) -> None:
    """
    Route structlog through the stdlib root logger at the given level.

    Args:
        log_level: One of LOG_LEVELS; unknown names fall back to warning
        log_file: Also append the JSON lines to this file
        enable_trace: Add thread and caller context even below trace level
    """
    name = log_level.lower()
    level = _STDLIB_LEVELS.get(name, logging.WARNING)
    logging.basicConfig(format="%(message)s", stream=sys.stderr, level=level, force=True)

    structlog.configure(
        processors=_processors(with_trace=enable_trace or name == "trace"),
        wrapper_class=structlog.stdlib.BoundLogger,
        logger_factory=structlog.stdlib.LoggerFactory(),
        context_class=dict,
        cache_logger_on_first_use=True,
    )

    if log_file is not None:
        logging.getLogger().addHandler(_file_handler(log_file, level))


def _processors(with_trace: bool) -> list[Any]:
    chain: list[Any] = [
        structlog.stdlib.filter_by_level,
        structlog.stdlib.add_logger_name,
        structlog.stdlib.add_log_level,
        structlog.stdlib.PositionalArgumentsFormatter(),
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.StackInfoRenderer(),
        structlog.processors.format_exc_info,
        structlog.processors.UnicodeDecoder(),
    ]
    if with_trace:
        chain.append(_add_trace_context)
    chain.append(structlog.processors.JSONRenderer())
    return chain


def _caller() -> traceback.FrameSummary | None:
    for frame in reversed(traceback.extract_stack()):
        if not any(part in frame.filename for part in _INTERNAL_FRAMES):
            return frame
    return None


def _add_trace_context(logger: Any, method_name: str, event_dict: dict) -> dict:
    current = threading.current_thread()
    context: dict[str, Any] = {"thread_id": threading.get_ident(), "thread_name": current.name}
    if event_dict.get("level") == "debug":
        frame = _caller()
        if frame is not None:
            context["caller"] = {"filename": frame.filename, "line": frame.lineno, "function": frame.name}
    event_dict["trace"] = context
    return event_dict


def _file_handler(log_file: Path, level: int) -> logging.Handler:
    log_file.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(log_file, encoding="utf-8")
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter("%(message)s"))
    return handler


def get_logger(name: str) -> structlog.stdlib.BoundLogger:
    """Logger for a module, usually called with `__name__`."""
    return structlog.get_logger(name)
