from __future__ import annotations
import logging
import os
import sys

import structlog


def configure_logging(level: str | None = None, json: bool | None = None) -> None:
    """Configure structlog once for the whole process."""
    level = (level or os.environ.get("STEFAN_LOG_LEVEL", "INFO")).upper()
    if json is None:
        json = os.environ.get("STEFAN_LOG_JSON", "0") == "1"

    renderer = structlog.processors.JSONRenderer() if json else structlog.dev.ConsoleRenderer(colors=False)
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(getattr(logging, level, logging.INFO)),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )


def get_logger(component: str) -> structlog.typing.FilteringBoundLogger:
    # lazy proxy: picks up configure_logging even for module-level loggers
    return structlog.get_logger(component=component)
