"""
Logging setup.

Console output goes through rich's RichHandler; every module obtains its
logger with get_logger(__name__).
"""

import logging
from typing import Optional

from rich.logging import RichHandler

from src.core.config import settings

_configured = False


def configure_logging(level: Optional[str] = None) -> None:
    """
    Install the rich console handler on the package root logger.

    Calling it again only updates the level.

    Args:
        level: Logging level name; defaults to settings.log_level
    """
    global _configured
    root = logging.getLogger("src")
    root.setLevel((level or settings.log_level).upper())
    if _configured:
        return
    handler = RichHandler(
        rich_tracebacks=settings.log_rich_tracebacks,
        show_path=settings.is_debug,
        markup=False,
    )
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    root.addHandler(handler)
    root.propagate = False
    _configured = True


def get_logger(name: str) -> logging.Logger:
    """Return the module logger for ``name``."""
    return logging.getLogger(name)
