# Logging utilities
from __future__ import annotations

import logging
import os
import sys
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

_ROOT = "chemlab"
_FORMAT = "[%(name)s] %(levelname)s %(message)s"
_configured = False


def debug_enabled() -> bool:
    return os.environ.get("CHEMLAB_DEBUG", "0").lower() in ("1", "true", "yes")


def configure_logging(debug: Optional[bool] = None) -> None:
    """Attach one stderr handler to the package logger. Safe to call repeatedly."""
    global _configured
    if debug is None:
        debug = debug_enabled()
    root = logging.getLogger(_ROOT)
    root.setLevel(logging.DEBUG if debug else logging.INFO)
    if not _configured:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(_FORMAT))
        root.addHandler(handler)
        root.propagate = False
        _configured = True


def get_logger(name: str) -> logging.Logger:
    short = name.rsplit(".", 1)[-1]
    return logging.getLogger(f"{_ROOT}.{short}")
