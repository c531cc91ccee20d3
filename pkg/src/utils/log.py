"""
Logging setup for entry points
"""

import logging
import os
from typing import Optional

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level: Optional[str] = None) -> None:
    """
    Install (or replace) the console handler on the root logger

    Args:
        level (str, optional): Level name; falls back to WHCN_LOG_LEVEL, then INFO
    """
    level_name = (level or os.getenv("WHCN_LOG_LEVEL") or "INFO").upper()
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "whcn_console", False):
            root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.whcn_console = True
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(getattr(logging, level_name, logging.INFO))
