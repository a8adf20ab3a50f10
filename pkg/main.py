#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
tfl-toolkit - Main Entry Point

Configures logging from config.json and the environment, then dispatches
to the command line in cli.commands.
"""

import logging
import sys
from pathlib import Path

from cli.commands import main
from core.config import load_config


def setup_logging(config):
    """Log to stderr, and to a file when logging.file is set."""
    settings = config["logging"]
    handlers = [logging.StreamHandler()]
    if settings.get("file"):
        Path(settings["file"]).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(settings["file"]))
    logging.basicConfig(
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        level=getattr(logging, str(settings["level"]).upper(), logging.INFO),
        handlers=handlers,
    )


if __name__ == "__main__":
    try:
        setup_logging(load_config())
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        sys.exit(2)
    try:
        sys.exit(main(sys.argv[1:]))
    except KeyboardInterrupt:
        logging.getLogger(__name__).info("Interrupted by user.")
        sys.exit(130)
