#!/usr/bin/env python3
"""
Logging Setup

Configures the root logger once for command-line use.
"""

import logging

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(verbosity=0):
    """
    Install a stream handler on the root logger.

    Args:
        verbosity (int): 1 or more for DEBUG, negative for WARNING, else INFO
    """
    if verbosity > 0:
        level = logging.DEBUG
    elif verbosity < 0:
        level = logging.WARNING
    else:
        level = logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)
