#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import hashlib
import json
import logging
import os
import platform
import sys
from logging.handlers import RotatingFileHandler
from typing import Any, Dict

import numpy as np
import scipy


def setup_logging(log_level: str = "info", log_file_path: str = "./logs/sdq.log") -> None:
    """
    Set up global logging configuration for the application.

    This function configures:
    - Console output (stdout) with optional indentation
    - Rotating file logging
    - Dynamic formatting with module/function location (DEBUG only)

    The formatter supports an `indent` field in log records, which is used
    to nest per-replication and per-probe messages under their run.

    Parameters:
        log_level (str): Logging level as string ("debug", "info", "warning", etc.).
                         Defaults to "info". If invalid, falls back to INFO.
        log_file_path (str): Path to the log file. Default is "./logs/sdq.log".
    """
    log_level = getattr(logging, log_level.upper(), logging.INFO)

    class IndentFormatter(logging.Formatter):
        def format(self, record):
            indent_spaces = " " * getattr(record, "indent", 0)
            record.msg = indent_spaces + str(record.msg).replace("\n", "\n" + indent_spaces)

            rel_path = os.path.relpath(record.pathname).replace(os.sep, ".")
            if rel_path.endswith(".py"):
                rel_path = rel_path[:-3]

            location = f"{rel_path}.{record.funcName}"
            record.location = f"{f'[{location}]':<64}"
            return super().format(record)

    if log_level == logging.DEBUG:
        formatter = IndentFormatter("%(asctime)s %(levelname)-8s %(location)s %(message)s")
    else:
        formatter = IndentFormatter("%(asctime)s %(levelname)-8s %(message)s")

    logger = logging.getLogger()
    logger.setLevel(log_level)
    logger.handlers.clear()

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    log_dir = os.path.dirname(log_file_path)

    # If we can't write to the configured directory, use a local one
    if log_dir and os.path.exists(log_dir) and not os.access(log_dir, os.W_OK):
        log_dir = "./logs"
        log_file_path = os.path.join(log_dir, "sdq.log")

    if log_dir and not os.path.exists(log_dir):
        os.makedirs(log_dir, exist_ok=True)

    file_handler = RotatingFileHandler(
        log_file_path,
        maxBytes=(20 * 1024 * 1024) if log_level == logging.DEBUG else (5 * 1024 * 1024),
        backupCount=(20 if log_level == logging.DEBUG else 10),
    )
    file_handler.setFormatter(formatter)
    logger.addHandler(file_handler)


def make_generator(seed: int, replication: int = 0) -> np.random.Generator:
    """
    Derive the private random stream of one replication.

    Streams are split by SeedSequence spawn keys, so (seed, replication) pairs
    give independent, reproducible PCG64 generators.

    Parameters:
        seed (int): 64-bit experiment seed
        replication (int): Replication index

    Returns:
        np.random.Generator: Generator owned by that replication
    """
    sequence = np.random.SeedSequence(int(seed) % (1 << 64), spawn_key=(int(replication),))
    return np.random.Generator(np.random.PCG64(sequence))


def canonical_json(data: Any) -> str:
    """Serialize data with sorted keys and no whitespace variance (used for hashing)."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(data: Dict[str, Any]) -> str:
    """
    Compute the SHA-256 fingerprint of an experiment configuration.

    Parameters:
        data (dict): Serialized experiment configuration

    Returns:
        str: Hex digest of the canonical JSON form
    """
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def package_versions() -> Dict[str, str]:
    """Return the versions recorded in every run manifest."""
    from app import __version__

    return {
        "sdq": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
