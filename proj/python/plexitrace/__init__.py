"""Trace low-perplexity generated spans back to verbatim corpus matches."""

import json
import os

from ._plexitrace import *  # noqa: F401,F403
from ._plexitrace import (
    PlexitraceError,
    _config_hash,
    _run_analysis,
    _run_experiment,
    _run_generation,
)

__version__ = "0.1.0"


def _config_args(config, base_dir):
    # Accept a dict or a path to a JSON config; relative paths inside a file
    # resolve against its directory.
    if isinstance(config, (str, os.PathLike)):
        path = os.fspath(config)
        with open(path, encoding="utf-8") as f:
            text = f.read()
        return text, base_dir or os.path.dirname(os.path.abspath(path))
    return json.dumps(config), base_dir or os.getcwd()


def run_experiment(config, base_dir=None):
    """Generate, attribute and report; returns a summary dict with exit_code."""
    return _run_experiment(*_config_args(config, base_dir))


def run_generation(config, base_dir=None):
    return _run_generation(*_config_args(config, base_dir))


def run_analysis(config, records_path, base_dir=None):
    return _run_analysis(*_config_args(config, base_dir), os.fspath(records_path))


def config_hash(config, base_dir=None):
    return _config_hash(*_config_args(config, base_dir))
