"""Python access to the lane-change MPC core."""

import csv
import io
import json

from ._core import (
    CheckpointError,
    Config,
    ConfigError,
    Error,
    InvalidInputError,
    Policy,
    config_keys,
    decision_names,
    learning_rate,
    plan,
    reset,
    run_episode,
    step,
)
from . import _core

__all__ = [
    "CheckpointError",
    "Config",
    "ConfigError",
    "Error",
    "InvalidInputError",
    "Policy",
    "config_keys",
    "decision_names",
    "evaluate",
    "learning_rate",
    "plan",
    "reset",
    "run_episode",
    "step",
    "train",
]


def evaluate(policy, config):
    """Seeded evaluation report as a dict."""
    return json.loads(_core.evaluate_json(policy, config))


def train(config):
    """Runs the configured schedule. Returns (rows as dicts, final policy)."""
    header, rows, policy = _core.train_rows(config)
    reader = csv.DictReader(io.StringIO("\n".join([header, *rows])))
    return list(reader), policy
