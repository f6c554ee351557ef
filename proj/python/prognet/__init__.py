"""Progressive networks for pixel-based reaching.

Configs are passed as JSON text; helpers below accept dicts.
"""
import json as _json

from ._prognet import (
    ConfigError,
    EnvConfigError,
    ExperimentConfigError,
    IoError,
    ProgressiveNetwork,
    ReacherEnv,
    SpecError,
    UsageError,
    expert_return,
    export_report,
    forward_kinematics,
    load_run,
    mann_whitney_greater,
    median_filter,
    train_sim,
    transfer,
)


def _text(config):
    return config if isinstance(config, str) else _json.dumps(config)


def make_env(config=None):
    """ReacherEnv from a dict (or JSON string) of environment settings."""
    return ReacherEnv(_text(config or {}))


def run_train_sim(config):
    return train_sim(_text(config))


def run_transfer(config, mode="progressive"):
    return transfer(_text(config), mode)
