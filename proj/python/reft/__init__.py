# SPDX-License-Identifier: Apache-2.0
"""Python bindings for the reft federated simulator."""
import json

from ._core import (
    ArchitectureMismatchError,
    ConfigError,
    DivergenceError,
    ReftError,
    bandwidth_logits,
    bandwidth_weights,
    dirichlet_class_counts,
    format_bytes,
    importance_weights,
    prune_report,
    static_pruning_ratio,
    variable_pruning_ratio,
    weight_payload_bytes,
)
from . import _core


def _text(config):
    return config if isinstance(config, str) else json.dumps(config)


def resolve_config(config):
    """Validate a config (dict or JSON text) and return it with defaults filled in."""
    return json.loads(_core.resolve_config(_text(config)))


def run(config, threads=1):
    """Run one experiment and return the report as a dict."""
    return json.loads(_core.run_json(_text(config), threads))


def run_to_dir(config, out_dir, threads=1):
    """Run and write the CSV/JSON artifacts, returning the CLI exit code."""
    return _core.run_to_dir(_text(config), str(out_dir), threads)


__all__ = [
    "ArchitectureMismatchError", "ConfigError", "DivergenceError", "ReftError",
    "bandwidth_logits", "bandwidth_weights", "dirichlet_class_counts", "format_bytes",
    "importance_weights", "prune_report", "resolve_config", "run", "run_to_dir",
    "static_pruning_ratio", "variable_pruning_ratio", "weight_payload_bytes",
]
