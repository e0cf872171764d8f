"""Adversarial load-forecast attacks against microgrid restoration planning."""

import json

from . import _core
from ._core import Error, derive_seed, fnv1a, profiles, read_dataset, synth_dataset, write_dataset

__all__ = [
    "Error",
    "attack",
    "derive_seed",
    "fnv1a",
    "plan",
    "profiles",
    "read_dataset",
    "run",
    "synth_dataset",
    "train",
    "validate",
    "write_dataset",
]


def train(data, **kwargs):
    """Train a forecaster on a dataset CSV; returns the model as a dict."""
    return json.loads(_core.train(str(data), **kwargs))


def attack(model, data, **kwargs):
    """Attack one window of a dataset CSV; `model` is a dict from train()."""
    out = _core.attack(json.dumps(model), str(data), **kwargs)
    out["trace"] = json.loads(out.pop("trace_json"))
    return out


def plan(feeder, forecasts_kw, **kwargs):
    """Restoration plan for per-load, per-stage forecasts in kW."""
    return json.loads(_core.plan(str(feeder), forecasts_kw, **kwargs))


def validate(feeder, plan, actual_kw, **kwargs):
    """Validate a plan dict against the demand that actually shows up."""
    return json.loads(_core.validate(str(feeder), json.dumps(plan), actual_kw, **kwargs))


def run(config, output_dir=None):
    """Run the full pipeline and return report.json as a dict."""
    return json.loads(_core.run(str(config), None if output_dir is None else str(output_dir)))
