"""Failure prediction for a steering regressor from saliency maps."""

import json

from . import _core
from ._core import (
    ComparisonError,
    ConfigError,
    DataError,
    DimensionError,
    FailcastError,
    FormatError,
    IoError,
    Model,
    ParameterError,
    SpecError,
    curvature_to_swa,
    failure_trainset,
    generate_dataset,
    load_dataset,
    predict_failure,
    render_scene,
    save_dataset,
    swa_to_curvature,
    visual_backprop,
)

COMMANDS = ("gen-data", "train-pilot", "gen-saliency", "train-failcast", "eval")


def preset(name):
    return json.loads(_core.preset_json(name))


def init_model(spec="tiny", seed=0):
    """spec is a preset name or a network spec dict."""
    if isinstance(spec, dict):
        spec = json.dumps(spec)
    return Model.init(spec, seed)


def model_spec(model):
    return json.loads(model.spec_json)


def model_metadata(model):
    return json.loads(model.metadata_json)


def train(model, frames, labels, **config):
    """Returns (trained_model, per-epoch loss list). Keyword arguments are
    TrainConfig fields: epochs, batch_size, learning_rate, seed, ..."""
    return _core.train(model, frames, labels, json.dumps(config))


def evaluate(predicted_errors, true_errors, swa_labels, **kwargs):
    return json.loads(_core.evaluate(predicted_errors, true_errors, swa_labels, **kwargs))


def pearson(x, y):
    return _core.pearson(list(map(float, x)), list(map(float, y)))


def run_gradcheck(seeds=20, inject_fault=False):
    passed, cases = _core.run_gradcheck(seeds, inject_fault)
    return {"passed": passed, "cases": cases}


def run_command(name, config):
    """Runs one pipeline stage with a config dict shaped like the CLI's
    config file. Returns the stage's log text."""
    return _core.run_command(name, json.dumps(config))


def run_pipeline(config):
    return "".join(run_command(c, config) for c in COMMANDS)
