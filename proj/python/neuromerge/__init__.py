"""Neuron merging for structured pruning, backed by the C++ core."""

import json as _json

from . import _core
from ._core import (
    ArgumentError,
    ConfigError,
    Dataset,
    DegenerateError,
    Error,
    FormatError,
    IoError,
    Network,
    ShapeError,
    ValidationError,
    accuracy,
    final_response_layer,
    forward,
    load_dataset,
    load_model,
    most_similar,
    n_mode_product,
    prunable_layers,
    save_dataset,
    save_model,
    score_neurons,
    self_labelled_dataset,
    set_thread_limit,
    tap_retained_indices,
    tensor_conv,
    thread_limit,
    uniform_plan,
    ware,
)

__all__ = [name for name in dir(_core) if not name.startswith("_")] + [
    "merge",
    "prune",
    "summary",
    "verify",
    "fixture",
    "run_cli",
]


def merge(net, plan, criterion="l1", threshold=0.1, lam=0.85, mode="merge"):
    """Prune and merge the planned layers. Returns (network, report dict)."""
    out, report = _core.apply(net, plan, criterion, threshold, lam, mode)
    return out, _json.loads(report)


def prune(net, plan, criterion="l1"):
    return merge(net, plan, criterion=criterion, mode="prune")


def summary(net):
    return _json.loads(net.summary_json())


def verify(seed=0):
    return _json.loads(_core.verify(seed))


def fixture(kind, seed=0, noise=0.0):
    """Synthetic network and its default pruning plan (empty when it has none)."""
    return _core.fixture(kind, seed, noise)


def run_cli(*args):
    """Run the command-line tool in-process. Returns (exit code, stdout, stderr)."""
    return _core.run_cli([str(a) for a in args])
