"""Discrete Schrodinger bridges on categorical state spaces and tiny graphs."""

import json

from ._core import (
    DsbError,
    NoiseSchedule,
    build_schedule,
    categorical_kernel,
    gradient_check,
    hungarian,
    kl_couplings,
    pinned_kernel,
    reference_kernel,
    reference_rate,
    run_imf,
    sample_bridge,
    sinkhorn,
    train_tabular,
)
from . import _core


def pair_nll(vocab, g1, g2, schedule, mapping):
    """Pair NLL of two graphs (dicts in the graph JSON format) under a node mapping."""
    return _core.pair_nll_json(json.dumps(vocab), json.dumps(g1), json.dumps(g2), schedule, list(mapping))


def match(vocab, g1, g2, schedule, method="MPM", n_trials=10, noise_coeff=1e-6, seed=0, exhaustive=False):
    """Best node mapping of g1 onto g2; returns {"mapping": [...], "nll": float}."""
    return _core.match_json(json.dumps(vocab), json.dumps(g1), json.dumps(g2), schedule, method, n_trials,
                            noise_coeff, seed, exhaustive)


__all__ = [
    "DsbError",
    "NoiseSchedule",
    "build_schedule",
    "categorical_kernel",
    "gradient_check",
    "hungarian",
    "kl_couplings",
    "match",
    "pair_nll",
    "pinned_kernel",
    "reference_kernel",
    "reference_rate",
    "run_imf",
    "sample_bridge",
    "sinkhorn",
    "train_tabular",
]
