"""Seeded random weight fixtures for engine tests and benchmarks.

Weights are He-style random draws with batch norm folded in, then the
activation scales are calibrated on random probe inputs exactly the way
the training harness does it: S = max observed |pre-activation| times a
safety margin, and dense weights feeding tanh rescaled until the probe
batch stays inside [-2, 2].
"""

from __future__ import annotations

import numpy as np

from . import models, oracle
from .layers import fold_batchnorm
from .weights import WeightStore

SCALE_MARGIN = 1.1
SCALE_FLOOR = 1e-3
TANH_TARGET = 1.6  # calibration headroom inside the [-2, 2] domain


def random_inputs(spec, count, seed):
    rng = np.random.default_rng(seed)
    h, w = spec.input_hw
    return rng.uniform(0.0, 1.0, size=(count, h, w))


def make_fixture_weights(spec, seed=0, probes=16):
    """Random folded weights with calibrated activation scales."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in models.tensor_shapes(spec).items():
        if name.endswith(".weight"):
            fan_in = int(np.prod(shape[1:]))
            raw = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
            raw_b = rng.normal(0.0, 0.05, size=shape[0])
            # random BN parameters folded in, as the harness would export
            gamma = rng.uniform(0.7, 1.3, size=shape[0])
            beta = rng.normal(0.0, 0.05, size=shape[0])
            mean = rng.normal(0.0, 0.05, size=shape[0])
            var = rng.uniform(0.5, 1.5, size=shape[0])
            w, b = fold_batchnorm(raw, raw_b, gamma, beta, mean, var)
            tensors[name] = w
            tensors[name.replace(".weight", ".bias")] = b
    store = WeightStore(models.describe(spec), tensors, {})

    batch = random_inputs(spec, probes, seed + 1)
    _calibrate(spec, store, batch)
    store.validate()
    return store


def _calibrate(spec, store, batch, tanh_rounds=4):
    """Set ReLU scales and bound every tanh input on the probe batch."""
    tanh_sites = [
        d.name for d in list(spec.fc) + list(spec.head.layers) if d.activation == "tanh"
    ]
    for _ in range(tanh_rounds):
        maxima = _probe_maxima(spec, store, batch)
        worst = 1.0
        for name in tanh_sites:
            seen = maxima.get(f"{name}.tanh", 0.0)
            if seen > TANH_TARGET:
                factor = TANH_TARGET / seen
                store.tensors[f"{name}.weight"] = store.tensors[f"{name}.weight"] * factor
                store.tensors[f"{name}.bias"] = store.tensors[f"{name}.bias"] * factor
                worst = min(worst, factor)
        if worst == 1.0:
            break
    maxima = _probe_maxima(spec, store, batch)
    store.scales = {
        site: max(maxima.get(site, 0.0) * SCALE_MARGIN, SCALE_FLOOR)
        for site in models.scale_sites(spec)
    }


def _probe_maxima(spec, store, batch):
    probe_store = WeightStore(store.architecture, store.tensors, {})
    maxima = {}
    for img in batch:
        run = oracle.oracle_run_model(spec, probe_store, img)
        for site, val in run.preact_max.items():
            maxima[site] = max(maxima.get(site, 0.0), val)
    return maxima
