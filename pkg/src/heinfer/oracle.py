"""Exact plaintext reference: layer math and evaluation metrics.

Ground truth for every equivalence test.  Deliberately independent of
the slot VM and the encrypted operators; it imports only the model and
weight descriptions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import models
from .errors import DegenerateInput, ShapeError


def oracle_relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def oracle_tanh(x):
    return np.tanh(np.asarray(x, dtype=np.float64))


def oracle_conv2d(image, kernel, stride=1):
    """Valid cross-correlation of a single channel with a single kernel."""
    img = np.asarray(image, dtype=np.float64)
    ker = np.asarray(kernel, dtype=np.float64)
    n = ker.shape[0]
    if img.shape[0] < n or img.shape[1] < n:
        raise ShapeError("kernel larger than image")
    win = np.lib.stride_tricks.sliding_window_view(img, (n, n))[::stride, ::stride]
    return np.einsum("ijab,ab->ij", win, ker)


def oracle_conv_layer(inputs, kernels, stride, bias=None):
    """Multi-channel valid convolution: (C_in, H, W) -> (C_out, H', W')."""
    inputs = np.asarray(inputs, dtype=np.float64)
    kernels = np.asarray(kernels, dtype=np.float64)
    c_out, c_in = kernels.shape[:2]
    if inputs.shape[0] != c_in:
        raise ShapeError(f"{inputs.shape[0]} channels, kernels expect {c_in}")
    n = kernels.shape[2]
    win = np.lib.stride_tricks.sliding_window_view(inputs, (n, n), axis=(1, 2))
    win = win[:, ::stride, ::stride]
    out = np.einsum("cijab,ocab->oij", win, kernels)
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)[:, None, None]
    return out


def oracle_dense(x, weight, bias=None):
    x = np.asarray(x, dtype=np.float64)
    out = np.asarray(weight, dtype=np.float64) @ x
    if bias is not None:
        out = out + bias
    return out


@dataclass
class OracleRun:
    action: np.ndarray
    blocks: dict  # Table-style block outputs
    preact_max: dict  # site -> max |pre-activation| seen on this input
    features: np.ndarray  # feature-extractor output (the distillation tap)


def oracle_run_model(spec, store, image):
    """Plaintext forward pass with true activations."""
    x = np.asarray(image, dtype=np.float64)
    if x.shape != tuple(spec.input_hw):
        raise ShapeError(f"input shape {x.shape}, model expects {tuple(spec.input_hw)}")
    preact = {}
    feats = x[None]
    for blk in spec.conv_blocks:
        w = store.tensor(f"{blk.name}.weight")
        b = store.tensor(f"{blk.name}.bias")
        feats = oracle_conv_layer(feats, w, blk.stride, b)
        preact[blk.name] = float(np.abs(feats).max())
        feats = oracle_relu(feats)
    conv_out = feats

    flat = feats.reshape(-1)
    z = oracle_dense(flat, store.tensor(f"{spec.feature.name}.weight"),
                     store.tensor(f"{spec.feature.name}.bias"))
    preact[spec.feature.name] = float(np.abs(z).max())
    z = oracle_relu(z)
    features = z.copy()

    for d in spec.fc:
        z = oracle_dense(z, store.tensor(f"{d.name}.weight"), store.tensor(f"{d.name}.bias"))
        if d.activation == "tanh":
            preact[f"{d.name}.tanh"] = float(np.abs(z).max())
            z = oracle_tanh(z)
    linear_out = z.copy()

    for d in spec.head.layers:
        z = oracle_dense(z, store.tensor(f"{d.name}.weight"), store.tensor(f"{d.name}.bias"))
        if d.activation == "tanh":
            preact[f"{d.name}.tanh"] = float(np.abs(z).max())
            z = oracle_tanh(z)
    action = z.copy()

    return OracleRun(
        action=action,
        blocks={
            "Convolution": conv_out,
            "Linear": linear_out,
            "OpenAI Gym Library Blackbox": action,
        },
        preact_max=preact,
        features=features,
    )


# ---- metrics -------------------------------------------------------------


def mae(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).mean())


def r2(pred, target):
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if pred.shape != target.shape:
        raise ShapeError(f"length mismatch: {pred.shape} vs {target.shape}")
    ss_tot = float(((target - target.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise DegenerateInput("R^2 is undefined for a zero-variance target")
    ss_res = float(((target - pred) ** 2).sum())
    return 1.0 - ss_res / ss_tot


def rel_err(f, g, points):
    """Relative error curve |f(x) - g(x)| / |g(x)| over the given points."""
    xs = np.asarray(points, dtype=np.float64)
    fx = np.asarray(f(xs), dtype=np.float64)
    gx = np.asarray(g(xs), dtype=np.float64)
    return np.stack([xs, np.abs(fx - gx) / np.abs(gx)], axis=1)
