"""Activation-scale calibration on a task sample.

ReLU sites get S = max observed |pre-activation| times a 1.1 safety
margin (floor 1e-3 for degenerate nets).  Tanh sites are verified against
the [-2, 2] approximation domain; if the calibration batch exceeds it
(the training penalty normally prevents this), the offending dense layer
is rescaled toward the limit.
"""

from __future__ import annotations

import numpy as np
import torch

SCALE_MARGIN = 1.1
SCALE_FLOOR = 1e-3
TANH_DOMAIN = 2.0
TANH_RESCALE_TARGET = 1.8

RELU_SITES = ("conv", "feature")
TANH_SITES = ("shared1", "shared2", "head1", "head2")


def _site_maxima(net, images):
    """Max |pre-activation| per site over a batch, through eval-mode BN."""
    net = net.eval()
    x = torch.as_tensor(np.asarray(images), dtype=torch.float32)
    if x.dim() == 3:
        x = x[:, None]
    maxima = {}
    with torch.no_grad():
        for i, block in enumerate(net.conv_blocks, start=1):
            conv, bn = block[0], block[1]
            pre = bn(conv(x))
            maxima[f"conv{i}"] = float(pre.abs().max())
            x = torch.relu(pre)
        flat = net.feature[0](x)
        pre = net.feature[2](net.feature[1](flat))
        maxima["feature"] = float(pre.abs().max())
        z = torch.relu(pre)
        preacts = []
        net.head_forward(z, tanh_preacts=preacts)
        for name, pre in zip(TANH_SITES, preacts):
            maxima[f"{name}.tanh"] = float(pre.abs().max())
    return maxima


def calibrate_scales(net, images, rescale_tanh=True):
    """ReLU scales for the weight store, after bounding every tanh site."""
    if rescale_tanh:
        for _ in range(4):
            maxima = _site_maxima(net, images)
            dirty = False
            for name in TANH_SITES:
                seen = maxima[f"{name}.tanh"]
                if seen > TANH_DOMAIN:
                    factor = TANH_RESCALE_TARGET / seen
                    layer = getattr(net, name)
                    with torch.no_grad():
                        layer.weight.mul_(factor)
                        layer.bias.mul_(factor)
                    dirty = True
            if not dirty:
                break
    maxima = _site_maxima(net, images)
    scales = {}
    for i in range(1, len(net.conv_blocks) + 1):
        scales[f"conv{i}"] = max(maxima[f"conv{i}"] * SCALE_MARGIN, SCALE_FLOOR)
    scales["feature"] = max(maxima["feature"] * SCALE_MARGIN, SCALE_FLOOR)
    return scales


def tanh_violation_rate(net, images):
    """Fraction of tanh-site activations outside [-2, 2] on fresh data."""
    net = net.eval()
    x = torch.as_tensor(np.asarray(images), dtype=torch.float32)
    preacts = []
    with torch.no_grad():
        net(x, tanh_preacts=preacts)
    total = sum(p.numel() for p in preacts)
    bad = sum(int((p.abs() > TANH_DOMAIN).sum()) for p in preacts)
    return bad / total
