"""Torch actor networks mirroring the engine's architecture contract.

Feature extractor: valid (unpadded) strided conv blocks (conv + BN +
ReLU) followed by the flatten+dense linear block (dense + BN + ReLU) onto
the 64-dim latent.  FC segment: two shared tanh blocks plus a linear
output block.  Gym head: dense-tanh-dense-tanh-dense.  Layer names and
the architecture descriptor match the engine's weight-store schema.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

LATENT_DIM = 64

ARCHITECTURES = {
    "teacher": {"convs": [(64, 3, 2), (64, 3, 2), (128, 3, 1)]},
    "student1": {"convs": [(64, 3, 2), (64, 3, 2)]},
    "student2": {"convs": [(32, 3, 2), (32, 3, 2)]},
}


def conv_output_hw(input_hw, convs):
    h, w = input_hw
    for _, k, s in convs:
        h = (h - k) // s + 1
        w = (w - k) // s + 1
    return h, w


class ActorNet(nn.Module):
    def __init__(self, name, input_hw=(50, 150), action_dim=2):
        super().__init__()
        if name not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {name!r}")
        self.name = name
        self.input_hw = tuple(input_hw)
        self.action_dim = action_dim
        self.convs = ARCHITECTURES[name]["convs"]

        blocks = []
        channels = 1
        for out_ch, k, s in self.convs:
            blocks.append(
                nn.Sequential(
                    nn.Conv2d(channels, out_ch, k, stride=s),
                    nn.BatchNorm2d(out_ch),
                    nn.ReLU(),
                )
            )
            channels = out_ch
        self.conv_blocks = nn.ModuleList(blocks)

        oh, ow = conv_output_hw(input_hw, self.convs)
        self.flat_size = channels * oh * ow
        self.feature = nn.Sequential(
            nn.Flatten(),
            nn.Linear(self.flat_size, LATENT_DIM),
            nn.BatchNorm1d(LATENT_DIM),
            nn.ReLU(),
        )
        self.shared1 = nn.Linear(LATENT_DIM, LATENT_DIM)
        self.shared2 = nn.Linear(LATENT_DIM, LATENT_DIM)
        self.output = nn.Linear(LATENT_DIM, LATENT_DIM)
        self.head1 = nn.Linear(LATENT_DIM, LATENT_DIM)
        self.head2 = nn.Linear(LATENT_DIM, 32)
        self.head3 = nn.Linear(32, action_dim)

    def extract_features(self, x):
        """Feature-extractor output: the distillation tap point."""
        if x.dim() == 3:
            x = x[:, None]
        for block in self.conv_blocks:
            x = block(x)
        return self.feature(x)

    def forward(self, x, tanh_preacts=None):
        z = self.extract_features(x)
        z = self.head_forward(z, tanh_preacts)
        return z

    def head_forward(self, z, tanh_preacts=None):
        """FC segment plus Gym head, from the 64-dim latent."""

        def tanh(layer, value):
            pre = layer(value)
            if tanh_preacts is not None:
                tanh_preacts.append(pre)
            return torch.tanh(pre)

        z = tanh(self.shared1, z)
        z = tanh(self.shared2, z)
        z = self.output(z)
        z = tanh(self.head1, z)
        z = tanh(self.head2, z)
        return self.head3(z)

    def parameter_count(self):
        return sum(p.numel() for p in self.parameters())

    def describe(self):
        """Architecture descriptor in the engine's weight-store schema."""
        return {
            "name": self.name,
            "input_hw": list(self.input_hw),
            "conv_blocks": [
                {"name": f"conv{i+1}", "out_channels": c, "kernel": k, "stride": s}
                for i, (c, k, s) in enumerate(self.convs)
            ],
            "feature": {"name": "feature", "out_features": LATENT_DIM},
            "fc": [
                {"name": "shared1", "out_features": LATENT_DIM, "activation": "tanh"},
                {"name": "shared2", "out_features": LATENT_DIM, "activation": "tanh"},
                {"name": "output", "out_features": LATENT_DIM, "activation": "none"},
            ],
            "head": [
                {"name": "head1", "out_features": LATENT_DIM, "activation": "tanh"},
                {"name": "head2", "out_features": 32, "activation": "tanh"},
                {"name": "head3", "out_features": self.action_dim, "activation": "none"},
            ],
            "action_dim": self.action_dim,
        }


def fold_batchnorm(weight, bias, bn, eps=None):
    """Inference-time fold of a BatchNorm module into the preceding layer."""
    eps = bn.eps if eps is None else eps
    gamma = bn.weight.detach().cpu().double().numpy()
    beta = bn.bias.detach().cpu().double().numpy()
    mean = bn.running_mean.detach().cpu().double().numpy()
    var = bn.running_var.detach().cpu().double().numpy()
    w = weight.detach().cpu().double().numpy()
    b = bias.detach().cpu().double().numpy()
    factor = gamma / np.sqrt(var + eps)
    shape = (-1,) + (1,) * (w.ndim - 1)
    return w * factor.reshape(shape), (b - mean) * factor + beta


def folded_tensors(net):
    """All engine tensors with batch norm folded, as float64 arrays."""
    net = net.eval()
    tensors = {}
    for i, block in enumerate(net.conv_blocks, start=1):
        conv, bn = block[0], block[1]
        w, b = fold_batchnorm(conv.weight, conv.bias, bn)
        tensors[f"conv{i}.weight"] = w
        tensors[f"conv{i}.bias"] = b
    linear, bn = net.feature[1], net.feature[2]
    w, b = fold_batchnorm(linear.weight, linear.bias, bn)
    tensors["feature.weight"] = w
    tensors["feature.bias"] = b
    for name in ("shared1", "shared2", "output", "head1", "head2", "head3"):
        layer = getattr(net, name)
        tensors[f"{name}.weight"] = layer.weight.detach().cpu().double().numpy()
        tensors[f"{name}.bias"] = layer.bias.detach().cpu().double().numpy()
    return tensors
