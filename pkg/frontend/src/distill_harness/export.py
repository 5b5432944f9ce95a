"""Weight export: folded tensors + calibrated scales -> engine store file."""

from __future__ import annotations

import numpy as np
import torch

from .networks import folded_tensors
from .store import read_store, store_bytes, write_store


def export_weights(net, scales, path):
    """Fold batch norm, serialize, and verify the file round-trips."""
    tensors = folded_tensors(net)
    blob = write_store(path, net.describe(), tensors, scales)
    arch, back_tensors, back_scales = read_store(path)
    again = store_bytes(arch, back_tensors, back_scales)
    if again != blob:
        raise RuntimeError("weight store did not round-trip bit-exactly")
    return path


def plaintext_forward(net, images):
    """Harness-side reference output in float64 (the parity baseline)."""
    net = net.eval().double()
    x = torch.as_tensor(np.asarray(images, dtype=np.float64))
    with torch.no_grad():
        out = net(x).numpy()
    net.float()
    return out
