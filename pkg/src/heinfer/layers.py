"""Network-level operators and the end-to-end encrypted executor.

Ledger block labels mirror the evaluation tables: conv blocks run as
"Convolution", the flatten+dense block and the FC segment as "Linear",
and the head as "OpenAI Gym Library Blackbox".
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import models
from .activations import ScaleInfo, SignApproxConfig, _relu_rows, tanh_approx
from .convolution import PackedImage, conv_layer, extract_logical, pack_image
from .errors import ConfigError, DepthExhausted, EngineError, NumericalError, ShapeError

log = logging.getLogger(__name__)

BLOCK_CONV = "Convolution"
BLOCK_LINEAR = "Linear"
BLOCK_GYM = "OpenAI Gym Library Blackbox"
BLOCK_LABELS = (BLOCK_CONV, BLOCK_LINEAR, BLOCK_GYM)


def fold_batchnorm(weight, bias, gamma, beta, mean, var, eps=1e-5):
    """Fold inference-time batch norm into the preceding layer's weights.

    W' = W * gamma / sqrt(var + eps) per output unit,
    b' = (b - mean) * gamma / sqrt(var + eps) + beta.
    """
    weight = np.asarray(weight, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    if np.any(var + eps <= 0):
        raise NumericalError("batch-norm variance plus eps must be positive")
    factor = gamma / np.sqrt(var + eps)
    shape = (-1,) + (1,) * (weight.ndim - 1)
    return weight * factor.reshape(shape), (bias - mean) * factor + beta


def dense(ct, weight, bias, vm):
    """W . x + b into slots 0..M-1: row multiply, rotate-sum, unit mask."""
    weight = np.asarray(weight, dtype=np.float64)
    if weight.ndim != 2:
        raise ShapeError("dense weight must be a matrix")
    m, k = weight.shape
    n = vm.cfg.n_slots
    if k > n or m > n:
        raise ShapeError(f"dense {m}x{k} does not fit {n} slots")
    acc = None
    for i in range(m):
        row = np.zeros(n)
        row[:k] = weight[i]
        t = vm.rotate_sum(vm.mul_plain(ct, row))
        e = np.zeros(n)
        e[i] = 1.0
        t = vm.mul_plain(t, e)
        acc = t if acc is None else vm.add(acc, t)
    if bias is not None:
        b = np.zeros(n)
        b[:m] = np.asarray(bias, dtype=np.float64)
        acc = vm.add(acc, b)
    return acc


def flatten_dense(images, layer_weight, bias, vm, index=None):
    """Fused flatten + dense over spread conv outputs.

    Per output j: multiply every row ciphertext by its expanded weight
    vector, accumulate, rotate-sum, then mask the total into slot j.
    ``layer_weight`` is the logical (M, C*lh*lw) matrix; ``index`` maps
    logical positions onto (global row, slot) of the packed layout.
    """
    if isinstance(images, PackedImage):
        images = [images]
    rows = []
    for img in images:
        rows.extend(img.rows)
    block = vm._rows_from(rows)
    n = vm.cfg.n_slots
    weight = np.asarray(layer_weight, dtype=np.float64)
    m = weight.shape[0]
    if index is None:
        index = flatten_index(images)
    row_idx, slot_idx = index
    if weight.shape[1] != row_idx.shape[0]:
        raise ShapeError(
            f"flatten weight expects {weight.shape[1]} inputs, layout has {row_idx.shape[0]}"
        )
    acc = None
    for j in range(m):
        grid = np.zeros((len(rows), n))
        grid[row_idx, slot_idx] = weight[j]
        total = block.mul_plain(grid).sum_rows()
        total = vm.rotate_sum(total)
        e = np.zeros(n)
        e[j] = 1.0
        t = vm.mul_plain(total, e)
        acc = t if acc is None else vm.add(acc, t)
    if bias is not None:
        b = np.zeros(n)
        b[:m] = np.asarray(bias, dtype=np.float64)
        acc = vm.add(acc, b)
    return acc


def flatten_index(images):
    """(global row, slot) of each logical (c, i, j) position, row-major."""
    row_idx, slot_idx = [], []
    base = 0
    for img in images:
        lh, lw = img.logical_height, img.logical_width
        for i in range(lh):
            for j in range(lw):
                row_idx.append(base + i * img.row_step)
                slot_idx.append(j * img.col_step)
        base += img.height
    return np.asarray(row_idx), np.asarray(slot_idx)


def gym_head(ct, spec, store, vm):
    """Three chained dense ops with tanh between layers 1-2 and 2-3."""
    for d in spec.layers:
        ct = dense(ct, store.tensor(f"{d.name}.weight"), store.tensor(f"{d.name}.bias"), vm)
        if d.activation == "tanh":
            ct = tanh_approx(ct, vm)
    return ct


@dataclass
class RunResult:
    action: np.ndarray
    intermediates: dict | None
    levels_used: dict
    block_seconds: dict
    output_ct: object


def _relu_images(images, scale, cfg, vm):
    """Approximate ReLU across every row of every channel in one batch."""
    rows = []
    for img in images:
        rows.extend(img.rows)
    out = _relu_rows(vm._rows_from(rows), scale, cfg).to_cts()
    rebuilt, pos = [], 0
    for img in images:
        rebuilt.append(
            PackedImage(
                out[pos : pos + img.height], img.height, img.valid_width,
                img.n_slots, img.row_step, img.col_step,
            )
        )
        pos += img.height
    return rebuilt


def _images_to_logical(images, vm):
    return np.stack([extract_logical(img, vm) for img in images])


def run_model(spec, store, image, vm, sign_cfg=None, collect=False):
    """Execute the actor network end to end on the VM.

    ``image`` is a PackedImage (or a plain matrix, packed here).  With
    ``collect`` the decrypted per-block outputs are recorded for oracle
    comparison; production use returns only the action.
    """
    sign_cfg = sign_cfg or SignApproxConfig()
    store.validate()
    if not isinstance(image, PackedImage):
        image = pack_image(image, vm)
    if (image.height, image.valid_width) != tuple(spec.input_hw):
        raise ShapeError(
            f"input is {(image.height, image.valid_width)}, model expects {tuple(spec.input_hw)}"
        )

    intermediates = {} if collect else None
    levels_used = {}
    block_seconds = {}
    start_level = image.rows[0].level

    def note_levels(label, cts):
        level = min(ct.level for ct in cts)
        levels_used[label] = start_level - level

    channels = [image]
    tick = time.perf_counter()
    with vm.block(BLOCK_CONV):
        for blk in spec.conv_blocks:
            with vm.block(blk.name):
                try:
                    channels = conv_layer(
                        channels,
                        store.tensor(f"{blk.name}.weight"),
                        blk.stride,
                        store.tensor(f"{blk.name}.bias"),
                        vm,
                    )
                    channels = _relu_images(
                        channels, store.scale(blk.name), sign_cfg, vm
                    )
                except DepthExhausted:
                    raise
                except EngineError as exc:
                    raise type(exc)(f"[{BLOCK_CONV}/{blk.name}] {exc}") from exc
    block_seconds[BLOCK_CONV] = time.perf_counter() - tick
    note_levels(BLOCK_CONV, [ct for img in channels for ct in img.rows])
    if collect:
        intermediates[BLOCK_CONV] = _images_to_logical(channels, vm)

    tick = time.perf_counter()
    with vm.block(BLOCK_LINEAR):
        try:
            ct = flatten_dense(
                channels,
                store.tensor(f"{spec.feature.name}.weight"),
                store.tensor(f"{spec.feature.name}.bias"),
                vm,
            )
            gate_rows = _relu_rows(
                vm._rows_from([ct]), store.scale(spec.feature.name), sign_cfg
            )
            ct = gate_rows.to_cts()[0]
            for d in spec.fc:
                ct = dense(ct, store.tensor(f"{d.name}.weight"), store.tensor(f"{d.name}.bias"), vm)
                if d.activation == "tanh":
                    if collect:
                        _check_tanh_domain(ct, d.name, spec, vm)
                    ct = tanh_approx(ct, vm)
        except DepthExhausted:
            raise
        except EngineError as exc:
            raise type(exc)(f"[{BLOCK_LINEAR}] {exc}") from exc
    block_seconds[BLOCK_LINEAR] = time.perf_counter() - tick
    note_levels(BLOCK_LINEAR, [ct])
    if collect:
        intermediates[BLOCK_LINEAR] = _payload(ct, spec.fc[-1].out_features, vm)

    tick = time.perf_counter()
    with vm.block(BLOCK_GYM):
        try:
            for d in spec.head.layers:
                ct = dense(ct, store.tensor(f"{d.name}.weight"), store.tensor(f"{d.name}.bias"), vm)
                if d.activation == "tanh":
                    if collect:
                        _check_tanh_domain(ct, d.name, spec, vm)
                    ct = tanh_approx(ct, vm)
        except DepthExhausted:
            raise
        except EngineError as exc:
            raise type(exc)(f"[{BLOCK_GYM}] {exc}") from exc
    block_seconds[BLOCK_GYM] = time.perf_counter() - tick
    note_levels(BLOCK_GYM, [ct])
    action = _payload(ct, spec.action_dim, vm)
    if collect:
        intermediates[BLOCK_GYM] = action
    if not np.all(np.isfinite(action)):
        log.warning(
            "non-finite action: the input likely drove a pre-activation far "
            "outside its calibrated scale, where the polynomial "
            "approximations diverge"
        )

    return RunResult(action, intermediates, levels_used, block_seconds, ct)


def _payload(ct, length, vm):
    return vm.decrypt(ct).real_payload(length)


def _check_tanh_domain(ct, name, spec, vm):
    # diagnostic only: the engine cannot compare under encryption, so
    # domain violations are logged, never enforced
    vals = _payload(ct, max(spec.latent_dim, spec.action_dim), vm)
    worst = np.abs(vals).max()
    if worst > 2.0:
        log.warning("pre-tanh value %.3f at %s exceeds the [-2, 2] domain", worst, name)


def required_depth(spec, vm_cfg, sign_depth=None):
    """Analytic level requirement of one inference under this config."""
    sign_depth = sign_depth if sign_depth is not None else SignApproxConfig().depth
    n = vm_cfg.n_slots
    log2n = n.bit_length() - 1
    relu_depth = sign_depth * 4 + 2
    total = 0
    for lay in models.conv_layouts(spec):
        extent = (lay.kernel - 1) * lay.in_step + 1
        rows_pad = 1
        while rows_pad < lay.in_phys[0] + extent - 1:
            rows_pad *= 2
        col_stages = (rows_pad.bit_length() - 1) + 1 if rows_pad >= 2 else 0
        row_stages = log2n + 1
        dft = row_stages + 1 + col_stages + 1  # row hft, transpose, col hft, transpose
        total += dft + 1 + dft + 1  # spectrum multiply + inverse + stride mask
        total += relu_depth
    total += 2 + relu_depth  # flatten_dense + feature ReLU
    for _, _, _, act in models.dense_chain(spec):
        total += 2  # weight multiply + unit mask
        if act == "tanh":
            total += 4
    return total
