"""2D strided convolution on row-packed encrypted images.

Pipeline per filter (single input/output channel pair):

    dft2d -> slot-wise multiply with the filter spectrum -> idft2d
    -> per-row rotate_left((N - 2p) mod N) -> downward row re-index by 2p
    -> multiply with the 0/1 stride mask

The filter is stored flipped so the pipeline computes cross-correlation
(standard NN convention).  Zero padding of the kernel grid to the padded
image dimensions guarantees linear rather than circular convolution.

Strided outputs remain *spread*: a value for logical output (i, j) sits at
grid position (i*step, j*step) with zeros in between, because compacting
would need per-slot access.  ``row_step``/``col_step`` carry that layout to
downstream layers, which dilate their kernels / expand their weights to
match.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ConfigError, ShapeError
from .slotvm import Ciphertext, _is_pow2
from .transform import FORWARD, INVERSE, hft_rows, plan_dft


def _next_pow2(n):
    p = 1
    while p < n:
        p *= 2
    return p


@dataclass
class PackedImage:
    """One ciphertext per stored image row."""

    rows: list
    height: int  # number of stored row ciphertexts
    valid_width: int  # slots >= valid_width are zero at pack time
    n_slots: int
    row_step: int = 1  # spread layout: logical (i, j) lives at (i*row_step, j*col_step)
    col_step: int = 1

    @property
    def logical_height(self):
        return (self.height - 1) // self.row_step + 1

    @property
    def logical_width(self):
        return (self.valid_width - 1) // self.col_step + 1


def pack_image(matrix, vm):
    """Encrypt an R x W real matrix, one row per ciphertext."""
    mat = np.asarray(matrix, dtype=np.float64)
    if mat.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {mat.shape}")
    r, w = mat.shape
    n = vm.cfg.n_slots
    if r > n or w > n:
        raise CapacityError(f"{r}x{w} image does not fit {n} slots per dimension")
    rows = [vm.encrypt(vm.encode(mat[i])) for i in range(r)]
    return PackedImage(rows, r, w, n)


def unpack_image(img, vm, imag_tol=1e-6):
    """Decrypt to an R x W real matrix (test/diagnostic path)."""
    out = np.zeros((img.height, img.valid_width))
    for i, ct in enumerate(img.rows):
        vals = vm.decrypt(ct).values[: img.valid_width]
        if vm.cfg.noise_sigma == 0.0 and np.abs(vals.imag).max(initial=0.0) > imag_tol:
            raise ShapeError("unexpected imaginary residue in decrypted image row")
        out[i] = vals.real
    return out


def extract_logical(img, vm):
    """Read the logical (compact) value grid out of a spread packed image."""
    full = unpack_image(img, vm)
    return full[:: img.row_step, :: img.col_step][
        : img.logical_height, : img.logical_width
    ]


def transpose(img, vm):
    """Swap rows and slots of the valid region using mask-rotate-accumulate.

    Circuit: out_j = sum_i rotate_left(mul_plain(in_i, e_j), j - i); only
    plaintext masks are multiplied, so no ct-ct depth is spent.
    """
    if img.height > img.n_slots or img.valid_width > img.n_slots:
        raise ShapeError("transpose requires height and width <= slot count")
    block = vm._rows_from(img.rows).transpose(img.valid_width)
    return PackedImage(
        block.to_cts(),
        img.valid_width,
        img.height,
        img.n_slots,
        row_step=img.col_step,
        col_step=img.row_step,
    )


def _pad_block(block, target_rows, vm):
    have = block.n_rows
    if have > target_rows:
        raise ShapeError(f"image has {have} rows, cannot pad to {target_rows}")
    if have == target_rows:
        return block
    extra = target_rows - have
    vals = np.vstack([block.values, np.zeros((extra, block.values.shape[1]), dtype=np.complex128)])
    levels = np.concatenate([block.levels, np.full(extra, vm.cfg.depth_budget, dtype=np.int64)])
    noises = np.concatenate([block.noises, np.zeros(extra)])
    return type(block)(vm, vals, levels, noises)


def _dft2d_block(block, vm, row_plan, col_plan):
    n = block.values.shape[1]
    if row_plan.n_slots != n or (col_plan and col_plan.n_slots != n):
        raise ConfigError("plan slot counts do not match the image")
    block = hft_rows(block, row_plan)
    if col_plan is None:  # single stored row: the column transform is trivial
        return block
    block = _pad_block(block, col_plan.size, vm)
    t = block.transpose(n)  # spectra are dense over all n bins
    t = hft_rows(t, col_plan)
    return t.transpose(col_plan.size)


def dft2d(img, vm, row_plan, col_plan=None):
    """2D DFT of the zero-padded image grid.

    Steps: (i) HFT of every row; (ii) transpose (after padding the row
    list with zero ciphertexts to the column-transform size); (iii) row
    wise HFT of the transposed grid; (iv) transpose back.
    """
    block = _dft2d_block(vm._rows_from(img.rows), vm, row_plan, col_plan)
    return PackedImage(block.to_cts(), block.n_rows, img.n_slots, img.n_slots)


def idft2d(img, vm, row_plan, col_plan=None):
    """Inverse 2D transform; plans must be inverse-direction."""
    if row_plan.direction != INVERSE or (col_plan and col_plan.direction != INVERSE):
        raise ConfigError("idft2d requires inverse-direction plans")
    block = _dft2d_block(vm._rows_from(img.rows), vm, row_plan, col_plan)
    return PackedImage(block.to_cts(), block.n_rows, img.n_slots, img.n_slots)


@dataclass
class FilterSpectrum:
    """Plaintext 2D DFT of the zero-padded, flipped (and dilated) kernel."""

    spectrum: np.ndarray  # (rows_pad, n_slots) complex
    kernel_size: int  # base kernel side n
    dilation: int  # input spread step the kernel was dilated to
    extent: int  # dilated kernel extent (n-1)*dilation + 1
    stride: int
    pad_offset: int  # p: per-axis alignment offset, (N - extent + 1) / 2
    rows_pad: int
    n_slots: int
    in_phys: tuple  # physical (rows, cols) of the matching input

    def padded_kernel(self):
        """Inverse transform of the spectrum (the embedded plaintext grid)."""
        return np.fft.ifft2(self.spectrum)


@dataclass
class StrideMask:
    """0/1 grid selecting valid strided outputs at their spread positions."""

    grid: np.ndarray  # (rows_pad, n_slots) float 0/1
    out_logical: tuple  # (height, width) of the logical output
    out_step: tuple  # (row_step, col_step) of the output layout
    out_phys: tuple  # stored extent of the output


def prepare_filter(kernel, stride, image_phys, vm_cfg, dilation=1):
    """Build the filter spectrum and stride mask for one conv application.

    ``image_phys`` is the stored (rows, cols) extent of the input image;
    ``dilation`` is the input's spread step (kernel taps land on the
    spread grid).  Sizes are chosen so that rows_pad >= rows + extent - 1
    and cols + extent - 1 <= N, guaranteeing linear convolution.
    """
    ker = np.asarray(kernel, dtype=np.float64)
    if ker.ndim != 2 or ker.shape[0] != ker.shape[1]:
        raise ShapeError(f"kernel must be square, got {ker.shape}")
    n = ker.shape[0]
    n_slots = vm_cfg.n_slots
    r_phys, w_phys = image_phys
    extent = (n - 1) * dilation + 1
    if extent > r_phys or extent > w_phys:
        raise ShapeError(
            f"kernel extent {extent} exceeds image extent {r_phys}x{w_phys}"
        )
    if extent % 2 == 0:
        raise ConfigError("kernel extent must be odd for aligned extraction")
    if w_phys + extent - 1 > n_slots:
        raise CapacityError(
            f"width {w_phys} with kernel extent {extent} exceeds {n_slots} slots"
        )
    rows_pad = _next_pow2(r_phys + extent - 1)
    if rows_pad > n_slots:
        raise CapacityError("padded row count exceeds the slot count")

    grid = np.zeros((rows_pad, n_slots))
    flipped = ker[::-1, ::-1]
    grid[: extent : dilation, : extent : dilation] = flipped
    spectrum = np.fft.fft2(grid)
    pad_offset = (n_slots - extent + 1) // 2

    filt = FilterSpectrum(
        spectrum, n, dilation, extent, stride, pad_offset, rows_pad, n_slots,
        (r_phys, w_phys),
    )

    in_logical_h = (r_phys - 1) // dilation + 1
    in_logical_w = (w_phys - 1) // dilation + 1
    out_h = (in_logical_h - n) // stride + 1
    out_w = (in_logical_w - n) // stride + 1
    step = dilation * stride
    mask = np.zeros((rows_pad, n_slots))
    mask[: out_h * step : step, : out_w * step : step] = 1.0
    out_phys = ((out_h - 1) * step + 1, (out_w - 1) * step + 1)
    return filt, StrideMask(mask, (out_h, out_w), (step, step), out_phys)


def _conv_plans(filt):
    row_fwd = plan_dft(filt.n_slots, FORWARD)
    row_inv = plan_dft(filt.n_slots, INVERSE)
    if filt.rows_pad >= 2:
        col_fwd = plan_dft(filt.rows_pad, FORWARD, filt.n_slots)
        col_inv = plan_dft(filt.rows_pad, INVERSE, filt.n_slots)
    else:
        col_fwd = col_inv = None
    return row_fwd, row_inv, col_fwd, col_inv


def conv2d(img, filt, mask, vm):
    """Valid strided convolution of one packed image with one filter."""
    if img.n_slots != filt.n_slots:
        raise ShapeError("image and filter were prepared for different slot counts")
    if (img.height, img.valid_width) != filt.in_phys:
        raise ShapeError(
            f"filter prepared for {filt.in_phys}, image is "
            f"{(img.height, img.valid_width)}"
        )
    row_fwd, _, col_fwd, _ = _conv_plans(filt)
    padded = _pad_block(vm._rows_from(img.rows), filt.rows_pad, vm)
    freq = _dft2d_block(padded, vm, row_fwd, col_fwd)
    block = _conv_tail(freq, filt, mask, vm)
    return PackedImage(
        block.to_cts(), mask.out_phys[0], mask.out_phys[1], filt.n_slots,
        row_step=mask.out_step[0], col_step=mask.out_step[1],
    )


def _conv_tail(freq, filt, mask, vm):
    """Spectrum multiply, inverse transform, alignment, stride mask."""
    _, row_inv, _, col_inv = _conv_plans(filt)
    block = freq.mul_plain(filt.spectrum)
    spatial = _dft2d_block(block, vm, row_inv, col_inv)

    if vm.cfg.noise_sigma == 0.0:
        # simulation diagnostic: real-valued layers must come back real
        worst = np.abs(spatial.values.imag).max(initial=0.0)
        if worst > 1e-6:
            raise ShapeError(f"imaginary residue {worst:.2e} after inverse transform")

    n = filt.n_slots
    p = filt.pad_offset
    rot = (n - 2 * p) % n
    if rot:
        spatial = spatial.rotate(rot)
    shift = (2 * p) % filt.rows_pad  # downward row re-indexing, no VM op
    order = [(i - shift) % filt.rows_pad for i in range(filt.rows_pad)]
    spatial = type(spatial)(
        vm, spatial.values[order], spatial.levels[order], spatial.noises[order]
    )
    masked = spatial.mul_plain(mask.grid)
    keep = mask.out_phys[0]
    return type(masked)(
        vm, masked.values[:keep], masked.levels[:keep], masked.noises[:keep]
    )


def conv_layer(inputs, kernels, stride, bias, vm):
    """Multi-channel convolution block: out_c = sum_in conv2d(in, k) + bias.

    Composed literally from per-pair conv2d calls (the costed circuit).
    The forward transform of each input channel is memoized by value --
    identical sub-circuits produce identical ciphertexts -- while the
    ledger is charged for every modeled application.
    """
    kernels = np.asarray(kernels, dtype=np.float64)
    if kernels.ndim != 4:
        raise ShapeError("kernels must have shape (C_out, C_in, n, n)")
    c_out, c_in = kernels.shape[:2]
    if len(inputs) != c_in:
        raise ShapeError(f"{len(inputs)} input channels, kernels expect {c_in}")
    bias = np.zeros(c_out) if bias is None else np.asarray(bias, dtype=np.float64)

    first = inputs[0]
    dilation = first.row_step
    phys = (first.height, first.valid_width)
    for ch in inputs:
        if (ch.height, ch.valid_width) != phys or ch.row_step != dilation:
            raise ShapeError("input channels disagree on layout")

    filt0, mask = prepare_filter(
        kernels[0, 0], stride, phys, vm.cfg, dilation=dilation
    )
    row_fwd, _, col_fwd, _ = _conv_plans(filt0)

    # forward transforms, memoized per input channel: identical sub-circuits
    # yield identical ciphertexts, so values are reused while the ledger is
    # charged for every modeled application
    freq_cache = {}
    dft_cost = None

    def channel_spectrum(ci):
        nonlocal dft_cost
        if ci in freq_cache:
            vm._counts.__iadd__(dft_cost)
            return freq_cache[ci]
        before = vm._counts.copy()
        padded = _pad_block(vm._rows_from(inputs[ci].rows), filt0.rows_pad, vm)
        freq = _dft2d_block(padded, vm, row_fwd, col_fwd)
        dft_cost = OpDelta(before, vm._counts)
        freq_cache[ci] = freq
        return freq

    outputs = []
    for co in range(c_out):
        acc = None
        for ci in range(c_in):
            filt, _ = prepare_filter(
                kernels[co, ci], stride, phys, vm.cfg, dilation=dilation
            )
            out = _conv_tail(channel_spectrum(ci), filt, mask, vm)
            acc = out if acc is None else acc.add_rows(out)
        if bias[co] != 0.0:
            acc = acc.add_plain(bias[co] * mask.grid[: acc.n_rows])
        outputs.append(
            PackedImage(
                acc.to_cts(), mask.out_phys[0], mask.out_phys[1], filt0.n_slots,
                row_step=mask.out_step[0], col_step=mask.out_step[1],
            )
        )
    return outputs


class OpDelta:
    """Difference of two counter snapshots, replayable onto a ledger."""

    def __init__(self, before, after):
        self.mults_ct_ct = after.mults_ct_ct - before.mults_ct_ct
        self.mults_ct_pt = after.mults_ct_pt - before.mults_ct_pt
        self.rotations = after.rotations - before.rotations
        self.adds = after.adds - before.adds


def spatial_conv2d(img, kernel, stride, vm):
    """In-VM spatial-domain baseline: rotate, mask-multiply, accumulate.

    Costs one ct-pt multiplication per kernel tap per output row, i.e.
    O(m^2 * n^2) slot work, against which the frequency path is compared.
    Dense (step-1) inputs only.
    """
    ker = np.asarray(kernel, dtype=np.float64)
    n = ker.shape[0]
    if img.row_step != 1 or img.col_step != 1:
        raise ShapeError("spatial baseline supports dense images only")
    out_h = (img.height - n) // stride + 1
    out_w = (img.valid_width - n) // stride + 1
    if out_h < 1 or out_w < 1:
        raise ShapeError("kernel larger than image")
    colmask = np.zeros(img.n_slots)
    colmask[: out_w * stride : stride] = 1.0
    out_rows = []
    for i in range(out_h):
        acc = None
        for a in range(n):
            row = img.rows[i * stride + a]
            for b in range(n):
                term = vm.rotate_left(row, b)
                term = vm.mul_plain(term, ker[a, b] * colmask)
                acc = term if acc is None else vm.add(acc, term)
        out_rows.append(acc)
    return PackedImage(
        out_rows, out_h, (out_w - 1) * stride + 1, img.n_slots,
        row_step=1, col_step=stride,
    )
