"""Homomorphic Fourier transform via sparse-diagonal stage plans.

The DFT matrix is factorized Cooley-Tukey style into log2(M) radix-2
butterfly stages preceded by the bit-reversal permutation realized as its
own sparse-diagonal stage.  Row rescalings are carried through the
factorization so that every butterfly stage is *unit on its main
diagonal*: it stores at most two twiddle diagonals and is applied as

    out = x + diag_a * rot(x, a) + diag_b * rot(x, b)

costing two rotations, two plaintext multiplications and one level.  The
accumulated rescalings land on the permutation stage, whose cost is
accounted separately.  A transform of size M may be embedded in a larger
slot count N; diagonals are then zero outside the first M slots, which
also keeps the padding region exactly zero.

Convention: forward bin u is sum_v x[v] * exp(-2j*pi*u*v/M); the inverse
carries the 1/M factor, folded into its last stage.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .slotvm import Ciphertext, SlotVector, _is_pow2

FORWARD = "forward"
INVERSE = "inverse"


@dataclass(frozen=True)
class PlanStage:
    """One sparse-diagonal map: stored diagonals plus optional unit diagonal."""

    diagonals: tuple  # ((offset, np.ndarray of length n_slots), ...)
    plus_identity: bool
    block_size: int  # logical transform block; slots beyond it stay zero
    # generalized-permutation fast path: out[i] = scale[i] * x[idx[i]]
    gather_idx: np.ndarray | None = None
    gather_scale: np.ndarray | None = None

    def matrix(self, n_slots):
        """Dense matrix of this stage (for composition checks)."""
        m = np.eye(n_slots, dtype=np.complex128) if self.plus_identity else np.zeros(
            (n_slots, n_slots), dtype=np.complex128
        )
        idx = np.arange(n_slots)
        for off, diag in self.diagonals:
            m[idx, (idx + off) % n_slots] += diag
        return m


@dataclass(frozen=True)
class DftPlan:
    """Cooley-Tukey factorization of a DFT of ``size`` points in ``n_slots`` slots."""

    size: int
    n_slots: int
    direction: str
    stages: tuple
    scale: float  # bookkeeping: 1 (forward) or 1/size (inverse, already folded in)

    @property
    def depth(self):
        """Levels consumed by one application."""
        return len(self.stages)

    def compose_matrix(self):
        """Product of all stage matrices (logical M x M block)."""
        out = np.eye(self.n_slots, dtype=np.complex128)
        for st in self.stages:
            out = st.matrix(self.n_slots) @ out
        return out[: self.size, : self.size]

    def reference_matrix(self):
        """Exact DFT (or inverse DFT) matrix for this size and direction."""
        u, v = np.meshgrid(np.arange(self.size), np.arange(self.size), indexing="ij")
        if self.direction == FORWARD:
            return np.exp(-2j * np.pi * u * v / self.size)
        return np.exp(2j * np.pi * u * v / self.size) / self.size

    def apply_plain(self, values):
        """Apply the plan to a plaintext vector (testing/diagnostics)."""
        x = np.asarray(values, dtype=np.complex128)
        for st in self.stages:
            x = st.matrix(self.n_slots) @ x
        return x


def _bit_reversal(m):
    bits = m.bit_length() - 1
    idx = np.arange(m)
    rev = np.zeros(m, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _butterfly_matrix(m_total, block, conj):
    """DIT butterfly stage over blocks of size ``block``."""
    h = block // 2
    sign = 1j if conj else -1j
    mat = np.zeros((m_total, m_total), dtype=np.complex128)
    j = np.arange(h)
    w = np.exp(sign * 2 * np.pi * j / block)
    for b in range(0, m_total, block):
        rows = b + j
        mat[rows, rows] = 1.0
        mat[rows, rows + h] = w
        mat[rows + h, rows] = 1.0
        mat[rows + h, rows + h] = -w
    return mat


def _matrix_to_stage(mat, n_slots, tol=1e-15):
    """Extract the sparse-diagonal representation of an M x M stage matrix.

    Offsets are taken mod ``n_slots`` so an embedded transform addresses
    its sources with full-width rotations.  A unit main diagonal becomes
    the implicit identity term.
    """
    m = mat.shape[0]
    work = mat.copy()
    plus_identity = False
    diag0 = np.diag(work)
    if np.abs(diag0 - 1.0).max() < 1e-12:
        # unit main diagonal: fold into the implicit identity term.  For an
        # embedded transform (m < n_slots) this passes the padding region
        # through unchanged, which is exact because the permutation stage
        # runs first and zeroes everything outside the logical block.
        work = work - np.eye(m)
        plus_identity = True
    rows, cols = np.nonzero(np.abs(work) > tol)
    diags = {}
    for i, j in zip(rows, cols):
        off = int((j - i) % n_slots)
        d = diags.setdefault(off, np.zeros(n_slots, dtype=np.complex128))
        d[i] += work[i, j]
    diagonals = tuple(sorted(diags.items()))
    gather_idx = gather_scale = None
    if not plus_identity:
        # single source per output slot -> generalized permutation
        per_row = np.zeros(m, dtype=np.int64)
        np.add.at(per_row, rows, 1)
        if per_row.max() <= 1:
            gather_idx = np.arange(n_slots, dtype=np.int64)
            gather_scale = np.zeros(n_slots, dtype=np.complex128)
            gather_idx[rows] = cols
            gather_scale[rows] = work[rows, cols]
            gather_idx.setflags(write=False)
            gather_scale.setflags(write=False)
    for _, d in diagonals:
        d.setflags(write=False)
    return PlanStage(diagonals, plus_identity, m, gather_idx, gather_scale)


@functools.lru_cache(maxsize=None)
def plan_dft(size, direction=FORWARD, n_slots=None):
    """Build (and cache) the stage plan for a ``size``-point DFT.

    ``n_slots`` embeds the transform in a wider ciphertext; diagonals are
    zero outside the logical block so padding slots stay exactly zero.
    """
    if direction not in (FORWARD, INVERSE):
        raise ConfigError(f"direction must be forward or inverse, got {direction!r}")
    if not _is_pow2(size) or size < 2:
        raise ConfigError(f"transform size must be a power of two >= 2, got {size}")
    n_slots = size if n_slots is None else n_slots
    if not _is_pow2(n_slots) or n_slots < size:
        raise ConfigError(f"slot count {n_slots} cannot embed a {size}-point transform")

    conj = direction == INVERSE
    levels = size.bit_length() - 1
    butterflies = [_butterfly_matrix(size, 2**s, conj) for s in range(1, levels + 1)]

    if size == 2:
        # single whole-vector butterfly; bit reversal is the identity
        mat = butterflies[0]
        if conj:
            mat = mat / 2.0
        return DftPlan(size, n_slots, direction, (_matrix_to_stage(mat, n_slots),), 1.0 if not conj else 0.5)

    # carry row rescalings right-to-left so butterflies become unit-diagonal
    carry = np.ones(size, dtype=np.complex128)
    normalized = []
    for mat in reversed(butterflies):
        scaled = carry[:, None] * mat
        carry = np.diag(scaled).copy()
        normalized.append(scaled / carry[None, :])
    normalized.reverse()

    rev = _bit_reversal(size)
    perm = np.zeros((size, size), dtype=np.complex128)
    perm[np.arange(size), rev] = carry
    if conj:
        normalized[-1] = normalized[-1] / size  # 1/M folded into the last stage

    stages = [_matrix_to_stage(perm, n_slots)]
    stages.extend(_matrix_to_stage(m, n_slots) for m in normalized)
    return DftPlan(size, n_slots, direction, tuple(stages), 1.0 if not conj else 1.0 / size)


def _apply_stage_ct(vm, ct, stage):
    """One stage on a single ciphertext using the public instruction set."""
    acc = None
    for off, diag in stage.diagonals:
        term = ct if off == 0 else vm.rotate_left(ct, off)
        term = vm.mul_plain(term, diag)
        acc = term if acc is None else vm.add(acc, term)
    if stage.plus_identity:
        acc = vm.add(acc, ct)
    return acc


def hft(ct, plan, vm):
    """Homomorphic Fourier transform of one row ciphertext."""
    if not isinstance(ct, Ciphertext):
        raise ShapeError("hft expects a Ciphertext")
    if ct.n_slots != plan.n_slots:
        raise ShapeError(
            f"ciphertext has {ct.n_slots} slots but plan embeds in {plan.n_slots}"
        )
    for stage in plan.stages:
        ct = _apply_stage_ct(vm, ct, stage)
    return ct


def ihft(ct, plan, vm):
    """Inverse transform; ``plan`` must be an inverse-direction plan."""
    if plan.direction != INVERSE:
        raise ConfigError("ihft requires an inverse-direction plan")
    return hft(ct, plan, vm)


def hft_rows(rows, plan):
    """Batched transform of a _RowBlock (engine internal)."""
    for stage in plan.stages:
        rows = rows.apply_stage(stage)
    return rows


def fft_plain(values, direction=FORWARD):
    """Reference FFT for plaintext filters and tests (exact convention above)."""
    if isinstance(values, SlotVector):
        arr = values.values
    else:
        arr = np.asarray(values, dtype=np.complex128)
    if arr.ndim != 1 or not _is_pow2(arr.shape[0]):
        raise ConfigError("fft_plain requires a 1-D power-of-two length input")
    if direction == FORWARD:
        return SlotVector(np.fft.fft(arr))
    if direction == INVERSE:
        return SlotVector(np.fft.ifft(arr))
    raise ConfigError(f"direction must be forward or inverse, got {direction!r}")
