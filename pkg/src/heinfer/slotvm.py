"""CKKS-style slot virtual machine.

Simulates the computation contract of a leveled HE scheme over complex
slot vectors: power-of-two slot counts, SIMD-only access, a multiplicative
depth budget, optional per-multiplication noise, and full operation
accounting.  No lattice cryptography is performed; the VM enforces the
same algorithmic constraints so circuits built on it transfer unchanged.

Public instruction set (the only ways to touch a ciphertext):
    encode, encrypt, decrypt, add, mul, mul_plain, rotate_left, rotate_sum
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ConfigError, DepthExhausted, ShapeError

PLAIN_LEVEL = float("inf")  # plaintext operands never consume depth on add

_UNLABELED = "unlabeled"


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


class SlotVector:
    """Plaintext slot vector: payload followed by exact zeros, length N."""

    __slots__ = ("values",)

    def __init__(self, values):
        arr = np.asarray(values, dtype=np.complex128).copy()
        if arr.ndim != 1:
            raise ShapeError(f"slot vector must be 1-D, got shape {arr.shape}")
        if not _is_pow2(arr.shape[0]):
            raise ConfigError(f"slot count {arr.shape[0]} is not a power of two")
        arr.setflags(write=False)
        self.values = arr

    def __len__(self):
        return self.values.shape[0]

    def real_payload(self, length=None):
        """Real parts of the first ``length`` slots (default: all)."""
        vals = self.values if length is None else self.values[:length]
        return vals.real.copy()

    def __repr__(self):
        return f"SlotVector(n={len(self)})"


def encode(values, n_slots):
    """Pack ``values`` into a SlotVector of length ``n_slots``, zero padded."""
    if not _is_pow2(n_slots):
        raise ConfigError(f"slot count {n_slots} is not a power of two")
    arr = np.asarray(values, dtype=np.complex128)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ShapeError(f"payload must be 1-D, got shape {arr.shape}")
    if arr.shape[0] > n_slots:
        raise CapacityError(f"payload of {arr.shape[0]} values exceeds {n_slots} slots")
    out = np.zeros(n_slots, dtype=np.complex128)
    out[: arr.shape[0]] = arr
    return SlotVector(out)


class Ciphertext:
    """Encrypted slot vector plus level counter and simulated noise state.

    Slots are deliberately private: the instruction set gives no per-slot
    access, only whole-vector SIMD operations.
    """

    __slots__ = ("_slots", "_level", "_noise")

    def __init__(self, slots, level, noise):
        slots = np.asarray(slots, dtype=np.complex128)
        slots.setflags(write=False)
        self._slots = slots
        if level < 0:
            raise DepthExhausted(f"level {level} below zero")
        self._level = int(level)
        self._noise = float(noise)

    @property
    def n_slots(self):
        return self._slots.shape[0]

    @property
    def level(self):
        """Remaining multiplicative depth."""
        return self._level

    @property
    def noise_accum(self):
        """Accumulated simulated noise magnitude (bookkeeping scalar)."""
        return self._noise

    def __repr__(self):
        return f"Ciphertext(n={self.n_slots}, level={self._level})"


@dataclass
class VmConfig:
    """Simulation knobs for the HE computation contract."""

    n_slots: int = 256
    depth_budget: int = 40
    noise_sigma: float = 0.0  # 0 = exact mode; relative noise per multiplication
    literal_rotate_sum: bool = False  # N-1 single-step rotations instead of the log tree
    seed: int | None = None  # RNG seed for the noise model

    def __post_init__(self):
        if not _is_pow2(self.n_slots):
            raise ConfigError(f"n_slots {self.n_slots} is not a power of two")
        if self.depth_budget < 1:
            raise ConfigError(f"depth_budget must be >= 1, got {self.depth_budget}")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")


@dataclass
class OpCounts:
    """Homomorphic operation counters for one block."""

    mults_ct_ct: int = 0
    mults_ct_pt: int = 0
    rotations: int = 0
    adds: int = 0

    @property
    def mults(self):
        """Total ciphertext multiplications (ct-ct plus ct-pt)."""
        return self.mults_ct_ct + self.mults_ct_pt

    def __iadd__(self, other):
        self.mults_ct_ct += other.mults_ct_ct
        self.mults_ct_pt += other.mults_ct_pt
        self.rotations += other.rotations
        self.adds += other.adds
        return self

    def copy(self):
        return OpCounts(self.mults_ct_ct, self.mults_ct_pt, self.rotations, self.adds)

    def as_dict(self):
        return {
            "mults_ct_ct": self.mults_ct_ct,
            "mults_ct_pt": self.mults_ct_pt,
            "rotations": self.rotations,
            "adds": self.adds,
        }


class CostLedger:
    """Per-block operation counters; the desk-scale analog of wall-clock tables."""

    def __init__(self):
        self.blocks: dict[str, OpCounts] = {}

    def counts(self, label):
        if label not in self.blocks:
            self.blocks[label] = OpCounts()
        return self.blocks[label]

    @property
    def total(self):
        agg = OpCounts()
        for c in self.blocks.values():
            agg += c
        return agg

    def merge(self, other):
        """Fold another ledger in; commutative and associative."""
        for label, c in other.blocks.items():
            self.counts(label).__iadd__(c)
        return self

    def copy(self):
        out = CostLedger()
        out.merge(self)
        return out

    def as_dict(self):
        return {label: c.as_dict() for label, c in sorted(self.blocks.items())}


class SlotVm:
    """Executes the homomorphic instruction set and keeps the cost ledger."""

    def __init__(self, cfg=None):
        self.cfg = cfg or VmConfig()
        self.ledger = CostLedger()
        self._rng = np.random.default_rng(self.cfg.seed)
        self._block_stack: list[str] = []

    # ---- block labelling -------------------------------------------------

    @contextmanager
    def block(self, label):
        """Route ledger contributions (and error labels) to ``label``."""
        self._block_stack.append(label)
        try:
            yield self
        finally:
            self._block_stack.pop()

    @property
    def _counts(self):
        label = self._block_stack[0] if self._block_stack else _UNLABELED
        return self.ledger.counts(label)

    @property
    def _block_path(self):
        return "/".join(self._block_stack) if self._block_stack else None

    # ---- instruction set ---------------------------------------------------

    def encode(self, values):
        return encode(values, self.cfg.n_slots)

    def encrypt(self, pt):
        if not isinstance(pt, SlotVector):
            raise ConfigError("encrypt expects a SlotVector; use encode() first")
        if len(pt) != self.cfg.n_slots:
            raise ConfigError(
                f"plaintext has {len(pt)} slots, VM is configured for {self.cfg.n_slots}"
            )
        return Ciphertext(pt.values, self.cfg.depth_budget, 0.0)

    def encrypt_values(self, values):
        """Convenience: encode then encrypt."""
        return self.encrypt(self.encode(values))

    def decrypt(self, ct):
        self._check_ct(ct)
        return SlotVector(ct._slots)

    def add(self, a, b):
        self._check_ct(a)
        if isinstance(b, Ciphertext):
            if b.n_slots != a.n_slots:
                raise ShapeError(f"slot counts differ: {a.n_slots} vs {b.n_slots}")
            out = a._slots + b._slots
            level = min(a._level, b._level)
            noise = a._noise + b._noise
        else:
            p = self._as_plain(b, a.n_slots)
            out = a._slots + p
            level = a._level
            noise = a._noise
        self._counts.adds += 1
        return Ciphertext(out, level, noise)

    def mul(self, a, b):
        self._check_ct(a)
        if not isinstance(b, Ciphertext):
            raise ShapeError("mul expects two ciphertexts; use mul_plain for plaintexts")
        if b.n_slots != a.n_slots:
            raise ShapeError(f"slot counts differ: {a.n_slots} vs {b.n_slots}")
        level = self._consume_level(min(a._level, b._level))
        prod = a._slots * b._slots
        prod, noise = self._apply_noise(prod, a._noise + b._noise)
        self._counts.mults_ct_ct += 1
        return Ciphertext(prod, level, noise)

    def mul_plain(self, a, p):
        self._check_ct(a)
        p = self._as_plain(p, a.n_slots)
        level = self._consume_level(a._level)
        prod = a._slots * p
        prod, noise = self._apply_noise(prod, a._noise)
        self._counts.mults_ct_pt += 1
        return Ciphertext(prod, level, noise)

    def rotate_left(self, ct, k):
        self._check_ct(ct)
        self._counts.rotations += 1
        return Ciphertext(np.roll(ct._slots, -int(k)), ct._level, ct._noise)

    def rotate_sum(self, ct):
        """Replicate the sum of all slots into every slot.

        Default is the log2(N)-step rotate-and-add tree; with
        ``literal_rotate_sum`` the sum is built from N-1 single-step
        rotations, as the flattening layer describes it.  Results agree,
        only the rotation count differs.
        """
        self._check_ct(ct)
        n = ct.n_slots
        if self.cfg.literal_rotate_sum:
            acc = ct
            cur = ct
            for _ in range(n - 1):
                cur = self.rotate_left(cur, 1)
                acc = self.add(acc, cur)
            return acc
        acc = ct
        shift = 1
        while shift < n:
            acc = self.add(acc, self.rotate_left(acc, shift))
            shift *= 2
        return acc

    # ---- internals -----------------------------------------------------

    def _check_ct(self, ct):
        if not isinstance(ct, Ciphertext):
            raise ShapeError(f"expected a Ciphertext, got {type(ct).__name__}")
        if ct.n_slots != self.cfg.n_slots:
            raise ShapeError(
                f"ciphertext has {ct.n_slots} slots, VM is configured for {self.cfg.n_slots}"
            )

    def _as_plain(self, p, n_slots):
        if isinstance(p, SlotVector):
            arr = p.values
        else:
            arr = np.asarray(p, dtype=np.complex128)
        if arr.ndim != 1 or arr.shape[0] != n_slots:
            raise ShapeError(f"plaintext operand must have {n_slots} slots")
        return arr

    def _consume_level(self, level):
        if level < 1:
            raise DepthExhausted(
                "multiplicative depth budget exhausted", block=self._block_path
            )
        return level - 1

    def _apply_noise(self, prod, noise_in):
        sigma = self.cfg.noise_sigma
        if sigma == 0.0:
            return prod, noise_in
        mag = np.abs(prod)
        eps = self._rng.normal(0.0, 1.0, mag.shape) + 1j * self._rng.normal(
            0.0, 1.0, mag.shape
        )
        return prod + eps * (sigma * mag), noise_in + sigma

    # ---- batched execution (engine internal) ----------------------------
    #
    # The helpers below run many independent row ciphertexts through the
    # same instruction sequence at numpy speed.  They are value-, level-
    # and ledger-equivalent to looping the public instruction set row by
    # row (asserted by tests); they are not part of the instruction set.

    def _rows_from(self, cts):
        vals = np.stack([ct._slots for ct in cts])
        levels = np.array([ct._level for ct in cts], dtype=np.int64)
        noises = np.array([ct._noise for ct in cts])
        return _RowBlock(self, vals, levels, noises)

    def _bulk_noise(self, values, noises, per_row_mults=1):
        if self.cfg.noise_sigma == 0.0:
            return values, noises
        mag = np.abs(values)
        eps = self._rng.normal(0.0, 1.0, values.shape) + 1j * self._rng.normal(
            0.0, 1.0, values.shape
        )
        return values + eps * (self.cfg.noise_sigma * mag), noises + (
            self.cfg.noise_sigma * per_row_mults
        )


def _roll_left(values, k):
    """Cyclic left rotation of every row: out[:, i] = values[:, (i+k) % w]."""
    w = values.shape[1]
    k %= w
    if k == 0:
        return values.copy()
    return np.concatenate([values[:, k:], values[:, :k]], axis=1)


class _RowBlock:
    """A stack of row ciphertexts advanced in lockstep (engine internal)."""

    __slots__ = ("vm", "values", "levels", "noises")

    def __init__(self, vm, values, levels, noises):
        self.vm = vm
        self.values = values
        self.levels = levels
        self.noises = noises

    @property
    def n_rows(self):
        return self.values.shape[0]

    def to_cts(self):
        return [
            Ciphertext(self.values[i], int(self.levels[i]), float(self.noises[i]))
            for i in range(self.n_rows)
        ]

    def copy(self):
        return _RowBlock(self.vm, self.values.copy(), self.levels.copy(), self.noises.copy())

    def _dec_levels(self):
        if self.levels.min() < 1:
            raise DepthExhausted(
                "multiplicative depth budget exhausted", block=self.vm._block_path
            )
        return self.levels - 1

    def rotate(self, k):
        """rotate_left every row by k (counts one rotation per row)."""
        self.vm._counts.rotations += self.n_rows
        return _RowBlock(
            self.vm, _roll_left(self.values, int(k)), self.levels.copy(), self.noises.copy()
        )

    def mul_plain(self, diag):
        """Multiply every row by a plaintext diagonal ((N,) or (rows, N))."""
        levels = self._dec_levels()
        vals = self.values * diag
        vals, noises = self.vm._bulk_noise(vals, self.noises)
        self.vm._counts.mults_ct_pt += self.n_rows
        return _RowBlock(self.vm, vals, levels, noises)

    def mul_rows(self, other):
        """Slot-wise ct-ct product row by row."""
        lv = np.minimum(self.levels, other.levels)
        if lv.min() < 1:
            raise DepthExhausted(
                "multiplicative depth budget exhausted", block=self.vm._block_path
            )
        vals = self.values * other.values
        vals, noises = self.vm._bulk_noise(vals, self.noises + other.noises)
        self.vm._counts.mults_ct_ct += self.n_rows
        return _RowBlock(self.vm, vals, lv - 1, noises)

    def add_rows(self, other):
        self.vm._counts.adds += self.n_rows
        return _RowBlock(
            self.vm,
            self.values + other.values,
            np.minimum(self.levels, other.levels),
            self.noises + other.noises,
        )

    def add_plain(self, arr):
        self.vm._counts.adds += self.n_rows
        return _RowBlock(self.vm, self.values + arr, self.levels.copy(), self.noises.copy())

    def sum_rows(self):
        """Accumulate all rows into one ciphertext (zero-initialised temp)."""
        self.vm._counts.adds += self.n_rows
        level = int(min(self.levels.min(), self.vm.cfg.depth_budget))
        return Ciphertext(self.values.sum(axis=0), level, float(self.noises.sum()))

    def apply_stage(self, stage):
        """Apply one sparse-diagonal transform stage to every row.

        Equivalent circuit per row: rotate (for nonzero offsets), multiply
        by the stored diagonal, accumulate, plus the untouched input when
        the stage carries an implicit unit diagonal.  Costs one level.

        Execution detail: an embedded stage (block_size < N) is computed
        on the leading block only; slots beyond it are zero by the plan's
        contract and every stage keeps them zero.
        """
        vm = self.vm
        levels = self._dec_levels()
        n_rows = self.n_rows
        n_slots = self.values.shape[1]
        bs = stage.block_size
        narrow = bs < n_slots
        vals = self.values[:, :bs] if narrow else self.values
        if stage.gather_idx is not None:
            # generalized permutation: every output slot has one source
            idx = stage.gather_idx[:bs] if narrow else stage.gather_idx
            scale = stage.gather_scale[:bs] if narrow else stage.gather_scale
            out = vals[:, idx] * scale
            nonzero_offsets = sum(1 for off, _ in stage.diagonals if off != 0)
            vm._counts.rotations += n_rows * nonzero_offsets
            vm._counts.mults_ct_pt += n_rows * len(stage.diagonals)
            vm._counts.adds += n_rows * (len(stage.diagonals) - 1)
        else:
            out = None
            for off, diag in stage.diagonals:
                term = vals if off == 0 else _roll_left(vals, off)
                if off != 0:
                    vm._counts.rotations += n_rows
                term = term * (diag[:bs] if narrow else diag)
                vm._counts.mults_ct_pt += n_rows
                if out is None:
                    out = term
                else:
                    out += term
                    vm._counts.adds += n_rows
            if stage.plus_identity:
                out += vals
                vm._counts.adds += n_rows
        if narrow:
            full = np.zeros((n_rows, n_slots), dtype=np.complex128)
            full[:, :bs] = out
            out = full
        out, noises = vm._bulk_noise(out, self.noises, per_row_mults=len(stage.diagonals))
        return _RowBlock(vm, out, levels, noises)

    def transpose(self, out_rows):
        """Mask-rotate-accumulate transpose of the valid region.

        Circuit per output row j: sum over input rows i of
        rotate_left(mul_plain(row_i, e_j), j - i), accumulated into a
        zero-initialised ciphertext.  The fused execution writes the same
        values directly; counters and levels follow the circuit.
        """
        vm = self.vm
        n_in = self.n_rows
        n_slots = self.values.shape[1]
        levels = self._dec_levels()
        out = np.zeros((out_rows, n_slots), dtype=np.complex128)
        block = self.values[:n_in, :out_rows]
        out[: block.shape[1], :n_in] = block.T
        terms = n_in * out_rows
        vm._counts.mults_ct_pt += terms
        vm._counts.rotations += terms
        vm._counts.adds += terms
        out_levels = np.full(out_rows, int(levels.min()), dtype=np.int64)
        noise = float(self.noises.max()) if n_in else 0.0
        out_noises = np.full(out_rows, noise * n_in)
        out, out_noises = vm._bulk_noise(out, out_noises)
        return _RowBlock(vm, out, out_levels, out_noises)
