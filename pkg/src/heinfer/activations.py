"""FHE-compatible activations built from slot-wise multiplies and adds.

ReLU is realized as x * gate(x/S) where gate is a composite approximation
of the unit step: an odd degree-7 polynomial with fixed points at +-1 is
composed with itself `depth` times and re-encoded as (sign+1)/2, so the
gate is ~1 for positive, ~0 for negative and exactly 0.5 at zero.  The
re-encoding is folded into the last composition's coefficients, keeping
the total cost at depth*4 levels for the gate plus one level each for the
input scaling and the final gating multiply.

TanH is the fixed degree-8 odd polynomial valid on [-2, 2]; calibration
upstream guarantees the domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError

# component polynomial for the composite sign: f(x) = (35x - 35x^3 + 21x^5 - 5x^7)/16
# f(+-1) = +-1, f([-1,1]) in [-1,1], contractive toward the fixed points
SIGN_COEFFS = np.array([0.0, 35.0, 0.0, -35.0, 0.0, 21.0, 0.0, -5.0]) / 16.0

# degree-8 polynomial approximation of tanh on [-2, 2] (even terms zero)
TANH_COEFFS = np.array(
    [0.0, 0.987653369, 0.0, -0.279044879, 0.0, 0.0605757714, 0.0, -0.00564857110]
)
TANH_DOMAIN = (-2.0, 2.0)


@dataclass(frozen=True)
class SignApproxConfig:
    """Composite sign approximation parameters."""

    coeffs: np.ndarray = field(default_factory=lambda: SIGN_COEFFS.copy())
    # 8 compositions hold the 2^-7 accuracy band down to |x| = 2^-7
    # (verified by dense evaluation; shallower depths clip the band)
    depth: int = 8

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if np.any(c[::2] != 0.0):
            raise ConfigError("sign component polynomial must be odd")
        object.__setattr__(self, "coeffs", c)
        if self.depth < 1:
            raise ConfigError("composition depth must be >= 1")


@dataclass(frozen=True)
class ScaleInfo:
    """Per-site input scale: max observed absolute pre-activation value."""

    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigError("activation scale must be positive")


def _term_plan(coeffs):
    """Split ascending coefficients into (constant, odd terms dict)."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.ndim != 1 or coeffs.shape[0] > 8:
        raise ConfigError("polyeval supports odd polynomials up to degree 7")
    if np.any(coeffs[2::2] != 0.0):
        raise ConfigError("polyeval requires an odd polynomial (even terms zero)")
    padded = np.zeros(8)
    padded[: coeffs.shape[0]] = coeffs
    return padded[0], {1: padded[1], 3: padded[3], 5: padded[5], 7: padded[7]}


def polyeval(ct, coeffs, vm):
    """Odd-polynomial evaluation via the power tree x^2, x^3, x^5, x^7.

    Coefficients are folded into the lower-level factor of each term's
    final product, so a full degree-7 polynomial costs exactly 4 levels.
    """
    const, odd = _term_plan(coeffs)
    c1, c3, c5, c7 = odd[1], odd[3], odd[5], odd[7]
    n = ct.n_slots
    ones = np.ones(n)

    acc = None

    def accumulate(term):
        nonlocal acc
        acc = term if acc is None else vm.add(acc, term)

    x2 = x3 = x5 = None
    if c3 or c5 or c7:
        x2 = vm.mul(ct, ct)
    if c5 or c7:
        x3 = vm.mul(x2, ct)
    if c7:
        x5 = vm.mul(x2, x3)

    if c1:
        accumulate(vm.mul_plain(ct, c1 * ones))
    if c3:
        accumulate(vm.mul(vm.mul_plain(ct, c3 * ones), x2))
    if c5:
        accumulate(vm.mul(vm.mul_plain(x2, c5 * ones), x3))
    if c7:
        accumulate(vm.mul(vm.mul_plain(x2, c7 * ones), x5))
    if acc is None:
        acc = vm.mul_plain(ct, np.zeros(n))
    if const:
        acc = vm.add(acc, const * ones)
    return acc


def _polyeval_rows(rows, coeffs):
    """Batched mirror of polyeval for engine-internal row blocks."""
    const, odd = _term_plan(coeffs)
    c1, c3, c5, c7 = odd[1], odd[3], odd[5], odd[7]
    n = rows.values.shape[1]
    ones = np.ones(n)

    acc = None

    def accumulate(term):
        nonlocal acc
        acc = term if acc is None else acc.add_rows(term)

    x2 = x3 = x5 = None
    if c3 or c5 or c7:
        x2 = rows.mul_rows(rows)
    if c5 or c7:
        x3 = x2.mul_rows(rows)
    if c7:
        x5 = x2.mul_rows(x3)

    if c1:
        accumulate(rows.mul_plain(c1 * ones))
    if c3:
        accumulate(rows.mul_plain(c3 * ones).mul_rows(x2))
    if c5:
        accumulate(x2.mul_plain(c5 * ones).mul_rows(x3))
    if c7:
        accumulate(x2.mul_plain(c7 * ones).mul_rows(x5))
    if acc is None:
        acc = rows.mul_plain(np.zeros(n))
    if const:
        acc = acc.add_plain(const * ones)
    return acc


def sign_approx(ct, cfg, vm):
    """Composite step approximation: ~1 for x>0, ~0 for x<0, exactly 0.5 at 0.

    Input slots must already be scaled into [-1, 1].  Consumes exactly
    depth*4 levels: the (sign+1)/2 re-encoding is folded into the last
    composition (halved coefficients plus a free plaintext constant).
    """
    for _ in range(cfg.depth - 1):
        ct = polyeval(ct, cfg.coeffs, vm)
    final = cfg.coeffs / 2.0
    final = final.copy()
    final[0] += 0.5
    return polyeval(ct, final, vm)


def _sign_rows(rows, cfg):
    for _ in range(cfg.depth - 1):
        rows = _polyeval_rows(rows, cfg.coeffs)
    final = cfg.coeffs / 2.0
    final[0] += 0.5
    return _polyeval_rows(rows, final)


def relu(ct, scale, cfg, vm):
    """Approximate max(0, x) = x * gate(x/S); exact zero stays exactly zero."""
    if isinstance(scale, ScaleInfo):
        scale = scale.scale
    if not scale > 0:
        raise ConfigError("relu scale must be positive")
    n = ct.n_slots
    gate = sign_approx(vm.mul_plain(ct, np.full(n, 1.0 / scale)), cfg, vm)
    return vm.mul(ct, gate)


def _relu_rows(rows, scale, cfg):
    if isinstance(scale, ScaleInfo):
        scale = scale.scale
    n = rows.values.shape[1]
    gate = _sign_rows(rows.mul_plain(np.full(n, 1.0 / scale)), cfg)
    return rows.mul_rows(gate)


def tanh_approx(ct, vm):
    """Degree-8 polynomial tanh; inputs must lie in [-2, 2] (calibrated)."""
    return polyeval(ct, TANH_COEFFS, vm)


def tanh_poly_plain(x):
    """Plaintext evaluation of the fixed tanh polynomial (reports, tests)."""
    x = np.asarray(x, dtype=np.float64)
    return np.polyval(TANH_COEFFS[::-1], x)


def sign_gate_plain(x, cfg=None):
    """Plaintext evaluation of the composite gate (reports, tests)."""
    cfg = cfg or SignApproxConfig()
    y = np.asarray(x, dtype=np.float64)
    for _ in range(cfg.depth):
        y = np.polyval(cfg.coeffs[::-1], y)
    return (y + 1.0) / 2.0
