"""Polynomial activations: values, error bands, parity, depth accounting."""

import numpy as np
import pytest

from heinfer import ConfigError, DepthExhausted, SlotVm, VmConfig
from heinfer.activations import (
    SIGN_COEFFS,
    TANH_COEFFS,
    ScaleInfo,
    SignApproxConfig,
    polyeval,
    relu,
    sign_approx,
    sign_gate_plain,
    tanh_approx,
    tanh_poly_plain,
)

EPS_BAND = 2.0**-7


def make_vm(n=256, budget=64):
    return SlotVm(VmConfig(n_slots=n, depth_budget=budget))


def eval_batch(fn, xs, n=256, budget=64):
    """Run a slot-wise activation over arbitrarily many points."""
    out = []
    for start in range(0, len(xs), n):
        chunk = np.asarray(xs[start : start + n])
        vm = make_vm(n, budget)
        ct = fn(vm.encrypt_values(chunk), vm)
        out.append(vm.decrypt(ct).values[: len(chunk)].real)
    return np.concatenate(out)


# ---- polyeval --------------------------------------------------------------


def test_polyeval_identity_coefficients():
    vm = make_vm(8)
    out = vm.decrypt(polyeval(vm.encrypt_values([3, -2, 0.5]), [0.0, 1.0], vm)).values
    assert np.array_equal(out[:3].real, [3, -2, 0.5])


def test_polyeval_tanh_poly_at_zero_and_one():
    vm = make_vm(8)
    out = vm.decrypt(polyeval(vm.encrypt_values([0.0, 1.0]), TANH_COEFFS, vm)).values
    assert out[0] == 0.0
    assert abs(out[1].real - 0.76353569) <= 1e-7


def test_polyeval_rejects_even_polynomials():
    vm = make_vm(8)
    with pytest.raises(ConfigError):
        polyeval(vm.encrypt_values([1.0]), [0.0, 0.0, 1.0], vm)


def test_polyeval_depth_is_four_for_degree_seven():
    vm = make_vm(8, budget=10)
    ct = vm.encrypt_values([0.3])
    out = polyeval(ct, SIGN_COEFFS, vm)
    assert ct.level - out.level == 4


def test_polyeval_depth_exhausted_propagates():
    vm = make_vm(8, budget=2)
    with pytest.raises(DepthExhausted):
        polyeval(vm.encrypt_values([0.3]), SIGN_COEFFS, vm)


# ---- sign approximation ----------------------------------------------------


def test_sign_zero_maps_to_exactly_half():
    vm = make_vm(8)
    out = vm.decrypt(sign_approx(vm.encrypt_values([0.0]), SignApproxConfig(), vm)).values
    assert out[0] == 0.5


def test_sign_one_is_fixed_point():
    vm = make_vm(8)
    out = vm.decrypt(sign_approx(vm.encrypt_values([1.0, -1.0]), SignApproxConfig(), vm)).values
    assert out[0] == 1.0
    assert out[1] == 0.0


def test_sign_accuracy_on_spot_points():
    xs = np.array([0.9, 0.5, 0.1, 0.01, -0.9, -0.5, -0.1, -0.01])
    cfg = SignApproxConfig()
    got = eval_batch(lambda ct, vm: sign_approx(ct, cfg, vm), xs, n=8)
    step = (xs > 0).astype(float)
    assert np.abs(got - step).max() <= EPS_BAND


def test_sign_accuracy_across_full_band():
    cfg = SignApproxConfig()
    xs = np.linspace(EPS_BAND, 1.0, 4096)
    gate = sign_gate_plain(xs, cfg)
    assert np.abs(gate - 1.0).max() <= EPS_BAND
    gate_neg = sign_gate_plain(-xs, cfg)
    assert np.abs(gate_neg).max() <= EPS_BAND


def test_sign_odd_encoding_identity():
    vm = make_vm(64)
    rng = np.random.default_rng(0)
    xs = rng.uniform(-1, 1, size=64)
    cfg = SignApproxConfig()
    pos = vm.decrypt(sign_approx(vm.encrypt_values(xs), cfg, vm)).values.real
    neg = vm.decrypt(sign_approx(vm.encrypt_values(-xs), cfg, vm)).values.real
    assert np.abs((pos - 0.5) + (neg - 0.5)).max() <= 1e-9


def test_sign_consumes_four_levels_per_composition():
    cfg = SignApproxConfig(depth=3)
    vm = make_vm(8, budget=20)
    ct = vm.encrypt_values([0.4])
    out = sign_approx(ct, cfg, vm)
    assert ct.level - out.level == 3 * 4


# ---- relu ------------------------------------------------------------------


def test_relu_negative_input():
    got = eval_batch(lambda ct, vm: relu(ct, 1.0, SignApproxConfig(), vm), np.array([-0.5]), n=8)
    assert abs(got[0]) <= EPS_BAND


def test_relu_positive_input():
    got = eval_batch(lambda ct, vm: relu(ct, 1.0, SignApproxConfig(), vm), np.array([0.5]), n=8)
    assert abs(got[0] - 0.5) <= EPS_BAND * 0.5


def test_relu_zero_gate_is_half_and_output_zero():
    vm = make_vm(8)
    cfg = SignApproxConfig()
    gate = vm.decrypt(sign_approx(vm.encrypt_values([0.0]), cfg, vm)).values[0]
    assert gate == 0.5
    out = vm.decrypt(relu(vm.encrypt_values([0.0]), 1.0, cfg, vm)).values[0]
    assert out == 0.0


def test_relu_mixed_vector_mae_band():
    rng = np.random.default_rng(1)
    scale = 2.3
    xs = rng.uniform(-scale, scale, size=512)
    cfg = SignApproxConfig()
    got = eval_batch(lambda ct, vm: relu(ct, scale, cfg, vm), xs)
    err = np.abs(got - np.maximum(xs, 0.0))
    assert err.mean() <= EPS_BAND * scale
    assert err.max() <= EPS_BAND * scale


def test_relu_gated_absolute_value_identity():
    rng = np.random.default_rng(2)
    scale = 1.0
    xs = rng.uniform(-1, 1, size=256)
    cfg = SignApproxConfig()
    pos = eval_batch(lambda ct, vm: relu(ct, scale, cfg, vm), xs)
    neg = eval_batch(lambda ct, vm: relu(ct, scale, cfg, vm), -xs)
    assert np.abs((pos + neg) - np.abs(xs)).max() <= 2 * EPS_BAND * scale


def test_relu_depth_is_4d_plus_2():
    for d in (2, 8):
        cfg = SignApproxConfig(depth=d)
        vm = make_vm(8, budget=64)
        ct = vm.encrypt_values([0.2])
        out = relu(ct, 1.0, cfg, vm)
        assert ct.level - out.level == d * 4 + 2


def test_scale_info_positive():
    with pytest.raises(ConfigError):
        ScaleInfo(0.0)
    vm = make_vm(8)
    out = vm.decrypt(relu(vm.encrypt_values([0.5]), ScaleInfo(1.0), SignApproxConfig(), vm))
    assert abs(out.values[0].real - 0.5) <= EPS_BAND


# ---- tanh ------------------------------------------------------------------


def test_tanh_zero():
    vm = make_vm(8)
    assert vm.decrypt(tanh_approx(vm.encrypt_values([0.0]), vm)).values[0] == 0.0


def test_tanh_at_one_matches_fixed_coefficients():
    vm = make_vm(8)
    out = vm.decrypt(tanh_approx(vm.encrypt_values([1.0]), vm)).values[0].real
    assert abs(out - 0.76353569) <= 1e-7
    assert abs(out - np.tanh(1.0)) / np.tanh(1.0) <= 0.0026


def test_tanh_dense_scan_relative_error():
    # the evaluation protocol: 2000 points across the approximation domain
    xs = np.linspace(-2, 2, 2000)
    xs = xs[np.abs(xs) >= 0.01]
    got = tanh_poly_plain(xs)
    rel = np.abs(got - np.tanh(xs)) / np.abs(np.tanh(xs))
    assert rel.max() <= 0.02
    # the curve is oscillatory and largest near zero
    near = rel[np.abs(xs) <= 0.05].max()
    far = rel[np.abs(xs) >= 1.0].max()
    assert near > far


def test_tanh_vm_matches_plain_polynomial():
    rng = np.random.default_rng(3)
    xs = rng.uniform(-2, 2, size=256)
    got = eval_batch(tanh_approx, xs)
    assert np.abs(got - tanh_poly_plain(xs)).max() <= 1e-12


def test_tanh_is_odd_exactly():
    rng = np.random.default_rng(4)
    xs = rng.uniform(0, 2, size=128)
    vm = make_vm(128)
    pos = vm.decrypt(tanh_approx(vm.encrypt_values(xs), vm)).values.real
    neg = vm.decrypt(tanh_approx(vm.encrypt_values(-xs), vm)).values.real
    assert np.array_equal(pos, -neg)


def test_tanh_monotone_on_working_interval():
    # the fixed polynomial's derivative has roots at +-1.9599, so strict
    # monotonicity holds on [-1.95, 1.95] but not on the full [-2, 2]
    xs = np.linspace(-1.95, 1.95, 4001)
    vals = tanh_poly_plain(xs)
    assert np.all(np.diff(vals) > 0)
    edge = tanh_poly_plain(np.array([1.97, 2.0]))
    assert edge[1] < edge[0]  # the documented dip past the turning point


def test_tanh_depth_is_four():
    vm = make_vm(8, budget=10)
    ct = vm.encrypt_values([0.7])
    out = tanh_approx(ct, vm)
    assert ct.level - out.level == 4
