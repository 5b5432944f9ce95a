"""Slot VM: instruction semantics, depth, noise, ledger, API surface."""

import numpy as np
import pytest

from heinfer import (
    CapacityError,
    Ciphertext,
    ConfigError,
    DepthExhausted,
    ShapeError,
    SlotVm,
    VmConfig,
    encode,
)


@pytest.fixture
def vm():
    return SlotVm(VmConfig(n_slots=8, depth_budget=10))


def test_encode_pads_payload_with_zeros():
    sv = encode(np.arange(1, 151), 256)
    assert len(sv) == 256
    assert np.array_equal(sv.values[:150].real, np.arange(1, 151))
    assert np.all(sv.values[150:] == 0)


def test_encode_empty_payload():
    assert np.array_equal(encode([], 4).values, np.zeros(4))


def test_encode_overflow_and_bad_slot_count():
    with pytest.raises(CapacityError):
        encode([1, 2, 3, 4, 5], 4)
    with pytest.raises(ConfigError):
        encode([1], 3)


def test_encrypt_default_level_is_budget():
    vm = SlotVm(VmConfig(n_slots=4))
    ct = vm.encrypt(vm.encode([1, 2]))
    assert ct.level == 40
    assert ct.noise_accum == 0.0


def test_encrypt_decrypt_roundtrip_exact():
    vm = SlotVm(VmConfig(n_slots=16, depth_budget=5))
    rng = np.random.default_rng(0)
    x = rng.normal(size=16)
    assert np.array_equal(vm.decrypt(vm.encrypt_values(x)).values, x.astype(complex))


def test_encrypt_length_mismatch():
    vm = SlotVm(VmConfig(n_slots=8))
    with pytest.raises(ConfigError):
        vm.encrypt(encode([1], 4))


def test_noisy_mode_roundtrip_is_exact():
    # noise enters only on multiplication
    vm = SlotVm(VmConfig(n_slots=8, noise_sigma=1e-6, seed=1))
    x = np.linspace(-1, 1, 8)
    assert np.array_equal(vm.decrypt(vm.encrypt_values(x)).values, x.astype(complex))


def test_decrypt_does_not_mutate(vm):
    ct = vm.encrypt_values([1, 2, 3])
    before = vm.decrypt(ct).values.copy()
    _ = vm.add(ct, ct)
    assert np.array_equal(vm.decrypt(ct).values, before)


def test_decrypt_roundtrips_zero_basis_random(vm):
    rng = np.random.default_rng(2)
    basis = np.zeros(8)
    basis[3] = 1.0
    for x in (np.zeros(8), basis, rng.normal(size=8)):
        assert np.array_equal(vm.decrypt(vm.encrypt_values(x)).values, x.astype(complex))


def test_add_examples(vm):
    a = vm.encrypt_values([1, 2])
    b = vm.encrypt_values([3, 4])
    assert np.array_equal(vm.decrypt(vm.add(a, b)).values[:2], [4, 6])
    zero = vm.encrypt_values([])
    x = vm.encrypt_values([5, -1, 2])
    assert np.array_equal(vm.decrypt(vm.add(x, zero)).values, vm.decrypt(x).values)


def test_add_homomorphism_random(vm):
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=8), rng.normal(size=8)
    out = vm.decrypt(vm.add(vm.encrypt_values(x), vm.encrypt_values(y))).values
    assert np.allclose(out, x + y, atol=0, rtol=0)


def test_add_plaintext_keeps_level(vm):
    ct = vm.encrypt_values([1, 2])
    out = vm.add(ct, vm.encode([10, 20]))
    assert out.level == ct.level
    assert np.array_equal(vm.decrypt(out).values[:2], [11, 22])


def test_add_shape_mismatch():
    vm8 = SlotVm(VmConfig(n_slots=8))
    vm4 = SlotVm(VmConfig(n_slots=4))
    with pytest.raises(ShapeError):
        vm8.add(vm8.encrypt_values([1]), vm4.encrypt_values([1]))


def test_mul_examples(vm):
    a = vm.encrypt_values([1, 2])
    b = vm.encrypt_values([3, 4])
    assert np.array_equal(vm.decrypt(vm.mul(a, b)).values[:2], [3, 8])


def test_mul_by_ones_costs_a_level(vm):
    x = vm.encrypt_values([7, -2])
    out = vm.mul(x, vm.encrypt_values(np.ones(8)))
    assert np.array_equal(vm.decrypt(out).values, vm.decrypt(x).values)
    assert out.level == x.level - 1
    out_p = vm.mul_plain(x, np.ones(8))
    assert out_p.level == x.level - 1


def test_mul_chain_exhausts_budget():
    vm = SlotVm(VmConfig(n_slots=4, depth_budget=3))
    ct = vm.encrypt_values([0.9])
    for _ in range(3):
        ct = vm.mul(ct, ct)
    assert ct.level == 0
    with pytest.raises(DepthExhausted):
        vm.mul(ct, ct)


def test_mul_plain_matches_product(vm):
    rng = np.random.default_rng(4)
    x, p = rng.normal(size=8), rng.normal(size=8)
    out = vm.decrypt(vm.mul_plain(vm.encrypt_values(x), p)).values
    assert np.allclose(out, x * p, atol=0, rtol=0)


def test_noise_bounded_by_six_sigma():
    sigma = 1e-3
    vm = SlotVm(VmConfig(n_slots=256, noise_sigma=sigma, seed=11))
    rng = np.random.default_rng(5)
    x, y = rng.normal(size=256), rng.normal(size=256)
    out = vm.decrypt(vm.mul(vm.encrypt_values(x), vm.encrypt_values(y))).values
    err = np.abs(out - x * y)
    assert np.all(err <= 6 * sigma * np.abs(x * y) + 1e-15)
    assert err.max() > 0  # noise actually applied


def test_rotate_left_examples():
    vm = SlotVm(VmConfig(n_slots=4))
    ct = vm.encrypt_values([1, 2, 3, 4])
    assert np.array_equal(vm.decrypt(vm.rotate_left(ct, 1)).values, [2, 3, 4, 1])
    assert np.array_equal(vm.decrypt(vm.rotate_left(ct, 0)).values, [1, 2, 3, 4])
    assert np.array_equal(
        vm.decrypt(vm.rotate_left(ct, -1)).values, [4, 1, 2, 3]
    )


def test_rotate_composition_law(vm):
    rng = np.random.default_rng(6)
    ct = vm.encrypt_values(rng.normal(size=8))
    a, b = 3, 6
    lhs = vm.rotate_left(vm.rotate_left(ct, a), b)
    rhs = vm.rotate_left(ct, a + b)
    assert np.array_equal(vm.decrypt(lhs).values, vm.decrypt(rhs).values)


def test_rotate_keeps_level(vm):
    ct = vm.encrypt_values([1])
    assert vm.rotate_left(ct, 5).level == ct.level


def test_rotate_sum_examples():
    vm = SlotVm(VmConfig(n_slots=4))
    out = vm.decrypt(vm.rotate_sum(vm.encrypt_values([1, 2, 3, 4]))).values
    assert np.allclose(out, 10)
    zero = vm.decrypt(vm.rotate_sum(vm.encrypt_values([]))).values
    assert np.array_equal(zero, np.zeros(4))


def test_rotate_sum_tree_vs_literal():
    rng = np.random.default_rng(7)
    x = rng.normal(size=16)
    tree_vm = SlotVm(VmConfig(n_slots=16, depth_budget=5))
    lit_vm = SlotVm(VmConfig(n_slots=16, depth_budget=5, literal_rotate_sum=True))
    t = tree_vm.decrypt(tree_vm.rotate_sum(tree_vm.encrypt_values(x))).values
    l = lit_vm.decrypt(lit_vm.rotate_sum(lit_vm.encrypt_values(x))).values
    assert np.allclose(t, l, atol=1e-12)
    assert tree_vm.ledger.total.rotations == 4  # log2(16)
    assert lit_vm.ledger.total.rotations == 15  # N - 1


def test_depth_equals_budget_minus_circuit_depth():
    vm = SlotVm(VmConfig(n_slots=4, depth_budget=7))
    ct = vm.encrypt_values([0.5])
    ct = vm.mul(ct, ct)  # depth 1
    ct = vm.mul_plain(ct, np.full(4, 2.0))  # depth 2
    ct = vm.add(ct, vm.encrypt_values([1]))  # depth unchanged
    ct = vm.rotate_left(ct, 1)  # depth unchanged
    assert ct.level == 7 - 2


def test_api_audit_no_per_slot_access():
    """The public instruction set is exactly the documented operations."""
    allowed = {
        "encode", "encrypt", "encrypt_values", "decrypt",
        "add", "mul", "mul_plain", "rotate_left", "rotate_sum",
        "block", "cfg", "ledger",
    }
    public = {name for name in dir(SlotVm) if not name.startswith("_")}
    assert public <= allowed, f"unexpected public VM surface: {public - allowed}"
    # a ciphertext exposes metadata only, never slot values
    ct_public = {name for name in dir(Ciphertext) if not name.startswith("_")}
    assert ct_public == {"level", "n_slots", "noise_accum"}
    assert not hasattr(Ciphertext, "__getitem__")


def test_ledger_replay_determinism():
    def circuit(vm):
        ct = vm.encrypt_values([1, 2, 3])
        with vm.block("stage"):
            ct = vm.mul(ct, ct)
            ct = vm.rotate_sum(ct)
            ct = vm.add(ct, vm.encode(np.ones(8)))
        return vm.decrypt(ct).values

    a, b = SlotVm(VmConfig(n_slots=8)), SlotVm(VmConfig(n_slots=8))
    va, vb = circuit(a), circuit(b)
    assert np.array_equal(va, vb)
    assert a.ledger.as_dict() == b.ledger.as_dict()


def test_ledger_total_is_sum_of_blocks():
    vm = SlotVm(VmConfig(n_slots=8))
    with vm.block("a"):
        vm.mul(vm.encrypt_values([1]), vm.encrypt_values([2]))
    with vm.block("b"):
        vm.rotate_left(vm.encrypt_values([1]), 1)
    vm.add(vm.encrypt_values([1]), vm.encrypt_values([2]))  # unlabeled
    total = vm.ledger.total
    agg = {"mults_ct_ct": 0, "mults_ct_pt": 0, "rotations": 0, "adds": 0}
    for counts in vm.ledger.blocks.values():
        for key, val in counts.as_dict().items():
            agg[key] += val
    assert total.as_dict() == agg
    assert set(vm.ledger.blocks) == {"a", "b", "unlabeled"}


def test_ledger_merge_commutative():
    def make(label, n):
        vm = SlotVm(VmConfig(n_slots=8))
        with vm.block(label):
            for _ in range(n):
                vm.rotate_left(vm.encrypt_values([1]), 1)
        return vm.ledger

    ab = make("x", 2).merge(make("y", 3))
    ba = make("y", 3).merge(make("x", 2))
    assert ab.as_dict() == ba.as_dict()


def test_ciphertext_slots_are_read_only(vm):
    ct = vm.encrypt_values([1, 2])
    with pytest.raises(ValueError):
        ct._slots[0] = 9.0
