"""Network shapes, parameter ordering, folding, descriptors."""

import numpy as np
import torch

from distill_harness.networks import ActorNet, conv_output_hw, folded_tensors


def test_parameter_counts_strictly_decreasing():
    counts = [ActorNet(n).parameter_count() for n in ("teacher", "student1", "student2")]
    assert counts[2] < counts[1] < counts[0]


def test_latent_and_action_dims():
    net = ActorNet("student2")
    x = torch.rand(2, 1, 50, 150)
    feats = net.extract_features(x)
    assert feats.shape == (2, 64)
    assert net(x).shape == (2, 2)


def test_conv_output_math():
    assert conv_output_hw((50, 150), ActorNet("teacher").convs) == (9, 34)
    assert conv_output_hw((50, 150), ActorNet("student2").convs) == (11, 36)


def test_descriptor_schema():
    desc = ActorNet("student2").describe()
    assert desc["name"] == "student2"
    assert [b["name"] for b in desc["conv_blocks"]] == ["conv1", "conv2"]
    assert desc["feature"] == {"name": "feature", "out_features": 64}
    assert [d["name"] for d in desc["fc"]] == ["shared1", "shared2", "output"]
    assert [d["activation"] for d in desc["fc"]] == ["tanh", "tanh", "none"]
    assert [d["name"] for d in desc["head"]] == ["head1", "head2", "head3"]
    assert desc["action_dim"] == 2


def test_folded_tensors_match_eval_forward():
    """BN folding preserves the network function exactly."""
    torch.manual_seed(0)
    net = ActorNet("student2", input_hw=(14, 18))
    # populate BN running stats
    net.train()
    with torch.no_grad():
        net(torch.rand(8, 1, 14, 18))
    net.eval()

    tensors = folded_tensors(net)
    x = np.random.default_rng(1).uniform(size=(3, 14, 18))

    # fold-free reference in double precision
    net_d = net.double()
    with torch.no_grad():
        want = net_d(torch.tensor(x)).numpy()

    # manual forward with the folded tensors
    def conv_valid(chans, w, b, stride):
        c_out, c_in, n, _ = w.shape
        win = np.lib.stride_tricks.sliding_window_view(chans, (n, n), axis=(1, 2))
        win = win[:, ::stride, ::stride]
        return np.einsum("cijab,ocab->oij", win, w) + b[:, None, None]

    got = []
    for img in x:
        feats = img[None]
        for i, (_, k, s) in enumerate(net.convs, start=1):
            feats = np.maximum(conv_valid(feats, tensors[f"conv{i}.weight"],
                                          tensors[f"conv{i}.bias"], s), 0.0)
        z = tensors["feature.weight"] @ feats.reshape(-1) + tensors["feature.bias"]
        z = np.maximum(z, 0.0)
        for name in ("shared1", "shared2"):
            z = np.tanh(tensors[f"{name}.weight"] @ z + tensors[f"{name}.bias"])
        z = tensors["output.weight"] @ z + tensors["output.bias"]
        z = np.tanh(tensors["head1.weight"] @ z + tensors["head1.bias"])
        z = np.tanh(tensors["head2.weight"] @ z + tensors["head2.bias"])
        got.append(tensors["head3.weight"] @ z + tensors["head3.bias"])
    assert np.abs(np.stack(got) - want).max() <= 1e-9
