"""Actor-network architecture descriptions and layout math.

A model is: conv blocks (conv + folded BN + approximate ReLU), a fused
flatten+dense block (the feature extractor's linear block, ReLU), two
shared dense blocks with tanh, a linear output block, and the Gym-head
MLP that maps the 64-dim latent to actions (dense-tanh-dense-tanh-dense).

Default hyperparameters are project choices: the source material fixes
the block types, the 64-dim latent and the 3-layer head, but not filter
counts or strides.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError

LATENT_DIM = 64


@dataclass(frozen=True)
class ConvBlockSpec:
    name: str
    out_channels: int
    kernel: int
    stride: int


@dataclass(frozen=True)
class FlattenDenseSpec:
    name: str = "feature"
    out_features: int = LATENT_DIM


@dataclass(frozen=True)
class DenseSpec:
    name: str
    out_features: int
    activation: str = "none"  # "tanh" | "none"


@dataclass(frozen=True)
class GymHeadSpec:
    layers: tuple

    def __post_init__(self):
        if len(self.layers) != 3:
            raise ConfigError("the Gym head is a 3-layer network")


@dataclass(frozen=True)
class ModelSpec:
    name: str
    input_hw: tuple
    conv_blocks: tuple
    feature: FlattenDenseSpec
    fc: tuple  # shared1(tanh), shared2(tanh), output(none)
    head: GymHeadSpec
    action_dim: int

    @property
    def latent_dim(self):
        return self.feature.out_features


@dataclass(frozen=True)
class ConvLayout:
    """Spread-layout bookkeeping for one conv block."""

    in_channels: int
    out_channels: int
    in_logical: tuple
    out_logical: tuple
    in_step: int
    out_step: int
    in_phys: tuple
    out_phys: tuple
    kernel: int
    stride: int


def conv_layouts(spec):
    """Per-block layouts, starting from the dense single-channel input."""
    layouts = []
    channels, step = 1, 1
    lh, lw = spec.input_hw
    for blk in spec.conv_blocks:
        out_lh = (lh - blk.kernel) // blk.stride + 1
        out_lw = (lw - blk.kernel) // blk.stride + 1
        if out_lh < 1 or out_lw < 1:
            raise ShapeError(f"{blk.name}: kernel {blk.kernel} exceeds input {lh}x{lw}")
        out_step = step * blk.stride
        layouts.append(
            ConvLayout(
                in_channels=channels,
                out_channels=blk.out_channels,
                in_logical=(lh, lw),
                out_logical=(out_lh, out_lw),
                in_step=step,
                out_step=out_step,
                in_phys=((lh - 1) * step + 1, (lw - 1) * step + 1),
                out_phys=((out_lh - 1) * out_step + 1, (out_lw - 1) * out_step + 1),
                kernel=blk.kernel,
                stride=blk.stride,
            )
        )
        channels, step, lh, lw = blk.out_channels, out_step, out_lh, out_lw
    return layouts


def flatten_input_size(spec):
    lay = conv_layouts(spec)[-1]
    return lay.out_channels * lay.out_logical[0] * lay.out_logical[1]


def dense_chain(spec):
    """(name, in_features, out_features, activation) for every dense op."""
    chain = []
    width = spec.feature.out_features
    for d in spec.fc:
        chain.append((d.name, width, d.out_features, d.activation))
        width = d.out_features
    for d in spec.head.layers:
        chain.append((d.name, width, d.out_features, d.activation))
        width = d.out_features
    if width != spec.action_dim:
        raise ConfigError("head output width does not match action_dim")
    return chain


def tensor_shapes(spec):
    """Every tensor the weight store must carry, keyed by name."""
    shapes = {}
    channels = 1
    for blk in spec.conv_blocks:
        shapes[f"{blk.name}.weight"] = (blk.out_channels, channels, blk.kernel, blk.kernel)
        shapes[f"{blk.name}.bias"] = (blk.out_channels,)
        channels = blk.out_channels
    shapes[f"{spec.feature.name}.weight"] = (spec.feature.out_features, flatten_input_size(spec))
    shapes[f"{spec.feature.name}.bias"] = (spec.feature.out_features,)
    for name, fin, fout, _ in dense_chain(spec):
        shapes[f"{name}.weight"] = (fout, fin)
        shapes[f"{name}.bias"] = (fout,)
    return shapes


def scale_sites(spec):
    """Activation sites that carry a calibrated ReLU input scale."""
    return [blk.name for blk in spec.conv_blocks] + [spec.feature.name]


def parameter_count(spec):
    return sum(int(np.prod(s)) for s in tensor_shapes(spec).values())


def _standard(name, conv_blocks, action_dim=2, input_hw=(50, 150), latent=LATENT_DIM):
    return ModelSpec(
        name=name,
        input_hw=tuple(input_hw),
        conv_blocks=tuple(conv_blocks),
        feature=FlattenDenseSpec("feature", latent),
        fc=(
            DenseSpec("shared1", latent, "tanh"),
            DenseSpec("shared2", latent, "tanh"),
            DenseSpec("output", latent, "none"),
        ),
        head=GymHeadSpec(
            (
                DenseSpec("head1", latent, "tanh"),
                DenseSpec("head2", 32, "tanh"),
                DenseSpec("head3", action_dim, "none"),
            )
        ),
        action_dim=action_dim,
    )


def teacher_spec(action_dim=2, input_hw=(50, 150)):
    """Full-size network: three conv blocks plus the linear block."""
    return _standard(
        "teacher",
        (
            ConvBlockSpec("conv1", 64, 3, 2),
            ConvBlockSpec("conv2", 64, 3, 2),
            ConvBlockSpec("conv3", 128, 3, 1),
        ),
        action_dim,
        input_hw,
    )


def student1_spec(action_dim=2, input_hw=(50, 150)):
    """Single-step compression: two 64-filter conv blocks."""
    return _standard(
        "student1",
        (ConvBlockSpec("conv1", 64, 3, 2), ConvBlockSpec("conv2", 64, 3, 2)),
        action_dim,
        input_hw,
    )


def student2_spec(action_dim=2, input_hw=(50, 150), filters=32):
    """Final compressed network: two conv blocks, 32 filters by default."""
    return _standard(
        "student2",
        (
            ConvBlockSpec("conv1", filters, 3, 2),
            ConvBlockSpec("conv2", filters, 3, 2),
        ),
        action_dim,
        input_hw,
    )


def tiny_spec(action_dim=2, input_hw=(10, 12), latent=16):
    """Small custom model for fast end-to-end exercises."""
    return _standard(
        "custom",
        (ConvBlockSpec("conv1", 2, 3, 2),),
        action_dim,
        input_hw,
        latent=latent,
    )


def spec_by_name(name, **kw):
    builders = {
        "teacher": teacher_spec,
        "student1": student1_spec,
        "student2": student2_spec,
        "tiny": tiny_spec,
    }
    if name not in builders:
        raise ConfigError(f"unknown model {name!r}; choose from {sorted(builders)}")
    return builders[name](**kw)


def describe(spec):
    """JSON-safe architecture descriptor (stored in weight files)."""
    return {
        "name": spec.name,
        "input_hw": list(spec.input_hw),
        "conv_blocks": [
            {"name": b.name, "out_channels": b.out_channels, "kernel": b.kernel, "stride": b.stride}
            for b in spec.conv_blocks
        ],
        "feature": {"name": spec.feature.name, "out_features": spec.feature.out_features},
        "fc": [
            {"name": d.name, "out_features": d.out_features, "activation": d.activation}
            for d in spec.fc
        ],
        "head": [
            {"name": d.name, "out_features": d.out_features, "activation": d.activation}
            for d in spec.head.layers
        ],
        "action_dim": spec.action_dim,
    }


def spec_from_descriptor(desc):
    return ModelSpec(
        name=desc["name"],
        input_hw=tuple(desc["input_hw"]),
        conv_blocks=tuple(
            ConvBlockSpec(b["name"], b["out_channels"], b["kernel"], b["stride"])
            for b in desc["conv_blocks"]
        ),
        feature=FlattenDenseSpec(desc["feature"]["name"], desc["feature"]["out_features"]),
        fc=tuple(
            DenseSpec(d["name"], d["out_features"], d["activation"]) for d in desc["fc"]
        ),
        head=GymHeadSpec(
            tuple(DenseSpec(d["name"], d["out_features"], d["activation"]) for d in desc["head"])
        ),
        action_dim=desc["action_dim"],
    )
