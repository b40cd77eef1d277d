"""Generator, patch discriminator and genre classifier.

All three modules take and return channels-last tensors: phrases enter as
``(n, 64, 84, 1)``. The layer tables below are the single source of truth for
kernel sizes, strides, channel counts, normalization and activations; the
modules are built from them and :func:`architecture_fingerprint` reads them
back, so a checkpoint can be verified against the network it is loaded into.

``width`` scales every hidden channel count (the published architecture is
``width=64``); ``n_res_blocks`` sets the generator depth (published: 10).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .validation import check_batch_tensor

LEAKY_SLOPE = 0.2
INIT_STD = 0.02


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str  # "conv" | "deconv" | "resblock"
    kernel: tuple[int, int]
    stride: tuple[int, int]
    channels: int
    instance_norm: bool
    activation: str | None
    padding: str  # "same" | "reflect" | "valid"


def generator_layers(width: int = 64, n_res_blocks: int = 10) -> list[LayerSpec]:
    w = width
    layers = [
        LayerSpec("down1", "conv", (7, 7), (1, 1), w, True, "relu", "reflect"),
        LayerSpec("down2", "conv", (3, 3), (2, 2), 2 * w, True, "relu", "same"),
        LayerSpec("down3", "conv", (3, 3), (2, 2), 4 * w, True, "relu", "same"),
    ]
    layers += [
        LayerSpec(f"res{i}", "resblock", (3, 3), (1, 1), 4 * w, True, "relu", "same")
        for i in range(n_res_blocks)
    ]
    layers += [
        LayerSpec("up1", "deconv", (3, 3), (2, 2), 2 * w, True, "relu", "same"),
        LayerSpec("up2", "deconv", (3, 3), (2, 2), w, True, "relu", "same"),
        LayerSpec("out", "deconv", (7, 7), (1, 1), 1, False, "sigmoid", "reflect"),
    ]
    return layers


def discriminator_layers(width: int = 64) -> list[LayerSpec]:
    # 64 -> 256 with no 128-channel layer in between, as published
    return [
        LayerSpec("conv1", "conv", (4, 4), (2, 2), width, False, "lrelu", "same"),
        LayerSpec("conv2", "conv", (4, 4), (2, 2), 4 * width, True, "lrelu", "same"),
        LayerSpec("out", "conv", (1, 1), (1, 1), 1, False, None, "same"),
    ]


def classifier_layers(width: int = 64) -> list[LayerSpec]:
    w = width
    return [
        LayerSpec("conv1", "conv", (1, 12), (1, 12), w, False, "lrelu", "valid"),
        LayerSpec("conv2", "conv", (4, 1), (4, 1), 2 * w, True, "lrelu", "valid"),
        LayerSpec("conv3", "conv", (2, 1), (2, 1), 4 * w, True, "lrelu", "valid"),
        LayerSpec("conv4", "conv", (8, 1), (8, 1), 8 * w, True, "lrelu", "valid"),
        LayerSpec("out", "conv", (1, 7), (1, 7), 2, False, "softmax", "valid"),
    ]


def _activation(name: str | None) -> nn.Module:
    if name is None:
        return nn.Identity()
    return {
        "relu": nn.ReLU(),
        "lrelu": nn.LeakyReLU(LEAKY_SLOPE),
        "sigmoid": nn.Sigmoid(),
        "softmax": nn.Softmax(dim=1),
    }[name]


class ConvBlock(nn.Module):
    """One table row: (pad) -> conv or transposed conv -> (instance norm) -> activation."""

    def __init__(self, spec: LayerSpec, in_channels: int):
        super().__init__()
        self.spec = spec
        kh, kw = spec.kernel
        bias = not spec.instance_norm
        if spec.padding == "reflect":
            # stride-1 transposed conv == conv with a flipped kernel, so the
            # reflection-padded boundary layers are plain convolutions
            self.pad = nn.ReflectionPad2d((kw // 2, kw // 2, kh // 2, kh // 2))
            self.conv = nn.Conv2d(in_channels, spec.channels, spec.kernel, spec.stride, bias=bias)
        elif spec.kind == "deconv":
            self.pad = nn.Identity()
            # stride 2, pad 1, output_padding 1 exactly doubles the input size
            self.conv = nn.ConvTranspose2d(
                in_channels, spec.channels, spec.kernel, spec.stride,
                padding=(kh // 2, kw // 2), output_padding=(spec.stride[0] - 1, spec.stride[1] - 1),
                bias=bias,
            )
        else:
            self.pad = nn.Identity()
            if spec.padding == "valid":
                padding = (0, 0)
            else:
                # TF-style "same" padding for the even and odd kernels used here
                padding = ((kh - spec.stride[0] + 1) // 2, (kw - spec.stride[1] + 1) // 2)
            self.conv = nn.Conv2d(in_channels, spec.channels, spec.kernel, spec.stride, padding, bias=bias)
        self.norm = nn.InstanceNorm2d(spec.channels, affine=True) if spec.instance_norm else None
        self.act = _activation(spec.activation)

    def forward(self, x):
        x = self.conv(self.pad(x))
        if self.norm is not None:
            x = self.norm(x)
        return self.act(x)


class ResidualBlock(nn.Module):
    """conv -> IN -> ReLU -> conv -> IN, add the skip, then ReLU.

    Operates on channels-first feature maps, e.g. ``(n, 256, 16, 21)``.
    """

    def __init__(self, channels: int = 256):
        super().__init__()
        self.channels = channels
        self.conv1 = nn.Conv2d(channels, channels, 3, 1, 1, bias=False)
        self.norm1 = nn.InstanceNorm2d(channels, affine=True)
        self.conv2 = nn.Conv2d(channels, channels, 3, 1, 1, bias=False)
        self.norm2 = nn.InstanceNorm2d(channels, affine=True)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ValueError(
                f"residual block expects {self.channels} channels, got shape {tuple(x.shape)}"
            )
        y = F.relu(self.norm1(self.conv1(x)))
        y = self.norm2(self.conv2(y))
        return F.relu(x + y)


class _PhraseNet(nn.Module):
    """Shared NHWC handling and layer-table bookkeeping."""

    layer_specs: list[LayerSpec]

    def blocks(self):
        """Yield ``(spec, module)`` for every row of the layer table."""
        for spec in self.layer_specs:
            yield spec, getattr(self.body, spec.name)

    def _body(self, x):
        check_batch_tensor(x)
        return self.body(x.permute(0, 3, 1, 2))


def _build_body(specs: list[LayerSpec]) -> nn.Sequential:
    body = nn.Sequential()
    in_ch = 1
    for spec in specs:
        if spec.kind == "resblock":
            body.add_module(spec.name, ResidualBlock(spec.channels))
        else:
            body.add_module(spec.name, ConvBlock(spec, in_ch))
        in_ch = spec.channels
    return body


class Generator(_PhraseNet):
    """Residual encoder/decoder mapping a phrase batch to a same-shaped batch in (0, 1)."""

    def __init__(self, width: int = 64, n_res_blocks: int = 10):
        super().__init__()
        self.width = width
        self.n_res_blocks = n_res_blocks
        self.layer_specs = generator_layers(width, n_res_blocks)
        self.body = _build_body(self.layer_specs)

    def forward(self, x):
        return self._body(x).permute(0, 2, 3, 1)


class Discriminator(_PhraseNet):
    """Patch discriminator: ``(n, 64, 84, 1)`` -> raw scores ``(n, 16, 21, 1)``."""

    def __init__(self, width: int = 64):
        super().__init__()
        self.width = width
        self.layer_specs = discriminator_layers(width)
        self.body = _build_body(self.layer_specs)

    def forward(self, x):
        return self._body(x).permute(0, 2, 3, 1)


class GenreClassifierNet(_PhraseNet):
    """Binary genre classifier: ``(n, 64, 84, 1)`` -> probabilities ``(n, 2)``."""

    def __init__(self, width: int = 64):
        super().__init__()
        self.width = width
        self.layer_specs = classifier_layers(width)
        self.body = _build_body(self.layer_specs)
        # the softmax row lives in the table; logits() bypasses it for training
        self.body.out.act = nn.Identity()
        self.softmax = nn.Softmax(dim=1)

    def logits(self, x):
        return self._body(x).flatten(1)

    def forward(self, x):
        return self.softmax(self.logits(x))


def init_weights(net: nn.Module, generator: torch.Generator | None = None) -> nn.Module:
    """N(0, 0.02) kernels, zero biases, unit-scale / zero-offset instance norm."""
    with torch.no_grad():
        for m in net.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                m.weight.normal_(0.0, INIT_STD, generator=generator)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, nn.InstanceNorm2d) and m.affine:
                m.weight.fill_(1.0)
                m.bias.zero_()
    return net


def generator_forward(g: Generator, batch) -> torch.Tensor:
    return g(torch.as_tensor(batch, dtype=next(g.parameters()).dtype))


def discriminator_forward(d: Discriminator, batch) -> torch.Tensor:
    return d(torch.as_tensor(batch, dtype=next(d.parameters()).dtype))


def classifier_forward(c: GenreClassifierNet, batch) -> torch.Tensor:
    return c(torch.as_tensor(batch, dtype=next(c.parameters()).dtype))


def architecture_fingerprint(net: nn.Module) -> dict:
    """Layer table plus every parameter shape, as plain JSON-serializable data."""
    return {
        "class": type(net).__name__,
        "layers": [
            {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(spec).items()}
            for spec in getattr(net, "layer_specs", [])
        ],
        "parameters": {name: list(p.shape) for name, p in net.state_dict().items()},
    }
