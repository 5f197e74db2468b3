"""Desk-scale classifiers and the meta-noise generator.

Architectures are deliberately small (they stand in for the full-scale image
networks the method targets) and deterministic: no batch norm, no dropout,
and all parameters initialized from an explicit torch.Generator so identical
seeds give identical weights regardless of global RNG state.
"""

from __future__ import annotations

import hashlib
import math

import torch
import torch.nn.functional as F
from torch import nn

from multirobust.geometry import NormBall, project_ball

ARCHS = ("linear", "small_cnn")

LEAKY_SLOPE = 0.01


def init_parameters(module: nn.Module, generator: torch.Generator) -> None:
    """Re-initialize conv/linear weights fan-in uniform, driven by ``generator``."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            fan_in = m.weight.shape[1] * (
                m.weight.shape[2] * m.weight.shape[3] if m.weight.dim() == 4 else 1
            )
            bound = 1.0 / math.sqrt(fan_in)
            with torch.no_grad():
                m.weight.uniform_(-bound, bound, generator=generator)
                if m.bias is not None:
                    m.bias.uniform_(-bound, bound, generator=generator)


def params_hash(module: nn.Module) -> str:
    """SHA-256 over the raw bytes of all parameters, in name order."""
    h = hashlib.sha256()
    for name, p in sorted(module.named_parameters()):
        h.update(name.encode())
        h.update(p.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


class LinearClassifier(nn.Module):
    def __init__(self, in_shape, classes):
        super().__init__()
        self.in_shape = tuple(in_shape)
        self.fc = nn.Linear(int(torch.tensor(in_shape).prod()), classes)

    def forward(self, x):
        return self.fc(x.flatten(1))


def _center(x):
    # map [0, 1] pixels to [-1, 1]; conditioning, not a learned transform
    return 2.0 * x - 1.0


class SmallCnn(nn.Module):
    """Four 3x3 convs with two pooling stages and a linear head.

    LeakyReLU keeps units alive through the aggressive peak of the cyclic
    learning-rate schedule.
    """

    def __init__(self, in_shape, classes, width=16):
        super().__init__()
        c, h, w = in_shape
        self.conv1 = nn.Conv2d(c, width, 3, padding=1)
        self.conv2 = nn.Conv2d(width, width * 2, 3, padding=1)
        self.conv3 = nn.Conv2d(width * 2, width * 2, 3, padding=1)
        self.conv4 = nn.Conv2d(width * 2, width * 4, 3, padding=1)
        self.head = nn.Linear(width * 4 * (h // 4) * (w // 4), classes)

    def forward(self, x):
        x = F.leaky_relu(self.conv1(_center(x)), LEAKY_SLOPE)
        x = F.max_pool2d(F.leaky_relu(self.conv2(x), LEAKY_SLOPE), 2)
        x = F.leaky_relu(self.conv3(x), LEAKY_SLOPE)
        x = F.max_pool2d(F.leaky_relu(self.conv4(x), LEAKY_SLOPE), 2)
        return self.head(x.flatten(1))


def make_classifier(arch: str, in_shape, classes: int, seed: int) -> nn.Module:
    """Build a classifier with seed-deterministic weights.

    ``in_shape`` is (channels, height, width); ``arch`` is "linear" or
    "small_cnn".
    """
    if arch not in ARCHS:
        raise ValueError(f"unknown architecture {arch!r}, expected one of {ARCHS}")
    if len(in_shape) != 3 or any(int(s) <= 0 for s in in_shape):
        raise ValueError(f"in_shape must be (channels, height, width), got {in_shape}")
    if classes < 2:
        raise ValueError("need at least two classes")
    model = LinearClassifier(in_shape, classes) if arch == "linear" else SmallCnn(in_shape, classes)
    init_parameters(model, torch.Generator().manual_seed(seed))
    return model


class NoiseGenerator(nn.Module):
    """Input-dependent noise field g(z, x) with the shape of x.

    Four 3x3 convolutions with LeakyReLU activations over the channel-stacked
    (z, x) pair, plus a residual 1x1 transform of x added to the stack output.
    """

    def __init__(self, channels: int, hidden: int = 32, seed: int = 0):
        super().__init__()
        self.conv1 = nn.Conv2d(2 * channels, hidden, 3, padding=1)
        self.conv2 = nn.Conv2d(hidden, hidden, 3, padding=1)
        self.conv3 = nn.Conv2d(hidden, hidden, 3, padding=1)
        self.conv4 = nn.Conv2d(hidden, channels, 3, padding=1)
        self.residual = nn.Conv2d(channels, channels, 1)
        init_parameters(self, torch.Generator().manual_seed(seed))

    def forward(self, z, x):
        if z.shape != x.shape:
            raise ValueError(f"noise shape {tuple(z.shape)} != input shape {tuple(x.shape)}")
        h = F.leaky_relu(self.conv1(torch.cat([z, x], dim=1)), LEAKY_SLOPE)
        h = F.leaky_relu(self.conv2(h), LEAKY_SLOPE)
        h = F.leaky_relu(self.conv3(h), LEAKY_SLOPE)
        return self.conv4(h) + self.residual(x)


def generate_augmented(
    gen: NoiseGenerator,
    x: torch.Tensor,
    ball: NormBall,
    generator: torch.Generator,
) -> torch.Tensor:
    """Noise-augmented samples: x plus the generated field, projected onto the
    ball around x and clamped to [0, 1]. Differentiable w.r.t. the generator
    parameters almost everywhere."""
    z = torch.randn(x.shape, generator=generator, dtype=x.dtype)
    return project_ball(x, x + gen(z, x), ball).clamp(0.0, 1.0)


def random_augmented(
    x: torch.Tensor, ball: NormBall, generator: torch.Generator
) -> torch.Tensor:
    """Generator-free ablation: standard-normal noise projected onto the ball."""
    z = torch.randn(x.shape, generator=generator, dtype=x.dtype)
    return project_ball(x, x + z, ball).clamp(0.0, 1.0)
