"""Patch discriminator shared by the sketch-enhancement and face stages.

Four 4x4 downsampling conv blocks (strides 2,2,2,1) and a final 1-channel
4x4 conv, all padding 1, so 64x64 inputs map to a 6x6 grid of per-patch
real probabilities: 64 -> 32 -> 16 -> 8 -> 7 -> 6.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn


@dataclass
class PatchDiscriminatorConfig:
    base_channels: int = 64
    conditional: bool = True  # condition by channel-concatenating the source image

    @property
    def in_channels(self) -> int:
        return 6 if self.conditional else 3


class PatchDiscriminator(nn.Module):
    def __init__(self, cfg: PatchDiscriminatorConfig | None = None):
        super().__init__()
        self.cfg = cfg or PatchDiscriminatorConfig()
        c = self.cfg.base_channels
        self.net = nn.Sequential(
            nn.Conv2d(self.cfg.in_channels, c, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c, 2 * c, 4, stride=2, padding=1),
            nn.BatchNorm2d(2 * c),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(2 * c, 4 * c, 4, stride=2, padding=1),
            nn.BatchNorm2d(4 * c),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(4 * c, 8 * c, 4, stride=1, padding=1),
            nn.BatchNorm2d(8 * c),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(8 * c, 1, 4, stride=1, padding=1),
            nn.Sigmoid(),
        )

    def forward(self, cond: torch.Tensor | None, candidate: torch.Tensor) -> torch.Tensor:
        if self.cfg.conditional:
            if cond is None:
                raise ValueError("conditional discriminator needs the source image")
            if cond.shape != candidate.shape:
                raise ValueError("condition/candidate shape mismatch")
            x = torch.cat([cond, candidate], dim=1)
        else:
            x = candidate
        return self.net(x)


def discriminate(
    cond: torch.Tensor | None, candidate: torch.Tensor, d: PatchDiscriminator
) -> torch.Tensor:
    """Per-patch real probabilities, shape (B, 1, 6, 6) for 64x64 inputs."""
    return d(cond, candidate)


def patch_accuracy(real_outputs: torch.Tensor, fake_outputs: torch.Tensor) -> float:
    """Fraction of patches classified correctly at the 0.5 threshold."""
    correct = (real_outputs > 0.5).float().sum() + (fake_outputs < 0.5).float().sum()
    return (correct / (real_outputs.numel() + fake_outputs.numel())).item()
