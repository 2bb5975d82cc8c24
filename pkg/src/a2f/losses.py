"""Loss kernels shared by all three stages, plus the reparameterization trick.

All functions are pure torch ops; gradients flow to image/posterior inputs.
Discriminator probabilities are clamped to [eps, 1-eps] before any log.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

PROB_EPS = 1e-7
LOGVAR_MIN, LOGVAR_MAX = -20.0, 20.0

# per-channel stats applied to [0,1 ]-range inputs before feature extraction
FEATURE_NORM_MEAN = (0.485, 0.456, 0.406)
FEATURE_NORM_STD = (0.229, 0.224, 0.225)


@dataclass
class GaussianPosterior:
    """Diagonal Gaussian over the latent: mean and log-variance, same shape.

    Log-variance is clamped to [-20, 20] at construction so exp never
    overflows; the clamp is differentiable inside the range.
    """

    mean: torch.Tensor
    log_variance: torch.Tensor

    def __post_init__(self):
        if self.mean.shape != self.log_variance.shape:
            raise ValueError("mean/log_variance shape mismatch")
        if not (torch.isfinite(self.mean).all() and torch.isfinite(self.log_variance).all()):
            raise ValueError("non-finite posterior parameters")
        self.log_variance = self.log_variance.clamp(LOGVAR_MIN, LOGVAR_MAX)

    @property
    def std(self) -> torch.Tensor:
        return torch.exp(0.5 * self.log_variance)


@dataclass
class LossWeights:
    """Weights for the composite objectives; all must be >= 0."""

    lambda_kl_noise: float = 1.0
    lambda_l1: float = 100.0
    lambda_perp: float = 10.0

    def __post_init__(self):
        if min(self.lambda_kl_noise, self.lambda_l1, self.lambda_perp) < 0:
            raise ValueError("loss weights must be non-negative")


def kl_standard_normal(q: GaussianPosterior) -> torch.Tensor:
    """KL(q || N(0, I)) summed over latent dims, averaged over the batch:
    0.5 * sum(sigma^2 + mu^2 - 1 - log sigma^2)."""
    var = torch.exp(q.log_variance)
    per_dim = 0.5 * (var + q.mean ** 2 - 1.0 - q.log_variance)
    if per_dim.dim() > 1:
        return per_dim.sum(dim=tuple(range(1, per_dim.dim()))).mean()
    return per_dim.sum()


def reparameterize(q: GaussianPosterior, eps: torch.Tensor) -> torch.Tensor:
    """z = mu + sigma * eps, differentiable w.r.t. mu and log-variance."""
    if eps.shape != q.mean.shape:
        raise ValueError(f"eps shape {tuple(eps.shape)} != mean shape {tuple(q.mean.shape)}")
    return q.mean + q.std * eps


def _check_probs(t: torch.Tensor) -> None:
    if not torch.isfinite(t).all():
        raise ValueError("non-finite discriminator output")


def generator_adversarial_loss(disc_outputs: torch.Tensor, eps: float = PROB_EPS) -> torch.Tensor:
    """-mean log D(fake) over all patches and samples."""
    _check_probs(disc_outputs)
    return -torch.log(disc_outputs.clamp(eps, 1.0 - eps)).mean()


def discriminator_adversarial_loss(
    real_outputs: torch.Tensor, fake_outputs: torch.Tensor, eps: float = PROB_EPS
) -> torch.Tensor:
    """-mean log D(real) - mean log(1 - D(fake))."""
    _check_probs(real_outputs)
    _check_probs(fake_outputs)
    real = torch.log(real_outputs.clamp(eps, 1.0 - eps)).mean()
    fake = torch.log((1.0 - fake_outputs).clamp(eps, 1.0 - eps)).mean()
    return -real - fake


def l1_loss(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference over all elements."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    return (x - y).abs().mean()


def perceptual_loss(x: torch.Tensor, y: torch.Tensor, extractor) -> torch.Tensor:
    """Mean absolute difference of frozen features; gradient reaches x and y
    but never the extractor parameters."""
    return l1_loss(extractor(x), extractor(y))


def composite_loss(
    adv: torch.Tensor, l1: torch.Tensor, perp: torch.Tensor, w: LossWeights
) -> torch.Tensor:
    """adv + lambda_l1 * l1 + lambda_perp * perp."""
    return adv + w.lambda_l1 * l1 + w.lambda_perp * perp


class Conv12FeatureExtractor(nn.Module):
    """First two 3x3 conv layers of a VGG-16-shaped stack (the conv1-2 tap).

    Inputs are [-1, 1] images; they are remapped to [0, 1] and normalized with
    fixed per-channel stats. Weights default to a seed-pinned random
    initialization (offline-safe stand-in); pass ``weights_path`` pointing at a
    state dict to use genuinely pretrained filters. Parameters are frozen.
    """

    def __init__(self, weights_path: str | None = None, seed: int = 0):
        super().__init__()
        self.conv1_1 = nn.Conv2d(3, 64, 3, padding=1)
        self.conv1_2 = nn.Conv2d(64, 64, 3, padding=1)
        if weights_path is not None:
            state = torch.load(weights_path, map_location="cpu", weights_only=True)
            self.load_state_dict(state)
            self.weights_origin = weights_path
        else:
            gen = torch.Generator().manual_seed(seed)
            for p in self.parameters():
                with torch.no_grad():
                    p.copy_(torch.randn(p.shape, generator=gen) * 0.05)
            self.weights_origin = f"random(seed={seed})"
        for p in self.parameters():
            p.requires_grad_(False)
        mean = torch.tensor(FEATURE_NORM_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(FEATURE_NORM_STD).view(1, 3, 1, 1)
        self.register_buffer("norm_mean", mean)
        self.register_buffer("norm_std", std)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = ((x + 1.0) * 0.5 - self.norm_mean) / self.norm_std
        x = torch.relu(self.conv1_1(x))
        return torch.relu(self.conv1_2(x))
