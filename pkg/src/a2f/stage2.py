"""Stage 2: sketch enhancement GAN.

The generator stacks dense blocks under a UNet: encoder and decoder stages at
equal resolution are joined by long skip connections, and the 256-d attribute
embedding from Stage 1 is fused into the 4x4 bottleneck. Layer plan:
C(64)-M(64)-D(256)-T(128)-D(512)-T(256)-D(1024)-T(512)-D(1024)-DT(256)-D(512)
-DT(128)-D(256)-DT(64)-D(64)-D(32)-D(32)-DT(16)-C(3).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from .disc import PatchDiscriminator, PatchDiscriminatorConfig
from .losses import (
    LossWeights,
    PROB_EPS,
    composite_loss,
    discriminator_adversarial_loss,
    generator_adversarial_loss,
    l1_loss,
    perceptual_loss,
)
from .schema import AttributeSchema
from .stage1 import Stage1Model, reconstruct_coarse
from .training import (
    TrainSpec,
    check_finite,
    iter_batches,
    make_optimizer,
    make_scheduler,
    save_checkpoint,
)

ROLE_G = "G2"
ROLE_D = "D2"

_PLAN = (64, 64, 256, 128, 512, 256, 1024, 512, 1024, 256, 512, 128, 256, 64, 64, 32, 32, 16)


@dataclass
class AUDeNetConfig:
    """Channel plan is the reference plan times width_scale; topology is fixed."""

    width_scale: float = 1.0
    growth_rate: int = 32
    bottleneck_layers: int = 6
    attr_embed_dim: int = 256
    use_attributes: bool = True

    def ch(self, k: int) -> int:
        return max(1, round(k * self.width_scale))

    @property
    def growth(self) -> int:
        return max(1, round(self.growth_rate * self.width_scale))


class BottleneckLayer(nn.Module):
    """1x1 squeeze to 4*growth then 3x3 to growth channels."""

    def __init__(self, in_channels: int, growth: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, 4 * growth, 1)
        self.bn1 = nn.BatchNorm2d(4 * growth)
        self.conv2 = nn.Conv2d(4 * growth, growth, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(growth)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = torch.relu(self.bn1(self.conv1(x)))
        return torch.relu(self.bn2(self.conv2(x)))


class DenseBlock(nn.Module):
    """Each layer consumes the concatenation of the block input and every
    previous layer's output (input first, then features in layer order);
    a 1x1 projection emits exactly ``out_channels``."""

    def __init__(self, in_channels: int, out_channels: int, growth: int, n_layers: int = 6):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.growth = growth
        self.layers = nn.ModuleList(
            BottleneckLayer(in_channels + i * growth, growth) for i in range(n_layers)
        )
        proj_in = in_channels + n_layers * growth
        self.project = nn.Sequential(
            nn.Conv2d(proj_in, out_channels, 1), nn.BatchNorm2d(out_channels), nn.ReLU(inplace=True)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.in_channels:
            raise ValueError(f"dense block expects {self.in_channels} channels, got {x.shape[1]}")
        features = [x]
        for layer in self.layers:
            features.append(layer(torch.cat(features, dim=1)))
        return self.project(torch.cat(features, dim=1))


def dense_block(x: torch.Tensor, block: DenseBlock) -> torch.Tensor:
    """Functional entry point for a configured dense block."""
    return block(x)


class TransitionDown(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(cin, cout, 1), nn.BatchNorm2d(cout), nn.ReLU(inplace=True), nn.AvgPool2d(2)
        )

    def forward(self, x):
        return self.net(x)


class TransitionUp(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(cin, cout, 1),
            nn.BatchNorm2d(cout),
            nn.ReLU(inplace=True),
            nn.ConvTranspose2d(cout, cout, 2, stride=2),
        )

    def forward(self, x):
        return self.net(x)


class AttributeFusion(nn.Module):
    """Broadcast the embedding over the feature grid, concat, 1x1 back to width."""

    def __init__(self, channels: int, embed_dim: int):
        super().__init__()
        self.embed_dim = embed_dim
        self.net = nn.Sequential(
            nn.Conv2d(channels + embed_dim, channels, 1),
            nn.BatchNorm2d(channels),
            nn.ReLU(inplace=True),
        )

    def forward(self, x: torch.Tensor, embedding: torch.Tensor) -> torch.Tensor:
        if embedding.shape[-1] != self.embed_dim:
            raise ValueError(f"attribute embedding must be {self.embed_dim}-d")
        grid = embedding[:, :, None, None].expand(-1, -1, x.shape[2], x.shape[3])
        return self.net(torch.cat([x, grid], dim=1))


class AUDeNet(nn.Module):
    """Dense-UNet sketch enhancer; shape-preserving, output in [-1, 1]."""

    skip_resolutions = (64, 32, 16, 8)

    def __init__(self, cfg: AUDeNetConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or AUDeNetConfig()
        p = [cfg.ch(k) for k in _PLAN]
        g, n = cfg.growth, cfg.bottleneck_layers

        self.head = nn.Sequential(nn.Conv2d(3, p[0], 3, padding=1),
                                  nn.BatchNorm2d(p[0]), nn.ReLU(inplace=True))
        self.pool = nn.MaxPool2d(2)
        self.db_enc32 = DenseBlock(p[1], p[2], g, n)
        self.down16 = TransitionDown(p[2], p[3])
        self.db_enc16 = DenseBlock(p[3], p[4], g, n)
        self.down8 = TransitionDown(p[4], p[5])
        self.db_enc8 = DenseBlock(p[5], p[6], g, n)
        self.down4 = TransitionDown(p[6], p[7])
        self.fusion = AttributeFusion(p[7], cfg.attr_embed_dim) if cfg.use_attributes else None
        self.db_bottleneck = DenseBlock(p[7], p[8], g, n)
        self.up8 = TransitionUp(p[8], p[9])
        self.db_dec8 = DenseBlock(p[9] + p[6], p[10], g, n)
        self.up16 = TransitionUp(p[10], p[11])
        self.db_dec16 = DenseBlock(p[11] + p[4], p[12], g, n)
        self.up32 = TransitionUp(p[12], p[13])
        self.db_dec32a = DenseBlock(p[13] + p[2], p[14], g, n)
        self.db_dec32b = DenseBlock(p[14], p[15], g, n)
        self.db_dec32c = DenseBlock(p[15], p[16], g, n)
        self.up64 = TransitionUp(p[16], p[17])
        self.tail = nn.Conv2d(p[17] + p[0], 3, 3, padding=1)
        # hook points so tests can intercept exactly the skip tensors
        self.skip_taps = nn.ModuleDict({str(r): nn.Identity() for r in self.skip_resolutions})

    def forward(self, coarse: torch.Tensor, attr_embedding: torch.Tensor | None = None) -> torch.Tensor:
        e64 = self.head(coarse)
        e32 = self.db_enc32(self.pool(e64))
        e16 = self.db_enc16(self.down16(e32))
        e8 = self.db_enc8(self.down8(e16))
        x = self.down4(e8)
        if self.fusion is not None:
            if attr_embedding is None:
                raise ValueError("attribute embedding required")
            x = self.fusion(x, attr_embedding)
        x = self.db_bottleneck(x)
        x = self.db_dec8(torch.cat([self.up8(x), self.skip_taps["8"](e8)], dim=1))
        x = self.db_dec16(torch.cat([self.up16(x), self.skip_taps["16"](e16)], dim=1))
        x = self.db_dec32a(torch.cat([self.up32(x), self.skip_taps["32"](e32)], dim=1))
        x = self.db_dec32c(self.db_dec32b(x))
        x = torch.cat([self.up64(x), self.skip_taps["64"](e64)], dim=1)
        return torch.tanh(self.tail(x))

    @classmethod
    def from_checkpoint(cls, payload: dict) -> "AUDeNet":
        model = cls(AUDeNetConfig(**payload["config"]))
        model.load_state_dict(payload["state_dict"])
        model.eval()
        return model


def generate_enhanced(
    coarse: torch.Tensor, attr_embedding: torch.Tensor | None, g: AUDeNet
) -> torch.Tensor:
    return g(coarse, attr_embedding)


def make_enhancement_pairs(
    stage1: Stage1Model,
    sketches: torch.Tensor,
    tex_attrs: torch.Tensor,
    generator: torch.Generator,
) -> tuple[torch.Tensor, torch.Tensor]:
    """(coarse inputs, attribute embeddings) for the training split."""
    coarse = reconstruct_coarse(stage1, sketches, tex_attrs, generator)
    stage1.eval()
    with torch.no_grad():
        embeddings = stage1.attr_embedder(tex_attrs)
    return coarse, embeddings


def train_stage2(
    coarse: torch.Tensor,
    targets: torch.Tensor,
    attr_embeddings: torch.Tensor,
    g_cfg: AUDeNetConfig,
    d_cfg: PatchDiscriminatorConfig,
    spec: TrainSpec,
    weights: LossWeights,
    extractor,
    schema: AttributeSchema | None = None,
    out_dir: str | Path | None = None,
    models: tuple[AUDeNet, PatchDiscriminator] | None = None,
    stop_when=None,
    prob_eps: float = PROB_EPS,
) -> tuple[AUDeNet, PatchDiscriminator, list[dict]]:
    """Alternating D2/G2 updates; G2 minimizes adv + l1 + perceptual.
    Pass ``models`` to continue training; ``stop_when(entry)`` ends early."""
    torch.manual_seed(spec.seed)
    if models is not None:
        generator_net, disc_net = models
    else:
        generator_net, disc_net = AUDeNet(g_cfg), PatchDiscriminator(d_cfg)
    g_opt = make_optimizer(generator_net.parameters(), spec)
    d_opt = make_optimizer(disc_net.parameters(), spec)
    g_sched = make_scheduler(g_opt, spec)
    d_sched = make_scheduler(d_opt, spec)
    gen = torch.Generator().manual_seed(spec.seed)
    log: list[dict] = []

    for epoch in range(spec.epochs):
        generator_net.train()
        disc_net.train()
        sums = {"d_loss": 0.0, "g_adv": 0.0, "g_l1": 0.0, "g_perp": 0.0, "g_total": 0.0}
        n_batches = 0
        for idx in iter_batches(len(coarse), spec.batch_size, gen):
            if len(idx) == 1:
                continue
            cond, target = coarse[idx], targets[idx]
            embed = attr_embeddings[idx]

            fake = generator_net(cond, embed)

            d_opt.zero_grad()
            d_loss = discriminator_adversarial_loss(
                disc_net(cond, target), disc_net(cond, fake.detach()), eps=prob_eps
            )
            check_finite(d_loss, f"stage2 D epoch {epoch}")
            d_loss.backward()
            d_opt.step()

            g_opt.zero_grad()
            adv = generator_adversarial_loss(disc_net(cond, fake), eps=prob_eps)
            l1 = l1_loss(fake, target)
            perp = (
                perceptual_loss(fake, target, extractor)
                if weights.lambda_perp > 0
                else torch.zeros(())
            )
            g_loss = composite_loss(adv, l1, perp, weights)
            check_finite(g_loss, f"stage2 G epoch {epoch}")
            g_loss.backward()
            g_opt.step()

            sums["d_loss"] += d_loss.item()
            sums["g_adv"] += adv.item()
            sums["g_l1"] += l1.item()
            sums["g_perp"] += perp.item()
            sums["g_total"] += g_loss.item()
            n_batches += 1
        entry = {k: v / max(n_batches, 1) for k, v in sums.items()}
        entry.update(epoch=epoch, lr=g_opt.param_groups[0]["lr"])
        g_sched.step()
        d_sched.step()
        log.append(entry)
        if out_dir is not None and schema is not None:
            save_checkpoint(Path(out_dir) / f"stage2_g_epoch{epoch:03d}.pt",
                            ROLE_G, generator_net, g_cfg, schema, g_opt, epoch)
            save_checkpoint(Path(out_dir) / f"stage2_d_epoch{epoch:03d}.pt",
                            ROLE_D, disc_net, d_cfg, schema, d_opt, epoch)
        if stop_when is not None and stop_when(entry):
            break
    generator_net.eval()
    disc_net.eval()
    return generator_net, disc_net, log
