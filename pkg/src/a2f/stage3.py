"""Stage 3: face synthesis from an enhanced sketch plus the full attribute set.

UNet generator: five stride-2 conv stages down to a 2x2 bottleneck, a
two-layer residual block fusing the 128-d attribute embedding, five
transposed-conv stages back to 64x64 with skip connections at every matching
resolution. Paired with the same 6x6 patch discriminator as Stage 2.
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
from .training import (
    TrainSpec,
    check_finite,
    iter_batches,
    make_optimizer,
    make_scheduler,
    save_checkpoint,
)

ROLE_G = "G3"
ROLE_D = "D3"


@dataclass
class Stage3GeneratorConfig:
    """Encoder plan C(64)-C(128)-C(256)-C(512)-C(512) at base_channels=64."""

    n_attributes: int = 19
    base_channels: int = 64
    attr_embed_dim: int = 128
    out_channels: int = 3
    use_attributes: bool = True

    @property
    def encoder_channels(self) -> tuple[int, int, int, int, int]:
        c = self.base_channels
        return (c, 2 * c, 4 * c, 8 * c, 8 * c)


def _down(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 4, stride=2, padding=1),
        nn.BatchNorm2d(cout),
        nn.LeakyReLU(0.2, inplace=True),
    )


def _up(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(
        nn.ConvTranspose2d(cin, cout, 4, stride=2, padding=1),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


class ResidualFusion(nn.Module):
    """Project the (features + broadcast embedding) concat to the bottleneck
    width, then add a two-layer residual map. With the residual convs zeroed
    this is exactly the projection."""

    def __init__(self, channels: int, embed_dim: int):
        super().__init__()
        self.project = nn.Sequential(
            nn.Conv2d(channels + embed_dim, channels, 3, padding=1),
            nn.BatchNorm2d(channels),
            nn.ReLU(inplace=True),
        )
        self.residual = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.BatchNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.BatchNorm2d(channels),
        )

    def forward(self, x: torch.Tensor, embedding: torch.Tensor) -> torch.Tensor:
        grid = embedding[:, :, None, None].expand(-1, -1, x.shape[2], x.shape[3])
        projected = self.project(torch.cat([x, grid], dim=1))
        return projected + self.residual(projected)


class FaceGenerator(nn.Module):
    skip_resolutions = (32, 16, 8, 4)

    def __init__(self, cfg: Stage3GeneratorConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or Stage3GeneratorConfig()
        c1, c2, c3, c4, c5 = cfg.encoder_channels
        self.enc32 = _down(3, c1)
        self.enc16 = _down(c1, c2)
        self.enc8 = _down(c2, c3)
        self.enc4 = _down(c3, c4)
        self.enc2 = _down(c4, c5)
        self.attr_embed = nn.Linear(cfg.n_attributes, cfg.attr_embed_dim)
        self.fusion = ResidualFusion(c5, cfg.attr_embed_dim)
        self.dec4 = _up(c5, c4)
        self.dec8 = _up(c4 + c4, c3)
        self.dec16 = _up(c3 + c3, c2)
        self.dec32 = _up(c2 + c2, c1)
        self.to_image = nn.ConvTranspose2d(c1 + c1, cfg.out_channels, 4, stride=2, padding=1)
        self.skip_taps = nn.ModuleDict({str(r): nn.Identity() for r in self.skip_resolutions})

    def forward(
        self, sketch: torch.Tensor, attributes: torch.Tensor, zero_attributes: bool = False
    ) -> torch.Tensor:
        if attributes.shape[-1] != self.cfg.n_attributes:
            raise ValueError(
                f"attribute vector length {attributes.shape[-1]} does not match "
                f"model schema of {self.cfg.n_attributes}"
            )
        e32 = self.enc32(sketch)
        e16 = self.enc16(e32)
        e8 = self.enc8(e16)
        e4 = self.enc4(e8)
        e2 = self.enc2(e4)
        embedding = self.attr_embed(attributes)
        if not self.cfg.use_attributes or zero_attributes:
            embedding = torch.zeros_like(embedding)
        x = self.fusion(e2, embedding)
        x = self.dec4(x)
        x = self.dec8(torch.cat([x, self.skip_taps["4"](e4)], dim=1))
        x = self.dec16(torch.cat([x, self.skip_taps["8"](e8)], dim=1))
        x = self.dec32(torch.cat([x, self.skip_taps["16"](e16)], dim=1))
        x = self.to_image(torch.cat([x, self.skip_taps["32"](e32)], dim=1))
        return torch.tanh(x)

    @classmethod
    def from_checkpoint(cls, payload: dict) -> "FaceGenerator":
        model = cls(Stage3GeneratorConfig(**payload["config"]))
        model.load_state_dict(payload["state_dict"])
        model.eval()
        return model


def generate_face(
    sketch: torch.Tensor, attributes: torch.Tensor, g: FaceGenerator
) -> torch.Tensor:
    return g(sketch, attributes)


def make_face_pairs(stage2_g, coarse: torch.Tensor, attr_embeddings: torch.Tensor,
                    batch_size: int = 64) -> torch.Tensor:
    """Enhanced sketches for face training, from the frozen Stage-2 generator."""
    stage2_g.eval()
    out = []
    with torch.no_grad():
        for start in range(0, len(coarse), batch_size):
            out.append(stage2_g(coarse[start:start + batch_size],
                                attr_embeddings[start:start + batch_size]))
    return torch.cat(out)


def train_stage3(
    enhanced: torch.Tensor,
    faces: torch.Tensor,
    attributes: torch.Tensor,
    g_cfg: Stage3GeneratorConfig,
    d_cfg: PatchDiscriminatorConfig,
    spec: TrainSpec,
    weights: LossWeights,
    extractor,
    schema: AttributeSchema | None = None,
    out_dir: str | Path | None = None,
    models: tuple[FaceGenerator, PatchDiscriminator] | None = None,
    stop_when=None,
    prob_eps: float = PROB_EPS,
) -> tuple[FaceGenerator, PatchDiscriminator, list[dict]]:
    """Alternating D3/G3 updates with the same composite objective as Stage 2."""
    torch.manual_seed(spec.seed)
    if models is not None:
        generator_net, disc_net = models
    else:
        generator_net, disc_net = FaceGenerator(g_cfg), PatchDiscriminator(d_cfg)
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
        for idx in iter_batches(len(enhanced), spec.batch_size, gen):
            if len(idx) == 1:
                continue
            cond, target, attr = enhanced[idx], faces[idx], attributes[idx]

            fake = generator_net(cond, attr)

            d_opt.zero_grad()
            d_loss = discriminator_adversarial_loss(
                disc_net(cond, target), disc_net(cond, fake.detach()), eps=prob_eps
            )
            check_finite(d_loss, f"stage3 D epoch {epoch}")
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
            check_finite(g_loss, f"stage3 G epoch {epoch}")
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
            save_checkpoint(Path(out_dir) / f"stage3_g_epoch{epoch:03d}.pt",
                            ROLE_G, generator_net, g_cfg, schema, g_opt, epoch)
            save_checkpoint(Path(out_dir) / f"stage3_d_epoch{epoch:03d}.pt",
                            ROLE_D, disc_net, d_cfg, schema, d_opt, epoch)
        if stop_when is not None and stop_when(entry):
            break
    generator_net.eval()
    disc_net.eval()
    return generator_net, disc_net, log
