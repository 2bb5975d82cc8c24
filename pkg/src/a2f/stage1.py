"""Stage 1: coarse sketch synthesis from texture attributes.

A conditional VAE with two encoders sharing one decoder: the sketch branch
posterior regularizes toward the prior, a parallel noise branch is pulled to
the same prior so that at test time noise can stand in for a real sketch. The
attribute embedding stays deterministic and joins the latent after sampling.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from .losses import GaussianPosterior, LossWeights, kl_standard_normal, l1_loss, reparameterize
from .schema import AttributeSchema
from .training import (
    TrainSpec,
    check_finite,
    iter_batches,
    make_optimizer,
    make_scheduler,
    save_checkpoint,
)

ROLE = "S1"


@dataclass
class Stage1Config:
    """Sizes for the CVAE. Defaults give the reference plan: encoder
    CONV5(64)-CONV5(128)-CONV3(256)-CONV3(512)-CONV4(1024), a 512-d latent,
    and a decoder seeded at 4x4x512 with four nearest-upsample blocks."""

    n_texture_attributes: int = 13
    z_dim: int = 512
    attr_embed_dim: int = 256
    noise_dim: int = 100
    base_channels: int = 64
    decoder_base: int = 4

    def __post_init__(self):
        if self.z_dim < 4:
            raise ValueError("z_dim must be at least 4")

    @property
    def encoder_channels(self) -> tuple[int, int, int, int, int]:
        c = self.base_channels
        return (c, 2 * c, 4 * c, 8 * c, 2 * self.z_dim)

    @property
    def decoder_channels(self) -> tuple[int, int, int, int, int]:
        z = self.z_dim
        return (z, max(1, z // 2), max(1, z // 4), max(1, z // 8), max(1, z // 16))


class SketchEncoder(nn.Module):
    """64x64 sketch -> 2*z_dim flat code, split into posterior mu/logvar."""

    def __init__(self, cfg: Stage1Config):
        super().__init__()
        c1, c2, c3, c4, c5 = cfg.encoder_channels
        self.net = nn.Sequential(
            nn.Conv2d(3, c1, 5, padding=2), nn.ReLU(inplace=True), nn.MaxPool2d(2),   # 64 -> 32
            nn.Conv2d(c1, c2, 5, padding=2), nn.ReLU(inplace=True), nn.MaxPool2d(2),  # 32 -> 16
            nn.Conv2d(c2, c3, 3, stride=2, padding=1), nn.BatchNorm2d(c3), nn.ReLU(inplace=True),  # 16 -> 8
            nn.Conv2d(c3, c4, 3, stride=2, padding=1), nn.BatchNorm2d(c4), nn.ReLU(inplace=True),  # 8 -> 4
            nn.Conv2d(c4, c5, 4),  # 4 -> 1, no activation: raw mu/logvar
        )

    def forward(self, s: torch.Tensor) -> torch.Tensor:
        return self.net(s).flatten(1)


class AttributeEmbedder(nn.Module):
    def __init__(self, n_attributes: int, embed_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(n_attributes, embed_dim), nn.BatchNorm1d(embed_dim), nn.ReLU(inplace=True)
        )

    def forward(self, a: torch.Tensor) -> torch.Tensor:
        return self.net(a)


class NoiseEmbedder(nn.Module):
    """Noise vector -> 2*z_dim code, split into posterior mu/logvar."""

    def __init__(self, cfg: Stage1Config):
        super().__init__()
        out = 2 * cfg.z_dim
        self.net = nn.Sequential(
            nn.Linear(cfg.noise_dim, out), nn.BatchNorm1d(out), nn.ReLU(inplace=True)
        )

    def forward(self, n: torch.Tensor) -> torch.Tensor:
        return self.net(n)


class UpsampleBlock(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(cin, cout, 3, padding=1),
            nn.BatchNorm2d(cout),
            nn.ReLU(inplace=True),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class SketchDecoder(nn.Module):
    """(z, attribute embedding) -> 64x64x3 sketch in [-1, 1]."""

    def __init__(self, cfg: Stage1Config):
        super().__init__()
        d = cfg.decoder_channels
        base = cfg.decoder_base
        self.base = base
        self.z_dim = cfg.z_dim
        self.embed_dim = cfg.attr_embed_dim
        self.seed_channels = d[0]
        self.fc = nn.Linear(cfg.z_dim + cfg.attr_embed_dim, base * base * d[0])
        self.blocks = nn.Sequential(*(UpsampleBlock(d[i], d[i + 1]) for i in range(4)))
        self.to_image = nn.Conv2d(d[4], 3, 3, padding=1)

    def forward(self, z: torch.Tensor, attr_embedding: torch.Tensor) -> torch.Tensor:
        if z.shape[-1] != self.z_dim or attr_embedding.shape[-1] != self.embed_dim:
            raise ValueError(
                f"decoder expects z of {self.z_dim} and embedding of {self.embed_dim}, "
                f"got {z.shape[-1]} and {attr_embedding.shape[-1]}"
            )
        x = self.fc(torch.cat([z, attr_embedding], dim=1))
        x = x.view(-1, self.seed_channels, self.base, self.base)
        x = self.blocks(x)
        return torch.tanh(self.to_image(x))


class Stage1Model(nn.Module):
    def __init__(self, cfg: Stage1Config):
        super().__init__()
        self.cfg = cfg
        self.sketch_encoder = SketchEncoder(cfg)
        self.attr_embedder = AttributeEmbedder(cfg.n_texture_attributes, cfg.attr_embed_dim)
        self.noise_embedder = NoiseEmbedder(cfg)
        self.decoder = SketchDecoder(cfg)

    def _split(self, code: torch.Tensor) -> GaussianPosterior:
        mu, logvar = code.chunk(2, dim=1)
        return GaussianPosterior(mu, logvar)

    def encode_sketch(
        self, s: torch.Tensor, a_tex: torch.Tensor
    ) -> tuple[GaussianPosterior, torch.Tensor]:
        if a_tex.shape[-1] != self.cfg.n_texture_attributes:
            raise ValueError("texture attribute vector does not match model")
        return self._split(self.sketch_encoder(s)), self.attr_embedder(a_tex)

    def encode_noise(
        self, n: torch.Tensor, a_tex: torch.Tensor
    ) -> tuple[GaussianPosterior, torch.Tensor]:
        if n.shape[-1] != self.cfg.noise_dim:
            raise ValueError(f"noise length {n.shape[-1]} != configured {self.cfg.noise_dim}")
        return self._split(self.noise_embedder(n)), self.attr_embedder(a_tex)

    def decode(self, z: torch.Tensor, attr_embedding: torch.Tensor) -> torch.Tensor:
        return self.decoder(z, attr_embedding)

    @classmethod
    def from_checkpoint(cls, payload: dict) -> "Stage1Model":
        model = cls(Stage1Config(**payload["config"]))
        model.load_state_dict(payload["state_dict"])
        model.eval()
        return model


def stage1_loss(
    model: Stage1Model,
    sketches: torch.Tensor,
    tex_attrs: torch.Tensor,
    w: LossWeights,
    generator: torch.Generator | None = None,
    noise: torch.Tensor | None = None,
    eps: torch.Tensor | None = None,
    kl_sketch_weight: float = 1.0,
) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """Total = kl_sketch + lambda_kl_noise * kl_noise + L1 reconstruction.

    Fresh noise is drawn per sample unless ``noise``/``eps`` are supplied
    (tests use eps=0 to force the posterior mean path).
    """
    if sketches.shape[0] == 0:
        raise ValueError("empty batch")
    batch = sketches.shape[0]
    q_sketch, attr_embedding = model.encode_sketch(sketches, tex_attrs)
    if noise is None:
        noise = torch.randn(batch, model.cfg.noise_dim, generator=generator,
                            dtype=sketches.dtype)
    q_noise, _ = model.encode_noise(noise, tex_attrs)
    if eps is None:
        eps = torch.randn(q_sketch.mean.shape, generator=generator, dtype=sketches.dtype)
    z = reparameterize(q_sketch, eps)
    recon = l1_loss(model.decode(z, attr_embedding), sketches)
    kl_s = kl_standard_normal(q_sketch)
    kl_n = kl_standard_normal(q_noise)
    total = kl_sketch_weight * kl_s + w.lambda_kl_noise * kl_n + recon
    return total, {"kl_sketch": kl_s, "kl_noise": kl_n, "reconstruction": recon}


def train_stage1(
    sketches: torch.Tensor,
    tex_attrs: torch.Tensor,
    cfg: Stage1Config,
    spec: TrainSpec,
    weights: LossWeights,
    schema: AttributeSchema | None = None,
    out_dir: str | Path | None = None,
    model: Stage1Model | None = None,
    stop_when=None,
) -> tuple[Stage1Model, list[dict]]:
    """Full-batch-shuffled ADAM training; checkpoints per epoch when out_dir set.
    Pass ``model`` to continue training; ``stop_when(entry)`` ends the run early."""
    torch.manual_seed(spec.seed)
    if model is None:
        model = Stage1Model(cfg)
    optimizer = make_optimizer(model.parameters(), spec)
    scheduler = make_scheduler(optimizer, spec)
    gen = torch.Generator().manual_seed(spec.seed)
    log: list[dict] = []

    for epoch in range(spec.epochs):
        model.train()
        sums = {"total": 0.0, "kl_sketch": 0.0, "kl_noise": 0.0, "reconstruction": 0.0}
        n_batches = 0
        for idx in iter_batches(len(sketches), spec.batch_size, gen):
            if len(idx) == 1:
                continue  # BatchNorm needs >1 sample
            optimizer.zero_grad()
            total, parts = stage1_loss(model, sketches[idx], tex_attrs[idx], weights, gen)
            check_finite(total, f"stage1 epoch {epoch}")
            total.backward()
            optimizer.step()
            sums["total"] += total.item()
            for k in parts:
                sums[k] += parts[k].item()
            n_batches += 1
        entry = {k: v / max(n_batches, 1) for k, v in sums.items()}
        entry.update(epoch=epoch, lr=optimizer.param_groups[0]["lr"])
        scheduler.step()
        log.append(entry)
        if out_dir is not None and schema is not None:
            save_checkpoint(
                Path(out_dir) / f"stage1_epoch{epoch:03d}.pt",
                ROLE, model, cfg, schema, optimizer, epoch,
            )
        if stop_when is not None and stop_when(entry):
            break
    model.eval()
    return model, log


def reconstruct_coarse(
    model: Stage1Model,
    sketches: torch.Tensor,
    tex_attrs: torch.Tensor,
    generator: torch.Generator,
    batch_size: int = 64,
) -> torch.Tensor:
    """Coarse sketches for enhancement training: sample the sketch posterior
    and decode. Keeps pixel correspondence with the target sketches."""
    model.eval()
    out = []
    with torch.no_grad():
        for start in range(0, len(sketches), batch_size):
            s = sketches[start : start + batch_size]
            a = tex_attrs[start : start + batch_size]
            q, e = model.encode_sketch(s, a)
            eps = torch.randn(q.mean.shape, generator=generator)
            out.append(model.decode(reparameterize(q, eps), e))
    return torch.cat(out)
