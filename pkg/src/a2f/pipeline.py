"""End-to-end inference: attributes + seed -> coarse sketch -> enhanced sketch -> face.

A loaded session is immutable; every synthesize call owns a generator seeded
from the call's seed, so repeated calls are bit-identical and concurrent
calls never share RNG state.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import save_image
from .losses import reparameterize
from .schema import (
    SWEEP_WEIGHTS,
    AttributeSchema,
    AttributeVector,
    SchemaError,
    parse_schema_text,
    texture_projection,
)
from .stage1 import Stage1Model
from .stage2 import AUDeNet
from .stage3 import FaceGenerator
from .training import checkpoint_file_hash, load_checkpoint, to_unit_range

PRNG_POLICY = "torch-cpu-mt19937"


class SessionError(RuntimeError):
    pass


@dataclass(frozen=True)
class AblationFlags:
    skip_stage2: bool = False
    no_attr_stage2: bool = False
    no_attr_stage3: bool = False

    def as_dict(self) -> dict[str, bool]:
        return asdict(self)


@dataclass
class SynthesisResult:
    """All three stage outputs as [0,1] HWC arrays plus the inputs that made them."""

    coarse_sketch: np.ndarray
    enhanced_sketch: np.ndarray
    face: np.ndarray
    attributes: AttributeVector
    seed: int
    flags: AblationFlags
    meta: dict = field(default_factory=dict)


@dataclass
class PipelineSession:
    schema: AttributeSchema
    stage1: Stage1Model
    stage3: FaceGenerator
    stage2: AUDeNet | None = None
    flags: AblationFlags = AblationFlags()
    checkpoint_hashes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stage2 is None and not self.flags.skip_stage2:
            raise SessionError("stage 2 checkpoint missing and skip_stage2 not set")
        self.stage1.eval()
        self.stage3.eval()
        if self.stage2 is not None:
            self.stage2.eval()


def load_session(
    stage1_path: str | Path,
    stage2_path: str | Path | None,
    stage3_path: str | Path,
    flags: AblationFlags = AblationFlags(),
) -> PipelineSession:
    """Load and cross-validate the stage checkpoints (shared schema fingerprint)."""
    payloads = {"stage1": load_checkpoint(stage1_path, expect_role="S1")}
    hashes = {"stage1": checkpoint_file_hash(stage1_path)}
    if stage2_path is not None:
        payloads["stage2"] = load_checkpoint(stage2_path, expect_role="G2")
        hashes["stage2"] = checkpoint_file_hash(stage2_path)
    elif not flags.skip_stage2:
        raise SessionError("stage 2 checkpoint missing and skip_stage2 not set")
    payloads["stage3"] = load_checkpoint(stage3_path, expect_role="G3")
    hashes["stage3"] = checkpoint_file_hash(stage3_path)

    fingerprints = {name: p["schema_fingerprint"] for name, p in payloads.items()}
    if len(set(fingerprints.values())) != 1:
        raise SessionError(f"schema fingerprint mismatch across checkpoints: {fingerprints}")

    schema = parse_schema_text(payloads["stage1"]["schema_text"], origin="checkpoint")
    return PipelineSession(
        schema=schema,
        stage1=Stage1Model.from_checkpoint(payloads["stage1"]),
        stage2=AUDeNet.from_checkpoint(payloads["stage2"]) if "stage2" in payloads else None,
        stage3=FaceGenerator.from_checkpoint(payloads["stage3"]),
        flags=flags,
        checkpoint_hashes=hashes,
    )


def _stage_forward(
    session: PipelineSession,
    a: AttributeVector,
    noise: torch.Tensor,
    eps: torch.Tensor,
    flags: AblationFlags,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    a_tex = torch.tensor(texture_projection(a), dtype=torch.float32).unsqueeze(0)
    a_full = torch.tensor(a.values, dtype=torch.float32).unsqueeze(0)
    with torch.no_grad():
        q, embedding = session.stage1.encode_noise(noise, a_tex)
        coarse = session.stage1.decode(reparameterize(q, eps), embedding)
        if flags.skip_stage2 or session.stage2 is None:
            enhanced = coarse
        else:
            embed = torch.zeros_like(embedding) if flags.no_attr_stage2 else embedding
            enhanced = session.stage2(coarse, embed)
        face = session.stage3(enhanced, a_full, zero_attributes=flags.no_attr_stage3)
    return coarse, enhanced, face


def _draw_noise(session: PipelineSession, seed: int) -> tuple[torch.Tensor, torch.Tensor]:
    gen = torch.Generator().manual_seed(seed)
    noise = torch.randn(1, session.stage1.cfg.noise_dim, generator=gen)
    eps = torch.randn(1, session.stage1.cfg.z_dim, generator=gen)
    return noise, eps


def _result_meta(session: PipelineSession, flags: AblationFlags) -> dict:
    return {
        "prng": PRNG_POLICY,
        "flags": flags.as_dict(),
        "checkpoints": dict(session.checkpoint_hashes),
        "schema_fingerprint": session.schema.fingerprint(),
    }


def synthesize(
    a: AttributeVector,
    seed: int,
    session: PipelineSession,
    flags: AblationFlags | None = None,
) -> SynthesisResult:
    """Deterministic three-stage synthesis for (attributes, seed)."""
    if a.schema.fingerprint() != session.schema.fingerprint():
        raise SchemaError("attribute vector schema does not match session schema")
    flags = session.flags if flags is None else flags
    if flags.skip_stage2 is False and session.stage2 is None:
        raise SessionError("session has no stage 2 model; set skip_stage2")
    noise, eps = _draw_noise(session, seed)
    coarse, enhanced, face = _stage_forward(session, a, noise, eps, flags)
    return SynthesisResult(
        coarse_sketch=to_unit_range(coarse[0]),
        enhanced_sketch=to_unit_range(enhanced[0]),
        face=to_unit_range(face[0]),
        attributes=a,
        seed=seed,
        flags=flags,
        meta=_result_meta(session, flags),
    )


def sweep(
    a_base: AttributeVector,
    attr_index: int,
    seed: int,
    session: PipelineSession,
    weights: tuple[float, ...] = SWEEP_WEIGHTS,
    flags: AblationFlags | None = None,
) -> list[SynthesisResult]:
    """One synthesis per weight with the noise draw held fixed across the strip."""
    if a_base.schema.fingerprint() != session.schema.fingerprint():
        raise SchemaError("attribute vector schema does not match session schema")
    flags = session.flags if flags is None else flags
    noise, eps = _draw_noise(session, seed)
    results = []
    for vec in [a_base.replace(attr_index, w) for w in weights]:
        coarse, enhanced, face = _stage_forward(session, vec, noise, eps, flags)
        results.append(
            SynthesisResult(
                coarse_sketch=to_unit_range(coarse[0]),
                enhanced_sketch=to_unit_range(enhanced[0]),
                face=to_unit_range(face[0]),
                attributes=vec,
                seed=seed,
                flags=flags,
                meta=_result_meta(session, flags),
            )
        )
    return results


def write_result(result: SynthesisResult, run_dir: str | Path) -> Path:
    """Write `<run>/<seed>/stage{1,2,3}.png` plus a meta record."""
    out = Path(run_dir) / str(result.seed)
    out.mkdir(parents=True, exist_ok=True)
    save_image(out / "stage1.png", result.coarse_sketch)
    save_image(out / "stage2.png", result.enhanced_sketch)
    save_image(out / "stage3.png", result.face)
    meta = dict(result.meta)
    meta.update(seed=result.seed, attributes=result.attributes.as_dict())
    (out / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    return out
