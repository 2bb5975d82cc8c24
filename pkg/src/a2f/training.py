"""Shared training plumbing: optimizer setup, LR schedule, checkpoints, batching."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
import torch

from .schema import AttributeSchema
from .data import DataError, Manifest, load_record

CHECKPOINT_VERSION = 1


class TrainingDivergence(RuntimeError):
    """Loss went non-finite; aborts the run with a diagnostic."""


class CheckpointError(ValueError):
    pass


@dataclass
class TrainSpec:
    """Optimizer and schedule settings shared by all stages."""

    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 128
    epochs: int = 20
    warm_epochs: int = 10
    decay_epochs: int = 10
    seed: int = 0


def make_optimizer(params, spec: TrainSpec) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=spec.lr, betas=(spec.beta1, spec.beta2))


def make_scheduler(optimizer, spec: TrainSpec):
    """Constant LR for warm_epochs, then x(1 - 1/decay_epochs) every epoch."""
    factor = 1.0 - 1.0 / spec.decay_epochs

    def per_epoch(epoch: int) -> float:
        # epoch is 0-based and counts completed epochs
        return 1.0 if epoch < spec.warm_epochs else factor

    return torch.optim.lr_scheduler.MultiplicativeLR(optimizer, per_epoch)


def iter_batches(
    n: int, batch_size: int, generator: torch.Generator, shuffle: bool = True
) -> Iterator[torch.Tensor]:
    order = torch.randperm(n, generator=generator) if shuffle else torch.arange(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def check_finite(loss: torch.Tensor, context: str) -> None:
    if not torch.isfinite(loss):
        raise TrainingDivergence(f"non-finite loss in {context}: {loss.item()!r}")


# ---------------------------------------------------------------------------
# image <-> tensor conversion ([0,1] HWC numpy vs [-1,1] CHW torch)
# ---------------------------------------------------------------------------

def to_model_range(img: np.ndarray) -> torch.Tensor:
    t = torch.from_numpy(np.ascontiguousarray(img, dtype=np.float32))
    if t.dim() == 3:
        t = t.permute(2, 0, 1)
    else:
        t = t.permute(0, 3, 1, 2)
    return t * 2.0 - 1.0


def to_unit_range(t: torch.Tensor) -> np.ndarray:
    arr = ((t.detach().clamp(-1.0, 1.0) + 1.0) * 0.5).cpu().numpy()
    if arr.ndim == 3:
        return np.transpose(arr, (1, 2, 0))
    return np.transpose(arr, (0, 2, 3, 1))


def load_split_tensors(
    manifest: Manifest, split: str = "train"
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(faces, sketches, attributes) for one split; images in [-1,1] CHW."""
    recs = manifest.split_records(split)
    if not recs:
        raise DataError(f"manifest has no {split!r} records")
    faces, sketches, attrs = [], [], []
    for rec in recs:
        sample = load_record(rec, manifest.schema)
        faces.append(sample.face)
        sketches.append(sample.sketch)
        attrs.append(rec.attributes)
    return (
        to_model_range(np.stack(faces)),
        to_model_range(np.stack(sketches)),
        torch.tensor(np.stack(attrs), dtype=torch.float32),
    )


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(
    path: str | Path,
    role: str,
    model: torch.nn.Module,
    config,
    schema: AttributeSchema,
    optimizer: torch.optim.Optimizer | None = None,
    epoch: int = 0,
) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "role": role,
        "config": asdict(config),
        "config_class": type(config).__name__,
        "schema_text": schema.to_text(),
        "schema_fingerprint": schema.fingerprint(),
        "state_dict": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "epoch": epoch,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: str | Path, expect_role: str | None = None) -> dict:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointError(f"{path} is not a model checkpoint")
    if payload["format_version"] != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {payload['format_version']}")
    if expect_role is not None and payload["role"] != expect_role:
        raise CheckpointError(f"{path}: expected role {expect_role}, found {payload['role']}")
    return payload


def checkpoint_file_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
