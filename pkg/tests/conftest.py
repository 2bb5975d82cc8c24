"""Shared fixtures: schemas, synthetic datasets, micro model configs."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from a2f.data import pencil_sketch, save_image
from a2f.schema import AttributeSchema, AttributeVector, default_schema
from a2f.training import to_model_range


@pytest.fixture(scope="session")
def schema19() -> AttributeSchema:
    return default_schema()


@pytest.fixture()
def tiny_schema() -> AttributeSchema:
    return AttributeSchema.from_records(
        [("Bold", "texture"), ("Round", "texture"), ("Sharp", "texture"),
         ("Wide", "texture"), ("Dark", "color"), ("Pale", "color")]
    )


def synthetic_face(seed: int, size: int = 64) -> np.ndarray:
    """Smooth colored gradients plus one darker ellipse; enough structure for
    sketches and overfitting, cheap to generate."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    channels = [
        0.5 + 0.4 * np.sin(2 * np.pi * (a * xx + b * yy + c))
        for a, b, c in rng.uniform(0.3, 2.0, (3, 3))
    ]
    face = np.stack(channels, axis=2)
    cy, cx = rng.uniform(0.35, 0.65, 2)
    ry, rx = rng.uniform(0.2, 0.4), rng.uniform(0.15, 0.3)
    mask = (((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2) < 1.0
    face[mask] *= rng.uniform(0.3, 0.9)
    return np.clip(face, 0.0, 1.0)


@pytest.fixture(scope="session")
def face_batch() -> np.ndarray:
    return np.stack([synthetic_face(i) for i in range(8)])


@pytest.fixture(scope="session")
def sketch_batch(face_batch) -> np.ndarray:
    return np.stack([pencil_sketch(f, 3.0) for f in face_batch]).astype(np.float32)


@pytest.fixture(scope="session")
def sketch_tensor(sketch_batch) -> torch.Tensor:
    return to_model_range(sketch_batch)


@pytest.fixture(scope="session")
def face_tensor(face_batch) -> torch.Tensor:
    return to_model_range(face_batch.astype(np.float32))


def write_raw_dataset(root, n: int, schema: AttributeSchema, seed: int = 0,
                      size: int = 72, partition: dict | None = None) -> None:
    """Raw-dataset layout: images/ + attributes.txt (+ optional partition.txt)."""
    rng = np.random.default_rng(seed)
    images = root / "images"
    images.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(n):
        name = f"img{i:04d}.png"
        save_image(images / name, synthetic_face(seed * 1000 + i, size))
        labels = rng.choice([-1, 1], size=len(schema))
        rows.append(name + " " + " ".join(str(int(v)) for v in labels))
    header = " ".join(schema.names)
    (root / "attributes.txt").write_text(f"{n}\n{header}\n" + "\n".join(rows) + "\n")
    if partition is not None:
        lines = [f"{name} {code}" for name, code in partition.items()]
        (root / "partition.txt").write_text("\n".join(lines) + "\n")


@pytest.fixture()
def raw_dataset(tmp_path, tiny_schema):
    write_raw_dataset(tmp_path / "raw", 12, tiny_schema, seed=7)
    return tmp_path / "raw"


def random_attrs(n: int, dim: int, seed: int = 0) -> torch.Tensor:
    gen = torch.Generator().manual_seed(seed)
    return (torch.randint(0, 2, (n, dim), generator=gen).float() * 2.0 - 1.0)


def make_micro_checkpoints(directory, schema: AttributeSchema, seed: int = 0):
    """Write fresh micro-width S1/G2/G3 checkpoints sharing one schema."""
    from a2f.stage1 import Stage1Config, Stage1Model
    from a2f.stage2 import AUDeNet, AUDeNetConfig
    from a2f.stage3 import FaceGenerator, Stage3GeneratorConfig
    from a2f.training import save_checkpoint

    torch.manual_seed(seed)
    s1_cfg = Stage1Config(n_texture_attributes=len(schema.texture_indices), z_dim=16,
                          attr_embed_dim=16, noise_dim=6, base_channels=4)
    g2_cfg = AUDeNetConfig(width_scale=0.0625, attr_embed_dim=16)
    g3_cfg = Stage3GeneratorConfig(n_attributes=len(schema), base_channels=8, attr_embed_dim=8)
    s1, g2, g3 = Stage1Model(s1_cfg), AUDeNet(g2_cfg), FaceGenerator(g3_cfg)
    paths = (directory / "s1.pt", directory / "g2.pt", directory / "g3.pt")
    save_checkpoint(paths[0], "S1", s1, s1_cfg, schema)
    save_checkpoint(paths[1], "G2", g2, g2_cfg, schema)
    save_checkpoint(paths[2], "G3", g3, g3_cfg, schema)
    return paths


@pytest.fixture(scope="session")
def micro_checkpoints(tmp_path_factory):
    from a2f.schema import AttributeSchema

    schema = AttributeSchema.from_records(
        [("Bold", "texture"), ("Round", "texture"), ("Sharp", "texture"),
         ("Wide", "texture"), ("Dark", "color"), ("Pale", "color")]
    )
    directory = tmp_path_factory.mktemp("ckpts")
    return schema, make_micro_checkpoints(directory, schema)
