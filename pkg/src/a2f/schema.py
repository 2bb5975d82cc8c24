"""Attribute vocabulary: names, texture/color partition, and sweep vectors.

Attribute values are soft weights in [-1, 1]; binary dataset labels map to
{-1, +1} so a negative weight means absence. Sketch stages consume only the
texture sub-vector, the face stage consumes the full vector.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

GROUPS = ("texture", "color")

# Six-point weight ladder used for single-attribute sweeps.
SWEEP_WEIGHTS = (-1.0, -0.1, 0.1, 0.4, 0.7, 1.0)


class SchemaError(ValueError):
    """Malformed schema file or attribute vector."""


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered attribute names with a disjoint texture/color index split."""

    names: tuple[str, ...]
    texture_indices: tuple[int, ...]
    color_indices: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise SchemaError("duplicate attribute names")
        tex, col = set(self.texture_indices), set(self.color_indices)
        if tex & col:
            raise SchemaError("attribute assigned to both groups")
        if tex | col != set(range(len(self.names))):
            raise SchemaError("texture and color indices must cover all attributes")

    def __len__(self) -> int:
        return len(self.names)

    @property
    def texture_names(self) -> tuple[str, ...]:
        return tuple(self.names[i] for i in self.texture_indices)

    @property
    def color_names(self) -> tuple[str, ...]:
        return tuple(self.names[i] for i in self.color_indices)

    def group_of(self, name: str) -> str:
        idx = self.index_of(name)
        return "texture" if idx in self.texture_indices else "color"

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown attribute: {name}") from None

    @classmethod
    def from_records(cls, records: Iterable[tuple[str, str]]) -> "AttributeSchema":
        names, tex, col = [], [], []
        for i, (name, group) in enumerate(records):
            if group not in GROUPS:
                raise SchemaError(f"attribute {name!r} has bad group {group!r}")
            names.append(name)
            (tex if group == "texture" else col).append(i)
        if not names:
            raise SchemaError("schema has no attributes")
        return cls(tuple(names), tuple(tex), tuple(col))

    def to_records(self) -> list[tuple[str, str]]:
        return [(n, self.group_of(n)) for n in self.names]

    def to_text(self) -> str:
        return "".join(f"{n} {g}\n" for n, g in self.to_records())

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


def parse_schema_text(text: str, origin: str = "<schema>") -> AttributeSchema:
    """Parse schema text: one `<name> <group>` record per line, # comments."""
    records = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise SchemaError(f"{origin}:{lineno}: expected '<name> <group>', got {raw!r}")
        records.append((parts[0], parts[1]))
    seen: dict[str, str] = {}
    for name, group in records:
        if name in seen and seen[name] != group:
            raise SchemaError(f"attribute {name!r} listed in both groups")
        seen[name] = group
    return AttributeSchema.from_records(records)


def load_schema(path: str | Path) -> AttributeSchema:
    return parse_schema_text(Path(path).read_text(encoding="utf-8"), origin=str(path))


def default_schema() -> AttributeSchema:
    """The shipped 19-attribute vocabulary (13 texture + 6 color)."""
    text = resources.files("a2f.schemas").joinpath("default.txt").read_text("utf-8")
    return parse_schema_text(text, origin="default.txt")


@dataclass(frozen=True)
class AttributeVector:
    """Soft attribute weights aligned to a schema, every entry in [-1, 1]."""

    values: np.ndarray
    schema: AttributeSchema = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1 or len(vals) != len(self.schema):
            raise SchemaError(
                f"vector length {vals.shape} does not match schema of {len(self.schema)}"
            )
        if not np.all(np.isfinite(vals)):
            raise SchemaError("non-finite attribute value")
        if np.any(vals < -1.0) or np.any(vals > 1.0):
            raise SchemaError("attribute value outside [-1, 1]")
        vals.setflags(write=False)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, idx: int) -> float:
        return float(self.values[idx])

    def replace(self, index: int, value: float) -> "AttributeVector":
        if not 0 <= index < len(self):
            raise SchemaError(f"attribute index {index} out of range")
        vals = self.values.copy()
        vals[index] = value
        return AttributeVector(vals, self.schema)

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.schema.names, self.values)}

    @classmethod
    def from_dict(cls, mapping: dict[str, float], schema: AttributeSchema) -> "AttributeVector":
        unknown = set(mapping) - set(schema.names)
        if unknown:
            raise SchemaError(f"unknown attributes: {sorted(unknown)}")
        vals = np.array([mapping.get(n, 0.0) for n in schema.names], dtype=np.float64)
        return cls(vals, schema)

    @classmethod
    def zeros(cls, schema: AttributeSchema) -> "AttributeVector":
        return cls(np.zeros(len(schema)), schema)


def texture_projection(a: AttributeVector, schema: AttributeSchema | None = None) -> np.ndarray:
    """Order-preserving sub-vector over the texture indices."""
    schema = schema or a.schema
    if len(a) != len(schema):
        raise SchemaError("vector does not match schema")
    return a.values[list(schema.texture_indices)].copy()


def sweep_vectors(
    base: AttributeVector,
    index: int,
    weights: Sequence[float] = SWEEP_WEIGHTS,
) -> list[AttributeVector]:
    """One copy of ``base`` per weight, differing only at ``index``."""
    if not 0 <= index < len(base):
        raise SchemaError(f"attribute index {index} out of range")
    for w in weights:
        if not -1.0 <= w <= 1.0:
            raise SchemaError(f"sweep weight {w} outside [-1, 1]")
    return [base.replace(index, w) for w in weights]


def labels_to_soft(labels: np.ndarray) -> np.ndarray:
    """Map {0,1} or {-1,+1} binary labels onto the symmetric {-1,+1} range."""
    labels = np.asarray(labels, dtype=np.float64)
    if np.all((labels == 0) | (labels == 1)):
        return labels * 2.0 - 1.0
    return labels
