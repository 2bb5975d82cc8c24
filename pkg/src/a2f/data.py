"""Dataset ingestion: face crops, synthetic pencil sketches, manifests, augmentation.

Images are HWC float arrays in [0, 1] on the library side and 8-bit PNG on
disk. Sketches are single-channel results replicated to 3 channels so every
downstream network sees the same layout.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .schema import AttributeSchema, AttributeVector, labels_to_soft

logger = logging.getLogger(__name__)

IMAGE_SIZE = 64
PREP_VERSION = "1"

Box = tuple[int, int, int, int]  # x0, y0, x1, y1
FaceDetector = Callable[[np.ndarray], Sequence[Box]]


class DataError(ValueError):
    pass


class NoFaceError(DataError):
    pass


# ---------------------------------------------------------------------------
# image I/O
# ---------------------------------------------------------------------------

def load_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return arr


def save_image(path: str | Path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(data, mode="RGB").save(path)


# ---------------------------------------------------------------------------
# face detection / cropping
# ---------------------------------------------------------------------------

def identity_detector(image: np.ndarray) -> list[Box]:
    """Detector stub that reports the whole frame as one face."""
    h, w = image.shape[:2]
    return [(0, 0, w, h)]


class CenterCropDetector:
    """Offline stand-in for a real detector: largest centered square box."""

    def __init__(self, margin: float = 0.0):
        self.margin = margin

    def __call__(self, image: np.ndarray) -> list[Box]:
        h, w = image.shape[:2]
        side = int(min(h, w) * (1.0 - self.margin))
        if side <= 0:
            return []
        x0 = (w - side) // 2
        y0 = (h - side) // 2
        return [(x0, y0, x0 + side, y0 + side)]


def _resize_bilinear(img: np.ndarray, size: int) -> np.ndarray:
    channels = [
        np.asarray(
            Image.fromarray(img[:, :, c].astype(np.float32), mode="F").resize(
                (size, size), Image.BILINEAR
            )
        )
        for c in range(img.shape[2])
    ]
    return np.stack(channels, axis=2).astype(img.dtype)


def crop_face(image: np.ndarray, detector: FaceDetector) -> np.ndarray:
    """Largest detected face, cropped and rescaled to 64x64, values in [0,1]."""
    if image.ndim == 2:
        image = np.repeat(image[:, :, None], 3, axis=2)
    boxes = list(detector(image))
    if not boxes:
        raise NoFaceError("no face detected")
    x0, y0, x1, y1 = max(boxes, key=lambda b: (b[2] - b[0]) * (b[3] - b[1]))
    x0, y0 = max(0, x0), max(0, y0)
    x1, y1 = min(image.shape[1], x1), min(image.shape[0], y1)
    if x1 <= x0 or y1 <= y0:
        raise NoFaceError("degenerate face box")
    crop = image[y0:y1, x0:x1, :]
    if crop.shape[0] == IMAGE_SIZE and crop.shape[1] == IMAGE_SIZE:
        return crop.copy()
    return np.clip(_resize_bilinear(crop, IMAGE_SIZE), 0.0, 1.0)


# ---------------------------------------------------------------------------
# pencil sketch synthesis
# ---------------------------------------------------------------------------

def dodge_blend(gray: np.ndarray, blurred_inverted: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Color-dodge blend: min(1, gray / (1 - blurred_inverted)), 1 where the
    denominator vanishes."""
    gray = np.asarray(gray, dtype=np.float64)
    denom = 1.0 - np.asarray(blurred_inverted, dtype=np.float64)
    out = np.ones_like(gray)
    safe = denom > eps
    np.divide(gray, denom, out=out, where=safe)
    return np.minimum(out, 1.0)


def pencil_sketch(face: np.ndarray, blur_sigma: float = 3.0) -> np.ndarray:
    """Grayscale -> invert -> Gaussian blur -> dodge; replicated to 3 channels."""
    face = np.asarray(face, dtype=np.float64)
    if not np.all(np.isfinite(face)):
        raise DataError("non-finite pixels in face image")
    gray = face[:, :, 0] * 0.299 + face[:, :, 1] * 0.587 + face[:, :, 2] * 0.114
    blurred_inverted = ndimage.gaussian_filter(1.0 - gray, sigma=blur_sigma, mode="reflect")
    sketch = dodge_blend(gray, blurred_inverted)
    return np.repeat(sketch[:, :, None], 3, axis=2)


# ---------------------------------------------------------------------------
# records and manifests
# ---------------------------------------------------------------------------

@dataclass
class SampleRecord:
    """One training sample with images in memory."""

    id: str
    face: np.ndarray
    sketch: np.ndarray
    attributes: AttributeVector
    split: str = "train"


@dataclass
class ManifestRecord:
    id: str
    face_path: str
    sketch_path: str
    attributes: np.ndarray
    split: str


@dataclass
class Manifest:
    schema: AttributeSchema
    records: list[ManifestRecord]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        seen: dict[str, str] = {}
        for rec in self.records:
            if len(rec.attributes) != len(self.schema):
                raise DataError(f"record {rec.id}: attribute length mismatch")
            if rec.id in seen and seen[rec.id] != rec.split:
                raise DataError(f"id {rec.id} appears in both splits")
            seen[rec.id] = rec.split

    def split_records(self, split: str) -> list[ManifestRecord]:
        return [r for r in self.records if r.split == split]

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.records:
            out[r.split] = out.get(r.split, 0) + 1
        return out


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        header = {"schema": manifest.schema.to_records(), "provenance": manifest.provenance}
        fh.write(json.dumps(header) + "\n")
        for r in manifest.records:
            rec = {
                "id": r.id,
                "face_path": r.face_path,
                "sketch_path": r.sketch_path,
                "attributes": [float(v) for v in r.attributes],
                "split": r.split,
            }
            fh.write(json.dumps(rec) + "\n")


def load_manifest(path: str | Path) -> Manifest:
    lines = Path(path).read_text("utf-8").splitlines()
    if not lines:
        raise DataError(f"empty manifest: {path}")
    header = json.loads(lines[0])
    schema = AttributeSchema.from_records([tuple(r) for r in header["schema"]])
    records = []
    for line in lines[1:]:
        if not line.strip():
            continue
        obj = json.loads(line)
        records.append(
            ManifestRecord(
                id=obj["id"],
                face_path=obj["face_path"],
                sketch_path=obj["sketch_path"],
                attributes=np.asarray(obj["attributes"], dtype=np.float64),
                split=obj["split"],
            )
        )
    return Manifest(schema, records, header.get("provenance", {}))


def load_record(rec: ManifestRecord, schema: AttributeSchema) -> SampleRecord:
    face = load_image(rec.face_path)
    sketch = load_image(rec.sketch_path) if rec.sketch_path else face
    return SampleRecord(
        id=rec.id,
        face=face,
        sketch=sketch,
        attributes=AttributeVector(rec.attributes, schema),
        split=rec.split,
    )


# ---------------------------------------------------------------------------
# annotation scanning and manifest construction
# ---------------------------------------------------------------------------

ANNOTATION_NAMES = ("attributes.txt", "list_attr_celeba.txt")
PARTITION_NAMES = ("partition.txt", "list_eval_partition.txt")
IMAGE_DIRS = ("images", "img_align_celeba", ".")


@dataclass
class SplitSpec:
    """How to assign and subsample splits; cap=0 keeps everything."""

    cap: int = 0
    seed: int = 0
    train_fraction: float = 0.9


def _find(root: Path, names: Sequence[str]) -> Path | None:
    for name in names:
        p = root / name
        if p.exists():
            return p
    return None


def _read_annotations(path: Path, schema: AttributeSchema) -> dict[str, np.ndarray]:
    lines = [ln for ln in path.read_text("utf-8").splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"empty annotation file: {path}")
    start = 1 if lines[0].strip().isdigit() else 0
    header = lines[start].split()
    missing = [n for n in schema.names if n not in header]
    if missing:
        raise DataError(f"annotation file lacks schema attributes: {missing}")
    cols = [header.index(n) for n in schema.names]
    table: dict[str, np.ndarray] = {}
    for raw in lines[start + 1:]:
        parts = raw.split()
        if len(parts) != len(header) + 1:
            raise DataError(f"malformed annotation row: {raw[:60]!r}")
        values = np.array([float(parts[1 + c]) for c in cols])
        table[parts[0]] = labels_to_soft(values)
    return table


def _hash_key(seed: int, sample_id: str) -> str:
    return hashlib.sha256(f"{seed}:{sample_id}".encode("utf-8")).hexdigest()


def build_manifest(
    dataset_root: str | Path,
    schema: AttributeSchema,
    split_spec: SplitSpec | None = None,
    dataset_name: str = "dataset",
) -> Manifest:
    """Scan a raw dataset (images + annotation file, optional partition file)
    into a manifest of source records. Subsampling and the hash split are
    deterministic in (seed, id), independent of filesystem order."""
    spec = split_spec or SplitSpec()
    root = Path(dataset_root)
    ann_path = _find(root, ANNOTATION_NAMES)
    if ann_path is None:
        raise DataError(f"no annotation file under {root}")
    annotations = _read_annotations(ann_path, schema)

    image_dir = next((root / d for d in IMAGE_DIRS if (root / d).is_dir()), None)
    if image_dir is None:
        raise DataError(f"no image directory under {root}")
    images = {
        p.name: p
        for p in sorted(image_dir.iterdir())
        if p.suffix.lower() in (".png", ".jpg", ".jpeg")
    }
    if set(images) != set(annotations):
        raise DataError(
            f"annotation/image mismatch: {len(annotations)} annotation rows, "
            f"{len(images)} images"
        )

    partition: dict[str, str] = {}
    part_path = _find(root, PARTITION_NAMES)
    if part_path is not None:
        for raw in part_path.read_text("utf-8").splitlines():
            if raw.strip():
                name, code = raw.split()
                partition[name] = "test" if code == "2" else "train"

    records = []
    for name in sorted(images):
        if partition:
            split = partition.get(name)
            if split is None:
                raise DataError(f"image {name} missing from partition file")
        else:
            frac = int(_hash_key(spec.seed, name)[:8], 16) / 0xFFFFFFFF
            split = "train" if frac < spec.train_fraction else "test"
        records.append(
            ManifestRecord(
                id=Path(name).stem,
                face_path=str(images[name]),
                sketch_path="",
                attributes=annotations[name],
                split=split,
            )
        )

    if spec.cap > 0:
        kept = []
        for split in ("train", "test"):
            split_recs = [r for r in records if r.split == split]
            split_recs.sort(key=lambda r: _hash_key(spec.seed, r.id))
            kept.extend(split_recs[: spec.cap])
        records = sorted(kept, key=lambda r: r.id)

    manifest = Manifest(
        schema,
        records,
        provenance={"dataset": dataset_name, "preprocessing_version": PREP_VERSION},
    )
    manifest.provenance["split_counts"] = manifest.counts()
    logger.info("manifest %s: %s", dataset_name, manifest.counts())
    return manifest


def prepare_dataset(
    manifest: Manifest,
    out_dir: str | Path,
    detector: FaceDetector | None = None,
    blur_sigma: float = 3.0,
) -> Manifest:
    """Crop faces, synthesize sketches, write PNGs; returns the processed manifest."""
    out = Path(out_dir)
    detector = detector or CenterCropDetector()
    processed = []
    skipped = 0
    for rec in manifest.records:
        try:
            face = crop_face(load_image(rec.face_path), detector)
        except NoFaceError:
            skipped += 1
            logger.warning("no face detected in %s; record skipped", rec.face_path)
            continue
        sketch = pencil_sketch(face, blur_sigma)
        face_path = out / "faces" / f"{rec.id}.png"
        sketch_path = out / "sketches" / f"{rec.id}.png"
        save_image(face_path, face)
        save_image(sketch_path, sketch)
        processed.append(
            ManifestRecord(rec.id, str(face_path), str(sketch_path), rec.attributes, rec.split)
        )
    provenance = dict(manifest.provenance)
    provenance["blur_sigma"] = blur_sigma
    provenance["skipped_no_face"] = skipped
    result = Manifest(manifest.schema, processed, provenance)
    result.provenance["split_counts"] = result.counts()
    return result


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------

AugmentOp = str | tuple[str, float]
MAX_ROTATION_DEG = 10.0


def _apply_op(img: np.ndarray, op: AugmentOp) -> np.ndarray:
    if op == "identity":
        return img.copy()
    if op == "hflip":
        return img[:, ::-1, :].copy()
    if isinstance(op, tuple) and op[0] == "rotate":
        theta = float(op[1])
        if abs(theta) > MAX_ROTATION_DEG:
            raise DataError(f"rotation {theta} exceeds +/-{MAX_ROTATION_DEG} degrees")
        if theta == 0.0:
            return img.copy()
        rotated = ndimage.rotate(img, theta, axes=(1, 0), reshape=False, order=1, mode="nearest")
        return np.clip(rotated, 0.0, 1.0)
    raise DataError(f"unknown augmentation op: {op!r}")


def _op_tag(op: AugmentOp) -> str:
    if op == "identity":
        return ""
    if op == "hflip":
        return "+hflip"
    return f"+rot{op[1]:+g}"


def augment(record: SampleRecord, ops: Sequence[AugmentOp]) -> list[SampleRecord]:
    """Apply each op to face and sketch identically; attributes are untouched."""
    out = []
    for op in ops:
        out.append(
            SampleRecord(
                id=record.id + _op_tag(op),
                face=_apply_op(record.face, op),
                sketch=_apply_op(record.sketch, op),
                attributes=record.attributes,
                split=record.split,
            )
        )
    return out


CUHK_AUGMENT_OPS: tuple[AugmentOp, ...] = ("identity", "hflip", ("rotate", 5.0))
