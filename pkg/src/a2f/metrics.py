"""Quantitative evaluation: Inception Score, attribute-distance, report tables.

The attribute predictor is a small in-repo multi-label CNN trained on the
same split (not the external predictor the literature uses), and the default
class-posterior network is seed-pinned random, so absolute numbers are only
comparable within one configuration. Reports carry that provenance.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .training import TrainSpec, check_finite, iter_batches, make_optimizer

logger = logging.getLogger(__name__)

ROLE_PREDICTOR = "PRED"
POSTERIOR_TOL = 1e-6


class MetricError(ValueError):
    pass


def validate_posteriors(posteriors: np.ndarray) -> np.ndarray:
    p = np.asarray(posteriors, dtype=np.float64)
    if p.ndim != 2:
        raise MetricError("posteriors must be a (n_images, n_classes) array")
    if np.any(p < 0):
        raise MetricError("negative class probability")
    if np.any(np.abs(p.sum(axis=1) - 1.0) > POSTERIOR_TOL):
        raise MetricError("class posteriors must sum to 1")
    return p


def inception_score(posteriors: np.ndarray, splits: int = 10) -> tuple[float, float]:
    """Per split: exp(mean_x KL(p(y|x) || p(y))), p(y) the split marginal.
    Returns (mean, std) over the splits."""
    p = validate_posteriors(posteriors)
    if len(p) < splits:
        raise MetricError(f"need at least {splits} images for {splits} splits")
    scores = []
    for chunk in np.array_split(p, splits):
        marginal = np.broadcast_to(chunk.mean(axis=0, keepdims=True), chunk.shape)
        # 0 * log(0/q) = 0; mask zero entries before the log
        ratio = np.zeros_like(chunk)
        nz = chunk > 0
        ratio[nz] = np.log(chunk[nz]) - np.log(marginal[nz])
        kl = (chunk * ratio).sum(axis=1).mean()
        scores.append(np.exp(kl))
    return float(np.mean(scores)), float(np.std(scores))


def attribute_l2(ref: np.ndarray, synth: np.ndarray) -> float:
    """Euclidean norm of the difference between two attribute-score vectors."""
    ref = np.asarray(ref, dtype=np.float64)
    synth = np.asarray(synth, dtype=np.float64)
    if ref.shape != synth.shape:
        raise MetricError(f"length mismatch: {ref.shape} vs {synth.shape}")
    return float(np.linalg.norm(ref - synth))


# ---------------------------------------------------------------------------
# attribute predictor (multi-label CNN)
# ---------------------------------------------------------------------------

@dataclass
class PredictorConfig:
    n_attributes: int = 19
    base_channels: int = 16


class AttributePredictor(nn.Module):
    """Per-attribute scores in [0, 1] from a [-1, 1] face image."""

    def __init__(self, cfg: PredictorConfig | None = None):
        super().__init__()
        self.cfg = cfg or PredictorConfig()
        c = self.cfg.base_channels
        self.features = nn.Sequential(
            nn.Conv2d(3, c, 4, stride=2, padding=1), nn.BatchNorm2d(c), nn.ReLU(inplace=True),
            nn.Conv2d(c, 2 * c, 4, stride=2, padding=1), nn.BatchNorm2d(2 * c), nn.ReLU(inplace=True),
            nn.Conv2d(2 * c, 4 * c, 4, stride=2, padding=1), nn.BatchNorm2d(4 * c), nn.ReLU(inplace=True),
            nn.AdaptiveAvgPool2d(1),
        )
        self.head = nn.Linear(4 * c, self.cfg.n_attributes)

    def forward(self, faces: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.head(self.features(faces).flatten(1)))

    @torch.no_grad()
    def predict(self, faces: torch.Tensor, batch_size: int = 64) -> np.ndarray:
        self.eval()
        out = [self(faces[i:i + batch_size]) for i in range(0, len(faces), batch_size)]
        return torch.cat(out).numpy()

    @classmethod
    def from_checkpoint(cls, payload: dict) -> "AttributePredictor":
        model = cls(PredictorConfig(**payload["config"]))
        model.load_state_dict(payload["state_dict"])
        model.eval()
        return model


def train_attribute_predictor(
    faces: torch.Tensor,
    soft_labels: torch.Tensor,
    cfg: PredictorConfig,
    spec: TrainSpec,
) -> tuple[AttributePredictor, list[dict]]:
    """Mean binary cross-entropy on {0,1} targets derived from the {-1,+1}
    labels; attribute columns with a single class are skipped with a warning."""
    torch.manual_seed(spec.seed)
    targets = (soft_labels > 0).float()
    active = (targets.amin(dim=0) != targets.amax(dim=0))
    if not bool(active.any()):
        raise MetricError("every attribute column is single-class")
    for i in torch.nonzero(~active).flatten().tolist():
        logger.warning("attribute column %d is single-class; skipped in training", i)

    model = AttributePredictor(cfg)
    optimizer = make_optimizer(model.parameters(), spec)
    bce = nn.BCELoss()
    gen = torch.Generator().manual_seed(spec.seed)
    log = []
    for epoch in range(spec.epochs):
        model.train()
        total, n_batches = 0.0, 0
        for idx in iter_batches(len(faces), spec.batch_size, gen):
            if len(idx) == 1:
                continue
            optimizer.zero_grad()
            scores = model(faces[idx])
            loss = bce(scores[:, active], targets[idx][:, active])
            check_finite(loss, f"predictor epoch {epoch}")
            loss.backward()
            optimizer.step()
            total += loss.item()
            n_batches += 1
        log.append({"epoch": epoch, "bce": total / max(n_batches, 1)})
    model.eval()
    return model, log


# ---------------------------------------------------------------------------
# class-posterior source for the Inception Score
# ---------------------------------------------------------------------------

class PosteriorClassifier(nn.Module):
    """Softmax CNN used as the injected posterior source. Defaults to a
    seed-pinned random initialization so evaluation runs offline; scores from
    it measure diversity under a fixed random projection, nothing more."""

    def __init__(self, n_classes: int = 10, base_channels: int = 16, seed: int = 0):
        super().__init__()
        c = base_channels
        self.n_classes = n_classes
        self.features = nn.Sequential(
            nn.Conv2d(3, c, 4, stride=2, padding=1), nn.ReLU(inplace=True),
            nn.Conv2d(c, 2 * c, 4, stride=2, padding=1), nn.ReLU(inplace=True),
            nn.AdaptiveAvgPool2d(1),
        )
        self.head = nn.Linear(2 * c, n_classes)
        gen = torch.Generator().manual_seed(seed)
        for p in self.parameters():
            with torch.no_grad():
                p.copy_(torch.randn(p.shape, generator=gen) * 0.25)
        self.origin = f"random(seed={seed})"

    @torch.no_grad()
    def posteriors(self, images: torch.Tensor, batch_size: int = 64) -> np.ndarray:
        self.eval()
        out = []
        for i in range(0, len(images), batch_size):
            logits = self.head(self.features(images[i:i + batch_size]).flatten(1))
            out.append(torch.softmax(logits, dim=1))
        return torch.cat(out).double().numpy()


# ---------------------------------------------------------------------------
# run evaluation and report rendering
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    """Table of metric x dataset rows with one (mean, std) cell per method."""

    methods: list[str]
    rows: list[dict] = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def add(self, metric: str, dataset: str, method: str, mean: float, std: float) -> None:
        for row in self.rows:
            if row["metric"] == metric and row["dataset"] == dataset:
                row["values"][method] = (mean, std)
                return
        self.rows.append({"metric": metric, "dataset": dataset,
                          "values": {method: (mean, std)}})

    def render_text(self) -> str:
        headers = ["Metric", "Dataset"] + self.methods
        lines = []
        cells = [headers]
        for row in self.rows:
            line = [row["metric"], row["dataset"]]
            for m in self.methods:
                val = row["values"].get(m)
                line.append("-" if val is None else f"{val[0]:.3f} +/- {val[1]:.3f}")
            cells.append(line)
        widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
        for i, line in enumerate(cells):
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip())
            if i == 0:
                lines.append("  ".join("-" * w for w in widths))
        if self.notes:
            lines.append("")
            for k, v in sorted(self.notes.items()):
                lines.append(f"note: {k} = {v}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(
            {"methods": self.methods, "rows": self.rows, "notes": self.notes}, indent=2
        )

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        obj = json.loads(text)
        rows = [
            {"metric": r["metric"], "dataset": r["dataset"],
             "values": {m: tuple(v) for m, v in r["values"].items()}}
            for r in obj["rows"]
        ]
        return cls(methods=obj["methods"], rows=rows, notes=obj.get("notes", {}))

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.txt").write_text(self.render_text(), encoding="utf-8")
        (directory / "report.json").write_text(self.to_json(), encoding="utf-8")


def evaluate_run(
    synth_images: torch.Tensor,
    ref_images: torch.Tensor,
    predictor: AttributePredictor,
    classifier: PosteriorClassifier,
    splits: int = 10,
    dataset: str = "dataset",
    method: str = "ours",
) -> EvalReport:
    """Inception Score over the synthesized set plus per-pair attribute
    distance against the references, both as mean +/- std."""
    if len(synth_images) == 0 or len(ref_images) == 0:
        raise MetricError("empty image set")
    if len(synth_images) != len(ref_images):
        raise MetricError("synth/ref sets must be matched 1:1")

    is_mean, is_std = inception_score(classifier.posteriors(synth_images), splits=splits)
    ref_scores = predictor.predict(ref_images)
    synth_scores = predictor.predict(synth_images)
    dists = [attribute_l2(r, s) for r, s in zip(ref_scores, synth_scores)]

    report = EvalReport(methods=[method], notes={
        "attribute_predictor": "in-repo multi-label CNN",
        "posterior_classifier": classifier.origin,
    })
    report.add("Inception Score", dataset, method, is_mean, is_std)
    report.add("Attribute L2", dataset, method, float(np.mean(dists)), float(np.std(dists)))
    return report
