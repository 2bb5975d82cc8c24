"""HTTP facade over the synthesis pipeline for the interactive studio UI.

JSON in, base64 PNG out. The session is immutable shared state; every request
derives its own RNG stream from the request seed.
"""

from __future__ import annotations

import base64
import io
import secrets
from typing import Any

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from PIL import Image
from pydantic import BaseModel

from .pipeline import AblationFlags, PipelineSession, SynthesisResult, sweep as run_sweep, synthesize
from .schema import SWEEP_WEIGHTS, AttributeVector, SchemaError

MAX_SEED = 2**31 - 1


class SynthesizeRequest(BaseModel):
    attributes: dict[str, float] | list[float]
    seed: int | None = None
    ablation: dict[str, bool] | None = None


class SweepRequest(BaseModel):
    attribute: str
    base: dict[str, float] | list[float] | None = None
    seed: int | None = None
    weights: list[float] | None = None


def _png_b64(img: np.ndarray) -> str:
    data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(data, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _parse_attributes(raw: dict[str, float] | list[float] | None, session: PipelineSession) -> AttributeVector:
    schema = session.schema
    if raw is None:
        return AttributeVector.zeros(schema)
    if isinstance(raw, dict):
        unknown = set(raw) - set(schema.names)
        if unknown:
            raise HTTPException(400, f"unknown attributes: {sorted(unknown)}")
        bad = {k: v for k, v in raw.items() if not -1.0 <= v <= 1.0}
        if bad:
            raise HTTPException(400, f"attribute values outside [-1, 1]: {bad}")
        return AttributeVector.from_dict(raw, schema)
    if len(raw) != len(schema):
        raise HTTPException(422, f"expected {len(schema)} values, got {len(raw)}")
    try:
        return AttributeVector(np.asarray(raw, dtype=np.float64), schema)
    except SchemaError as exc:
        raise HTTPException(400, str(exc)) from exc


def _parse_flags(raw: dict[str, bool] | None, session: PipelineSession) -> AblationFlags | None:
    if raw is None:
        return None
    known = {"skip_stage2", "no_attr_stage2", "no_attr_stage3"}
    unknown = set(raw) - known
    if unknown:
        raise HTTPException(400, f"unknown ablation flags: {sorted(unknown)}")
    flags = AblationFlags(**{**session.flags.as_dict(), **raw})
    if not flags.skip_stage2 and session.stage2 is None:
        raise HTTPException(400, "session has no stage 2 model; skip_stage2 must stay on")
    return flags


def _result_payload(result: SynthesisResult) -> dict[str, Any]:
    return {
        "seed": result.seed,
        "images": {
            "stage1": _png_b64(result.coarse_sketch),
            "stage2": _png_b64(result.enhanced_sketch),
            "stage3": _png_b64(result.face),
        },
        "meta": {**result.meta, "attributes": result.attributes.as_dict()},
    }


def create_app(session: PipelineSession | None = None, cors_origins: list[str] | None = None) -> FastAPI:
    app = FastAPI(title="attribute-to-face synthesis service")
    app.state.session = session
    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins or ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def ready() -> PipelineSession:
        if app.state.session is None:
            raise HTTPException(503, "model session not loaded")
        return app.state.session

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/schema")
    def get_schema():
        session = ready()
        schema = session.schema
        return {
            "names": list(schema.names),
            "groups": {n: schema.group_of(n) for n in schema.names},
            "defaults": {n: 0.0 for n in schema.names},
            "texture": list(schema.texture_names),
            "color": list(schema.color_names),
            "sweep_weights": list(SWEEP_WEIGHTS),
        }

    @app.post("/synthesize")
    def post_synthesize(req: SynthesizeRequest):
        session = ready()
        vec = _parse_attributes(req.attributes, session)
        flags = _parse_flags(req.ablation, session)
        seed = req.seed if req.seed is not None else secrets.randbelow(MAX_SEED)
        result = synthesize(vec, seed, session, flags)
        return _result_payload(result)

    @app.post("/sweep")
    def post_sweep(req: SweepRequest):
        session = ready()
        if req.attribute not in session.schema.names:
            raise HTTPException(400, f"unknown attribute: {req.attribute}")
        base = _parse_attributes(req.base, session)
        weights = tuple(req.weights) if req.weights is not None else SWEEP_WEIGHTS
        for w in weights:
            if not -1.0 <= w <= 1.0:
                raise HTTPException(400, f"sweep weight {w} outside [-1, 1]")
        seed = req.seed if req.seed is not None else secrets.randbelow(MAX_SEED)
        index = session.schema.index_of(req.attribute)
        results = run_sweep(base, index, seed, session, weights=weights)
        return {
            "seed": seed,
            "attribute": req.attribute,
            "weights": list(weights),
            "images": [_png_b64(r.face) for r in results],
        }

    return app
