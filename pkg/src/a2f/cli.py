"""Command-line entry point: prepare-data, train, synthesize, sweep, evaluate,
ablate, serve.

Exit codes: 0 success, 2 usage error, 3 data/checkpoint error, 4 training
divergence. Every command that writes to an output directory records the
effective config and its hash there.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import data as data_mod
from .config import ConfigError, RunConfig, load_config
from .disc import PatchDiscriminatorConfig
from .losses import Conv12FeatureExtractor, LossWeights
from .metrics import (
    AttributePredictor,
    PosteriorClassifier,
    PredictorConfig,
    ROLE_PREDICTOR,
    evaluate_run,
    train_attribute_predictor,
)
from .pipeline import AblationFlags, SessionError, load_session, sweep as run_sweep, synthesize, write_result
from .schema import AttributeVector, SchemaError, default_schema, load_schema
from .stage1 import ROLE as S1_ROLE, Stage1Config, Stage1Model, train_stage1
from .stage2 import AUDeNet, AUDeNetConfig, make_enhancement_pairs, train_stage2
from .stage3 import Stage3GeneratorConfig, make_face_pairs, train_stage3
from .training import (
    CheckpointError,
    TrainingDivergence,
    TrainSpec,
    load_checkpoint,
    load_split_tensors,
    save_checkpoint,
)

logger = logging.getLogger("a2f")

USAGE_ERROR = 2
DATA_ERROR = 3
DIVERGENCE_ERROR = 4


def _schema_from(cfg: RunConfig):
    return load_schema(cfg.schema_path) if cfg.schema_path else default_schema()


def _train_spec(cfg: RunConfig) -> TrainSpec:
    return TrainSpec(
        lr=cfg.lr, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2,
        batch_size=cfg.batch_size, epochs=cfg.epochs,
        warm_epochs=cfg.warm_epochs, decay_epochs=cfg.decay_epochs, seed=cfg.seed,
    )


def _loss_weights(cfg: RunConfig) -> LossWeights:
    return LossWeights(cfg.lambda_kl_noise, cfg.lambda_l1, cfg.lambda_perp)


def _scaled(base: int, scale: float) -> int:
    return max(1, round(base * scale))


def _write_provenance(out_dir: Path, cfg: RunConfig, command: str, argv: list[str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    record = cfg.provenance()
    record.update(command=command, argv=argv)
    (out_dir / "provenance.json").write_text(json.dumps(record, indent=2), encoding="utf-8")


def _load_run_config(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "preset", None):
        cfg.apply_preset(args.preset)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "epochs", None) is not None:
        cfg.epochs = args.epochs
    return cfg


def _parse_attr_spec(spec: str | None, schema) -> AttributeVector:
    vec = AttributeVector.zeros(schema)
    if not spec:
        return vec
    values = vec.values.copy()
    for part in spec.split(","):
        if "=" not in part:
            raise SchemaError(f"expected Name=value, got {part!r}")
        name, _, raw = part.partition("=")
        values[schema.index_of(name.strip())] = float(raw)
    return AttributeVector(values, schema)


# ---------------------------------------------------------------------------
# subcommand implementations
# ---------------------------------------------------------------------------

def cmd_prepare_data(args, argv) -> int:
    cfg = _load_run_config(args)
    if args.root:
        cfg.data_root = args.root
    if args.cap is not None:
        cfg.cap = args.cap
    if args.sigma is not None:
        cfg.sigma_sketch = args.sigma
    if args.dataset:
        cfg.dataset = args.dataset
    schema = _schema_from(cfg)
    out_dir = Path(cfg.out_dir)

    detector = data_mod.identity_detector if args.detector == "identity" else data_mod.CenterCropDetector()
    split_spec = data_mod.SplitSpec(cap=cfg.cap, seed=cfg.seed, train_fraction=cfg.train_fraction)
    manifest = data_mod.build_manifest(cfg.data_root, schema, split_spec, dataset_name=cfg.dataset)
    manifest = data_mod.prepare_dataset(manifest, out_dir, detector, cfg.sigma_sketch)
    data_mod.save_manifest(manifest, out_dir / "manifest.jsonl")
    schema.save(out_dir / "schema.txt")
    _write_provenance(out_dir, cfg, "prepare-data", argv)
    print(f"manifest written: {out_dir / 'manifest.jsonl'} counts={manifest.counts()}")
    return 0


def _texture_tensor(attrs: torch.Tensor, schema) -> torch.Tensor:
    return attrs[:, list(schema.texture_indices)]


def cmd_train(args, argv) -> int:
    cfg = _load_run_config(args)
    schema = _schema_from(cfg)
    out_dir = Path(cfg.out_dir)
    manifest = data_mod.load_manifest(args.manifest)
    if manifest.schema.fingerprint() != schema.fingerprint():
        schema = manifest.schema  # manifest is authoritative for its own data
    faces, sketches, attrs = load_split_tensors(manifest, "train")
    tex = _texture_tensor(attrs, schema)
    spec = _train_spec(cfg)
    weights = _loss_weights(cfg)
    ckpt_dir = out_dir / "checkpoints"
    extractor = Conv12FeatureExtractor(args.extractor_weights)

    if args.stage == "1":
        s1_cfg = Stage1Config(
            n_texture_attributes=tex.shape[1],
            z_dim=cfg.z_dim,
            attr_embed_dim=cfg.attr_embed_dim,
            noise_dim=cfg.noise_dim,
            base_channels=_scaled(64, cfg.width_scale),
        )
        model, log = train_stage1(sketches, tex, s1_cfg, spec, weights, schema, ckpt_dir)
        save_checkpoint(out_dir / "stage1.pt", S1_ROLE, model, s1_cfg, schema)
    elif args.stage == "2":
        if not args.stage1_ckpt:
            raise CheckpointError("stage 2 training needs --stage1-ckpt")
        stage1 = Stage1Model.from_checkpoint(load_checkpoint(args.stage1_ckpt, "S1"))
        gen = torch.Generator().manual_seed(cfg.seed)
        coarse, embeds = make_enhancement_pairs(stage1, sketches, tex, gen)
        g_cfg = AUDeNetConfig(width_scale=cfg.width_scale, attr_embed_dim=stage1.cfg.attr_embed_dim)
        d_cfg = PatchDiscriminatorConfig(base_channels=_scaled(64, cfg.width_scale))
        g2, d2, log = train_stage2(coarse, sketches, embeds, g_cfg, d_cfg, spec, weights,
                                   extractor, schema, ckpt_dir, prob_eps=cfg.prob_eps)
        save_checkpoint(out_dir / "stage2_g.pt", "G2", g2, g_cfg, schema)
        save_checkpoint(out_dir / "stage2_d.pt", "D2", d2, d_cfg, schema)
    elif args.stage == "3":
        if not (args.stage1_ckpt and args.stage2_ckpt):
            raise CheckpointError("stage 3 training needs --stage1-ckpt and --stage2-ckpt")
        stage1 = Stage1Model.from_checkpoint(load_checkpoint(args.stage1_ckpt, "S1"))
        g2 = AUDeNet.from_checkpoint(load_checkpoint(args.stage2_ckpt, "G2"))
        gen = torch.Generator().manual_seed(cfg.seed)
        coarse, embeds = make_enhancement_pairs(stage1, sketches, tex, gen)
        enhanced = make_face_pairs(g2, coarse, embeds)
        g_cfg = Stage3GeneratorConfig(
            n_attributes=attrs.shape[1],
            base_channels=_scaled(64, cfg.width_scale),
            attr_embed_dim=cfg.stage3_attr_embed_dim,
        )
        d_cfg = PatchDiscriminatorConfig(base_channels=_scaled(64, cfg.width_scale))
        g3, d3, log = train_stage3(enhanced, faces, attrs, g_cfg, d_cfg, spec, weights,
                                   extractor, schema, ckpt_dir, prob_eps=cfg.prob_eps)
        save_checkpoint(out_dir / "stage3_g.pt", "G3", g3, g_cfg, schema)
        save_checkpoint(out_dir / "stage3_d.pt", "D3", d3, d_cfg, schema)
    elif args.stage == "predictor":
        p_cfg = PredictorConfig(n_attributes=attrs.shape[1],
                                base_channels=_scaled(16, cfg.width_scale))
        predictor, log = train_attribute_predictor(faces, attrs, p_cfg, spec)
        save_checkpoint(out_dir / "predictor.pt", ROLE_PREDICTOR, predictor, p_cfg, schema)
    else:
        raise ConfigError(f"unknown stage {args.stage!r}")

    (out_dir / "training_log.json").write_text(json.dumps(log, indent=2), encoding="utf-8")
    _write_provenance(out_dir, cfg, f"train-stage{args.stage}", argv)
    print(f"stage {args.stage} trained: {len(log)} epochs, final {log[-1] if log else '{}'}")
    return 0


def _session_from_args(args, flags: AblationFlags):
    if flags.skip_stage2 and args.stage2_ckpt:
        raise UsageError("--skip-stage2 conflicts with --stage2-ckpt")
    return load_session(args.stage1_ckpt, args.stage2_ckpt or None, args.stage3_ckpt, flags)


class UsageError(ValueError):
    pass


def cmd_synthesize(args, argv) -> int:
    cfg = _load_run_config(args)
    flags = AblationFlags(
        skip_stage2=args.skip_stage2,
        no_attr_stage2=args.no_attr_stage2,
        no_attr_stage3=args.no_attr_stage3,
    )
    session = _session_from_args(args, flags)
    vec = _parse_attr_spec(args.attr, session.schema)
    result = synthesize(vec, cfg.seed, session)
    out = write_result(result, Path(cfg.out_dir))
    _write_provenance(Path(cfg.out_dir), cfg, "synthesize", argv)
    print(f"synthesis written under {out}")
    return 0


def cmd_sweep(args, argv) -> int:
    cfg = _load_run_config(args)
    session = _session_from_args(args, AblationFlags())
    schema = session.schema
    base = _parse_attr_spec(args.base, schema)
    index = schema.index_of(args.attr)
    results = run_sweep(base, index, cfg.seed, session)
    out = Path(cfg.out_dir) / str(cfg.seed) / f"sweep_{args.attr}"
    out.mkdir(parents=True, exist_ok=True)
    for i, r in enumerate(results):
        weight = r.attributes[index]
        data_mod.save_image(out / f"w{i}_{weight:+.1f}.png", r.face)
    meta = {"attribute": args.attr, "weights": [r.attributes[index] for r in results],
            "seed": cfg.seed, **results[0].meta}
    (out / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    _write_provenance(Path(cfg.out_dir), cfg, "sweep", argv)
    print(f"sweep written under {out} ({len(results)} images)")
    return 0


def _load_image_dir(directory: Path) -> torch.Tensor:
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")
    if not paths:
        raise data_mod.DataError(f"no PNG images under {directory}")
    stack = np.stack([data_mod.load_image(p) for p in paths])
    from .training import to_model_range

    return to_model_range(stack)


def cmd_evaluate(args, argv) -> int:
    cfg = _load_run_config(args)
    synth = _load_image_dir(Path(args.synth))
    ref = _load_image_dir(Path(args.ref))
    payload = load_checkpoint(args.predictor, ROLE_PREDICTOR)
    predictor = AttributePredictor.from_checkpoint(payload)
    classifier = PosteriorClassifier(n_classes=args.classes, seed=args.classifier_seed)
    report = evaluate_run(synth, ref, predictor, classifier, splits=args.splits,
                          dataset=cfg.dataset, method=args.method)
    out_dir = Path(cfg.out_dir)
    report.save(out_dir)
    _write_provenance(out_dir, cfg, "evaluate", argv)
    print(report.render_text())
    return 0


def cmd_ablate(args, argv) -> int:
    cfg = _load_run_config(args)
    configurations = {
        "baseline": AblationFlags(),
        "no_attr_stage2": AblationFlags(no_attr_stage2=True),
        "skip_stage2": AblationFlags(skip_stage2=True),
        "no_attr_stage3": AblationFlags(no_attr_stage3=True),
    }
    session = load_session(args.stage1_ckpt, args.stage2_ckpt, args.stage3_ckpt)
    vec = _parse_attr_spec(args.attr, session.schema)
    for name, flags in configurations.items():
        result = synthesize(vec, cfg.seed, session, flags)
        write_result(result, Path(cfg.out_dir) / name)
    _write_provenance(Path(cfg.out_dir), cfg, "ablate", argv)
    print(f"ablation grid written under {cfg.out_dir} ({', '.join(configurations)})")
    return 0


def cmd_serve(args, argv) -> int:
    import uvicorn

    from .service import create_app

    flags = AblationFlags(skip_stage2=args.skip_stage2)
    session = _session_from_args(args, flags)
    app = create_app(session, cors_origins=args.cors_origin or None)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")


def _add_session_args(p: argparse.ArgumentParser, with_flags: bool = False) -> None:
    p.add_argument("--stage1-ckpt", required=True)
    p.add_argument("--stage2-ckpt", default=None)
    p.add_argument("--stage3-ckpt", required=True)
    if with_flags:
        p.add_argument("--skip-stage2", action="store_true")
        p.add_argument("--no-attr-stage2", action="store_true")
        p.add_argument("--no-attr-stage3", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="a2f", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-data", help="ingest a raw dataset into crops, sketches, manifest")
    _add_common(p)
    p.add_argument("--dataset", default=None)
    p.add_argument("--root", default=None, help="raw dataset root")
    p.add_argument("--cap", type=int, default=None, help="subsample each split to this many records")
    p.add_argument("--sigma", type=float, default=None, help="sketch blur sigma")
    p.add_argument("--detector", choices=("center", "identity"), default="center")
    p.set_defaults(func=cmd_prepare_data)

    p = sub.add_parser("train", help="train one stage (or the attribute predictor)")
    _add_common(p)
    p.add_argument("--stage", required=True, choices=("1", "2", "3", "predictor"))
    p.add_argument("--manifest", required=True)
    p.add_argument("--stage1-ckpt", default=None)
    p.add_argument("--stage2-ckpt", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--preset", choices=("celeba", "lfwa", "cuhk"), default=None)
    p.add_argument("--extractor-weights", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synthesize", help="attributes + seed -> three stage images")
    _add_common(p)
    _add_session_args(p, with_flags=True)
    p.add_argument("--attr", default="", help="comma-separated Name=value pairs")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("sweep", help="vary one attribute over the six-weight ladder")
    _add_common(p)
    _add_session_args(p)
    p.add_argument("--attr", required=True, help="attribute name to sweep")
    p.add_argument("--base", default="", help="base attribute assignment")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("evaluate", help="Inception Score + attribute distance report")
    _add_common(p)
    p.add_argument("--synth", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--predictor", required=True)
    p.add_argument("--splits", type=int, default=10)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--classifier-seed", type=int, default=0)
    p.add_argument("--method", default="ours")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run the baseline and the three ablation pathways")
    _add_common(p)
    p.add_argument("--stage1-ckpt", required=True)
    p.add_argument("--stage2-ckpt", required=True)
    p.add_argument("--stage3-ckpt", required=True)
    p.add_argument("--attr", default="")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("serve", help="HTTP synthesis service")
    _add_common(p)
    _add_session_args(p, with_flags=False)
    p.add_argument("--skip-stage2", action="store_true")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--cors-origin", action="append", default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except TrainingDivergence as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return DIVERGENCE_ERROR
    except (data_mod.DataError, SchemaError, ConfigError, CheckpointError,
            SessionError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
