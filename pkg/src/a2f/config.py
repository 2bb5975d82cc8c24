"""Run configuration: flat key=value files, A2F_ env overrides, provenance."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

ENV_PREFIX = "A2F_"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Hyperparameters and paths shared by every CLI command.

    Defaults follow the reference training recipe (ADAM 2e-4, batch 128,
    10 warm epochs then multiplicative decay); the small-paired-dataset
    preset switches batch size to 8.
    """

    dataset: str = "celeba"
    data_root: str = ""
    schema_path: str = ""          # empty -> shipped default schema
    out_dir: str = "runs/default"
    seed: int = 0

    # optimizer / schedule
    lr: float = 2e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    batch_size: int = 128
    epochs: int = 20
    warm_epochs: int = 10
    decay_epochs: int = 10

    # loss weights
    lambda_kl_noise: float = 1.0
    lambda_l1: float = 100.0
    lambda_perp: float = 10.0
    prob_eps: float = 1e-7

    # model sizes
    z_dim: int = 512
    noise_dim: int = 100
    attr_embed_dim: int = 256
    stage3_attr_embed_dim: int = 128
    width_scale: float = 1.0

    # data preparation
    sigma_sketch: float = 3.0
    cap: int = 0                   # 0 -> no subsampling
    train_fraction: float = 0.9

    def apply_preset(self, name: str) -> None:
        if name in ("cuhk", "paired-small"):
            self.batch_size = 8
        elif name == "lfwa":
            self.warm_epochs = 20
            self.decay_epochs = 20
        elif name != "celeba":
            raise ConfigError(f"unknown preset: {name}")

    def to_flat(self) -> dict[str, str]:
        return {k: _format(v) for k, v in asdict(self).items()}

    def save(self, path: str | Path) -> None:
        lines = [f"{k}={v}\n" for k, v in self.to_flat().items()]
        Path(path).write_text("".join(lines), encoding="utf-8")

    def provenance(self) -> dict:
        cfg = self.to_flat()
        return {"config": cfg, "config_hash": _hash_flat(cfg)}


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _hash_flat(flat: dict[str, str]) -> str:
    canon = json.dumps(flat, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _coerce(name: str, raw: str, target_type: type):
    try:
        if target_type is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return target_type(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def load_config(path: str | Path | None = None, env: dict | None = None) -> RunConfig:
    """Build a RunConfig from defaults, an optional file, then A2F_ env vars."""
    cfg = RunConfig()
    types = {f.name: type(getattr(cfg, f.name)) for f in fields(cfg)}

    if path is not None:
        for lineno, raw in enumerate(Path(path).read_text("utf-8").splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in types:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            setattr(cfg, key, _coerce(key, value, types[key]))

    env = os.environ if env is None else env
    for key, typ in types.items():
        env_key = ENV_PREFIX + key.upper()
        if env_key in env:
            setattr(cfg, key, _coerce(key, env[env_key], typ))
    return cfg
