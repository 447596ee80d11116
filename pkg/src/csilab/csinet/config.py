from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

DEFAULT_WINDOWS = tuple(range(5, 21))


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 64
    heads: int = 4
    attn_layers: int = 2
    dropout: float = 0.1
    windows: tuple = DEFAULT_WINDOWS
    temperature: float = 0.07
    loss_l2: float = 0.0
    fusion_uses_quality: bool = False
    shared_kv_projection: bool = True
    share_scales: bool = False
    film: bool = True
    fusion: bool = True
    fusion_hidden: int = 32
    mode: str = "spectral"
    taper: str = "rectangular"
    channel: str = "axes"
    n_negatives: int = 5
    logit_clip: float = 30.0
    seed: int = 0

    def __post_init__(self):
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        object.__setattr__(self, "windows", tuple(int(w) for w in self.windows))
        if not self.windows:
            raise ValueError("at least one window size is required")
        if self.mode not in ("spectral", "raw"):
            raise ValueError(f"unknown feature mode {self.mode!r}")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    def feature_dim(self, w: int, modality: str = "imu") -> int:
        if self.mode == "spectral":
            return w // 2 + 7
        axes = 1 if self.channel == "magnitude" else (3 if modality == "imu" else 2)
        return axes * w

    def replace(self, **kw) -> "ModelConfig":
        d = asdict(self)
        d.update(kw)
        return ModelConfig(**d)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 4
    lr: float = 1e-4
    weight_decay: float = 1e-4
    t_max: int = 25
    eta_min_ratio: float = 0.01
    patience: int = 3
    seed: int = 0
    train_tiers: tuple = ("Clean",)
    max_steps_per_epoch: int | None = None

    def replace(self, **kw) -> "TrainConfig":
        d = asdict(self)
        d.update(kw)
        return TrainConfig(**d)


def _from_dict(cls, d: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    d = dict(d)
    for key in ("windows", "train_tiers"):
        if key in d:
            d[key] = tuple(d[key])
    return cls(**d)


def model_config_from_dict(d: dict) -> ModelConfig:
    return _from_dict(ModelConfig, d)


def train_config_from_dict(d: dict) -> TrainConfig:
    return _from_dict(TrainConfig, d)


def config_digest(*configs) -> str:
    payload = json.dumps([asdict(c) if hasattr(c, "__dataclass_fields__") else c for c in configs],
                         sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
