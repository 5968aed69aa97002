"""Fit configuration with JSON round trip."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..errors import ConfigurationError, DataError
from ..losses import LossWeights
from ..raster.config import SoftRasterConfig
from ..texfield import HashGridConfig

ITERS_PER_FRAME = 150


@dataclass
class FitConfig:
    stage1_iters: int | None = None  # None -> 150 * n_frames
    stage2_iters: int | None = None
    batch_size: int = 1
    lr: float = 1e-3
    lr_face_colors: float = 1e-2
    loss_weights: LossWeights = field(default_factory=LossWeights)
    soft: SoftRasterConfig = field(default_factory=SoftRasterConfig)
    hash_grid: HashGridConfig = field(default_factory=HashGridConfig)
    mlp_hidden: int = 64
    seed: int = 0
    log_every: int = 1
    checkpoint_every: int = 0  # 0 -> final checkpoint only
    # groups held fixed for the whole run, e.g. frozen camera extrinsics
    # when the rig is calibrated: ("extrinsic_rot", "extrinsic_trans")
    freeze_groups: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("stage1_iters", "stage2_iters"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")

    def iters(self, stage: int, n_frames: int) -> int:
        v = self.stage1_iters if stage == 1 else self.stage2_iters
        return ITERS_PER_FRAME * n_frames if v is None else v

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        d = dict(d)
        if "loss_weights" in d:
            d["loss_weights"] = LossWeights(**d["loss_weights"])
        if "soft" in d:
            soft = dict(d["soft"])
            if "background_color" in soft:
                soft["background_color"] = tuple(soft["background_color"])
            d["soft"] = SoftRasterConfig(**soft)
        if "hash_grid" in d:
            d["hash_grid"] = HashGridConfig(**d["hash_grid"])
        if "freeze_groups" in d:
            d["freeze_groups"] = tuple(d["freeze_groups"])
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "FitConfig":
        try:
            with open(path) as f:
                raw = json.load(f)
        except OSError as e:
            raise DataError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise DataError(f"malformed config {path}: {e}") from e
        try:
            return cls.from_dict(raw)
        except TypeError as e:
            raise DataError(f"unknown config field in {path}: {e}") from e

    def to_json(self, path: str | Path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
