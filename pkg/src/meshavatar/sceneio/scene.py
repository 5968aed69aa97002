"""In-memory scene: body model plus per-frame observations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..geometry.body import BodyModel, FramePose
from ..geometry.camera import Camera


@dataclass
class FrameObservation:
    """One frame: masked RGB image, binary mask, named 2D keypoints with
    confidences, camera intrinsics and the pose initialization."""

    image: torch.Tensor  # (H,W,3) float64 in [0,1], zero outside mask
    mask: torch.Tensor  # (H,W) float64 binary
    keypoints: dict[str, tuple[np.ndarray, float]]
    camera: Camera
    init_pose: FramePose
    name: str = ""


@dataclass
class Scene:
    body: BodyModel
    frames: list[FrameObservation]
    body_path: str = ""
    body_hash: str = ""
    manifest_dir: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def num_frames(self) -> int:
        return len(self.frames)
