"""The full set of optimizable avatar parameters."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from ..errors import ConfigurationError
from ..texfield import TextureField
from .body import BodyModel, FramePose


@dataclass
class AvatarParams:
    """Shape coefficients, free-form offsets, per-frame poses, texture, base colors."""

    beta: torch.Tensor  # (K,)
    offsets: torch.Tensor  # (V,3)
    frame_poses: list[FramePose]
    texture: TextureField
    face_colors: torch.Tensor  # (F,3) in [0,1]

    @classmethod
    def initial(
        cls,
        model: BodyModel,
        init_poses: list[FramePose],
        texture: TextureField,
        base_color: torch.Tensor | float = 0.5,
    ) -> "AvatarParams":
        colors = torch.empty(model.num_faces, 3, dtype=torch.float64)
        colors[:] = torch.as_tensor(base_color, dtype=torch.float64)
        return cls(
            beta=torch.zeros(model.num_shape_coeffs, dtype=torch.float64),
            offsets=torch.zeros(model.num_vertices, 3, dtype=torch.float64),
            frame_poses=[p.clone() for p in init_poses],
            texture=texture,
            face_colors=colors.clamp(0.0, 1.0),
        )

    def validate(self, model: BodyModel):
        if self.face_colors.shape != (model.num_faces, 3):
            raise ConfigurationError("face_colors must be (F,3)")
        if bool((self.face_colors < 0).any()) or bool((self.face_colors > 1).any()):
            raise ConfigurationError("face_colors must lie in [0,1]")
        if self.offsets.shape != (model.num_vertices, 3):
            raise ConfigurationError("offsets must be (V,3)")
        if self.beta.shape != (model.num_shape_coeffs,):
            raise ConfigurationError("beta has wrong length")
