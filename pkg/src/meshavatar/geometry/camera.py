"""Pinhole camera with shared intrinsics and perspective projection.

Convention: camera frame has +x right, +y down, +z forward, so projected
pixel coordinates have their origin at the image's top-left corner.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from ..errors import ConfigurationError, EmptyProjectionError
from .meshops import Mesh


@dataclass(frozen=True)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    near: float = 0.01
    far: float = 100.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigurationError("focal lengths must be positive")
        if not (self.far > self.near > 0):
            raise ConfigurationError("need far > near > 0")


@dataclass
class ProjectedMesh:
    """Screen-space mesh: xy (V,2) pixel coordinates, depth (V,) camera z.

    ``valid`` flags vertices strictly in front of the near plane; faces
    touching an invalid vertex are excluded from rasterization.
    """

    xy: torch.Tensor
    depth: torch.Tensor
    faces: torch.Tensor
    valid: torch.Tensor
    width: int
    height: int
    near: float
    far: float


def project(cam: Camera, mesh: Mesh) -> ProjectedMesh:
    """Project camera-frame vertices to pixel coordinates.

    x_px = fx*x/z + cx, y_px = fy*y/z + cy. Raises EmptyProjectionError if
    no vertex lies in front of the near plane.
    """
    v = mesh.vertices
    z = v[:, 2]
    valid = z > cam.near
    if not bool(valid.any()):
        raise EmptyProjectionError("all vertices at or behind the near plane")
    z_safe = torch.where(valid, z, torch.ones_like(z))
    x = cam.fx * v[:, 0] / z_safe + cam.cx
    y = cam.fy * v[:, 1] / z_safe + cam.cy
    return ProjectedMesh(
        xy=torch.stack([x, y], dim=1),
        depth=z,
        faces=mesh.faces,
        valid=valid,
        width=cam.width,
        height=cam.height,
        near=cam.near,
        far=cam.far,
    )
