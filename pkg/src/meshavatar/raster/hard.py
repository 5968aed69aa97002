"""Hard (exact) rasterization branch.

rasterize_hard is intentionally non-differentiable: geometry gradients flow
through the soft branch only. Shading a FragmentBuffer is differentiable in
the shader's parameters (texture field or per-face colors), which is where
the hard branch routes its gradients.
"""

from __future__ import annotations

import numpy as np
import torch

from ..errors import NumericError
from ..geometry.camera import ProjectedMesh
from . import kernels
from .fragments import FragmentBuffer


def face_validity(pm: ProjectedMesh) -> np.ndarray:
    valid = pm.valid.detach().numpy()
    return valid[pm.faces.numpy()].all(axis=1).astype(np.uint8)


def rasterize_hard(pm: ProjectedMesh) -> FragmentBuffer:
    """Depth-tested exact rasterization at pixel centers (x+0.5, y+0.5).

    Barycentrics are perspective-correct; faces with a vertex at or behind
    the near plane are dropped; back faces are kept.
    """
    face_valid = face_validity(pm)
    if not face_valid.any():
        raise NumericError("no rasterizable face in front of the near plane")
    face_img, bary, depth = kernels.hard_rasterize(
        np.ascontiguousarray(pm.xy.detach().numpy()),
        np.ascontiguousarray(pm.depth.detach().numpy()),
        np.ascontiguousarray(pm.faces.numpy()),
        face_valid,
        pm.width,
        pm.height,
    )
    return FragmentBuffer(
        face=torch.from_numpy(face_img),
        bary=torch.from_numpy(bary),
        depth=torch.from_numpy(depth),
    )


def shade_fragments(
    frags: FragmentBuffer,
    shader,
    faces: torch.Tensor,
    background_color=(0.0, 0.0, 0.0),
) -> torch.Tensor:
    """Shade covered pixels with shader(face_ids, bary, faces) -> (N,3).

    Returns an (H,W,3) image; gradients reach only the shader's parameters
    (fragments are constants).
    """
    h, w = frags.face.shape
    covered = frags.covered
    bg = torch.as_tensor(background_color, dtype=torch.float64)
    image = bg.expand(h, w, 3).clone()
    if bool(covered.any()):
        ys, xs = torch.nonzero(covered, as_tuple=True)
        colors = shader(frags.face[ys, xs], frags.bary[ys, xs], faces)
        image[ys, xs] = colors
    return image


def face_color_shader(face_colors: torch.Tensor):
    """Stage-1 shader: one base RGB per face."""

    def shade(face_ids, bary, faces):
        return face_colors[face_ids]

    return shade


def hard_silhouette(frags: FragmentBuffer) -> torch.Tensor:
    """Binary coverage mask of the hard branch (no gradients)."""
    return frags.covered.to(torch.float64)
