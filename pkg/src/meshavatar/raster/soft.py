"""Soft rasterization branch: sigmoid coverage + depth-softmax aggregation.

Backward passes produce gradients w.r.t. projected vertex positions only;
face colors enter with stopped gradients (the texture branch is the hard
rasterizer). Implemented as autograd Functions over the numpy kernels.
"""

from __future__ import annotations

import numpy as np
import torch

from ..geometry.camera import ProjectedMesh
from . import kernels
from .config import SoftRasterConfig
from .fragments import RenderOutput
from .hard import face_validity


def _np(t: torch.Tensor) -> np.ndarray:
    return np.ascontiguousarray(t.detach().numpy())


class _SoftRenderFn(torch.autograd.Function):
    @staticmethod
    def forward(ctx, xy, depth, colors, faces, face_valid, w, h, near, far, cfg):
        args = (
            _np(xy), _np(depth), _np(faces), face_valid, w, h, near, far,
            cfg.sigma, cfg.gamma, cfg.background_eps, _np(colors),
            np.asarray(cfg.background_color, dtype=np.float64),
        )
        rgb, alpha, m, denom = kernels.soft_forward(*args, tile=cfg.tile_size)
        ctx.saved = (args, m, denom, rgb, alpha)
        return torch.from_numpy(rgb), torch.from_numpy(alpha)

    @staticmethod
    def backward(ctx, grad_rgb, grad_alpha):
        args, m, denom, rgb, alpha = ctx.saved
        grad_xy, grad_z = kernels.soft_backward(
            *args, m, denom, rgb, alpha, _np(grad_rgb), _np(grad_alpha)
        )
        return (
            torch.from_numpy(grad_xy),
            torch.from_numpy(grad_z),
            None, None, None, None, None, None, None, None,
        )


class _SoftSilhouetteFn(torch.autograd.Function):
    @staticmethod
    def forward(ctx, xy, faces, face_valid, w, h, cfg):
        args = (_np(xy), _np(faces), face_valid, w, h, cfg.sigma)
        sil, prod = kernels.silhouette_forward(*args, tile=cfg.tile_size)
        ctx.saved = (args, prod)
        return torch.from_numpy(sil)

    @staticmethod
    def backward(ctx, grad_sil):
        args, prod = ctx.saved
        grad_xy = kernels.silhouette_backward(*args, prod, _np(grad_sil))
        return torch.from_numpy(grad_xy), None, None, None, None, None


def soft_render(pm: ProjectedMesh, face_colors: torch.Tensor, cfg: SoftRasterConfig) -> RenderOutput:
    """Translucent render; per-face colors are treated as constants (stop-grad)."""
    face_valid = face_validity(pm)
    rgb, alpha = _SoftRenderFn.apply(
        pm.xy, pm.depth, face_colors.detach(), pm.faces, face_valid,
        pm.width, pm.height, pm.near, pm.far, cfg,
    )
    return RenderOutput(rgb=rgb, alpha=alpha)


def soft_silhouette(pm: ProjectedMesh, cfg: SoftRasterConfig) -> torch.Tensor:
    """Differentiable occupancy S = 1 - prod_j(1 - D_j), in [0,1]."""
    face_valid = face_validity(pm)
    return _SoftSilhouetteFn.apply(pm.xy, pm.faces, face_valid, pm.width, pm.height, cfg)
