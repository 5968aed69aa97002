"""Objective terms: image, silhouette, keypoint losses and mesh regularizers."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigurationError
from .geometry.meshops import Mesh, face_areas, face_normals

log = logging.getLogger(__name__)

KEYPOINT_CONF_THRESHOLD = 0.3
_AREA_CLAMP = 1e-12


@dataclass(frozen=True)
class LossWeights:
    lambda_rgb: float = 4.0
    lambda_sil: float = 4.0
    lambda_kps: float = 0.01
    lambda_nc: float = 0.5
    lambda_fa: float = 2.5

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if v < 0:
                raise ConfigurationError(f"{name} must be nonnegative")


def loss_rgb(image: torch.Tensor, i_hard: torch.Tensor, i_soft: torch.Tensor) -> torch.Tensor:
    """Sum of the two mean absolute errors (hard and soft renders).

    Means run over pixels*channels so the weights stay resolution-independent.
    The hard term routes gradients to texture, the soft term to geometry.
    """
    if image.shape != i_hard.shape or image.shape != i_soft.shape:
        raise ConfigurationError("rgb loss inputs must share one shape")
    return (image - i_hard).abs().mean() + (image - i_soft).abs().mean()


def loss_silhouette(s_hat: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
    """IoU loss 1 - sum(S_hat*S) / sum(S_hat + S - S_hat*S), in [0,1].

    Defined as 0 when both masks are empty, 1 when exactly one is.
    """
    if s_hat.shape != s.shape:
        raise ConfigurationError("silhouette shapes differ")
    inter = (s_hat * s).sum()
    union = (s_hat + s).sum() - inter
    if float(union.detach()) <= 0.0:
        return torch.zeros((), dtype=s_hat.dtype)
    return 1.0 - inter / union


def loss_keypoints(
    k_hat: dict[str, tuple[torch.Tensor, bool]],
    k_obs: dict[str, tuple[np.ndarray, float]],
    conf_threshold: float = KEYPOINT_CONF_THRESHOLD,
) -> torch.Tensor:
    """Confidence-weighted sum of squared pixel distances over matched names.

    Observations below the confidence threshold and predictions behind the
    camera are skipped; no matches at all yields 0 with a warning.
    """
    total = torch.zeros((), dtype=torch.float64)
    matched = 0
    for name, (xy_pred, in_front) in k_hat.items():
        if name not in k_obs or not in_front:
            continue
        xy_gt, conf = k_obs[name]
        if conf < conf_threshold:
            continue
        target = torch.as_tensor(xy_gt, dtype=torch.float64)
        total = total + conf * ((xy_pred - target) ** 2).sum()
        matched += 1
    if matched == 0:
        log.warning("keypoint loss: no matched keypoints")
    return total


def loss_normal_consistency(mesh_d: Mesh, pairs: np.ndarray) -> torch.Tensor:
    """Sum of (1 - n_j . n_k) over face pairs sharing an edge.

    Pairs touching a degenerate face are skipped.
    """
    if pairs.shape[0] == 0:
        return torch.zeros((), dtype=torch.float64)
    normals, degenerate = face_normals(mesh_d)
    j, k = pairs[:, 0], pairs[:, 1]
    keep = ~(degenerate[j] | degenerate[k])
    dots = (normals[j] * normals[k]).sum(dim=1)
    return ((1.0 - dots) * keep).sum()


def loss_face_area(mesh_d: Mesh, mesh_0: Mesh) -> torch.Tensor:
    """Sum over faces of A/A' + A'/A; minimum 2F at identical areas.

    Current-mesh areas are clamped to 1e-12 in denominators; a zero-area
    face in the reference mesh is a configuration error.
    """
    if mesh_d.faces.shape != mesh_0.faces.shape:
        raise ConfigurationError("face-area loss requires shared topology")
    a = face_areas(mesh_d)
    a_ref = face_areas(mesh_0)
    if bool((a_ref <= _AREA_CLAMP).any()):
        raise ConfigurationError("reference mesh has a zero-area face")
    a_safe = a.clamp_min(_AREA_CLAMP)
    return (a / a_ref + a_ref / a_safe).sum()


def loss_total(
    frame_terms: list[dict[str, torch.Tensor]],
    reg_terms: dict[str, torch.Tensor],
    weights: LossWeights,
) -> torch.Tensor:
    """Weighted sum: per-frame RGB/silhouette/keypoint terms plus the
    regularizers once (not per frame)."""
    total = torch.zeros((), dtype=torch.float64)
    for terms in frame_terms:
        total = total + weights.lambda_rgb * terms["rgb"]
        total = total + weights.lambda_sil * terms["sil"]
        total = total + weights.lambda_kps * terms["kps"]
    total = total + weights.lambda_nc * reg_terms["nc"]
    total = total + weights.lambda_fa * reg_terms["fa"]
    return total
