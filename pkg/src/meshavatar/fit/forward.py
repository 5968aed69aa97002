"""Per-frame forward model and loss assembly with dual-branch gradient routing.

Per frame: the avatar is shaped, posed, projected, then rendered twice.
The hard branch (exact fragments) is shaded by the stage's texture source and
carries gradients to texture parameters only; the soft branch renders with
stop-grad per-face colors and carries gradients to geometry and pose.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from ..geometry.avatar import AvatarParams
from ..geometry.body import BodyModel, FramePose, build_rest_mesh, lbs_pose, model_keypoints, rodrigues
from ..geometry.camera import project
from ..geometry.meshops import Mesh
from ..losses import loss_keypoints, loss_normal_consistency, loss_face_area, loss_rgb, loss_silhouette
from ..raster import SoftRasterConfig, face_color_shader, rasterize_hard, shade_fragments, soft_render, soft_silhouette
from ..raster.fragments import FragmentBuffer
from ..sceneio.scene import FrameObservation
from ..texfield import interpolate_texcoord, mlp_rgb, hash_encode

STAGE_BASE_COLOR = 1  # per-face base colors drive both branches
STAGE_TEXTURE = 2  # texture field drives the hard branch
STAGE_JOINT = 0  # one-stage ablation: texture field + all parameters


@dataclass
class FramePin:
    """Quantities held constant while finite-differencing the loss: the hard
    branch's fragments and the soft branch's (stop-grad) face colors."""

    frags: FragmentBuffer
    soft_colors: torch.Tensor


def face_centroid_colors(params: AvatarParams, faces: torch.Tensor) -> torch.Tensor:
    """Texture-field color at each face centroid (the soft branch's color
    source once the texture network is active)."""
    tf = params.texture
    centroids = tf.texcoords[faces].mean(dim=1)
    return mlp_rgb(hash_encode(centroids, tf), tf)


def soft_color_source(params: AvatarParams, faces: torch.Tensor, stage: int) -> torch.Tensor:
    if stage == STAGE_BASE_COLOR:
        return params.face_colors.detach()
    return face_centroid_colors(params, faces).detach()


def hard_shader(params: AvatarParams, stage: int):
    if stage == STAGE_BASE_COLOR:
        return face_color_shader(params.face_colors)
    return params.texture.shade


def frame_forward(
    model: BodyModel,
    params: AvatarParams,
    pose: FramePose,
    obs: FrameObservation,
    soft_cfg: SoftRasterConfig,
    stage: int,
    pin: FramePin | None = None,
) -> dict[str, torch.Tensor]:
    """RGB / silhouette / keypoint loss terms for one frame."""
    rest = build_rest_mesh(model, params.beta, params.offsets)
    skel = build_rest_mesh(model, params.beta, torch.zeros_like(params.offsets))
    posed, joints = lbs_pose(rest, model, pose.theta, rodrigues(pose.rot_vec[None])[0],
                             pose.trans, joint_source=skel.vertices)
    pm = project(obs.camera, posed)

    frags = pin.frags if pin is not None else rasterize_hard(pm)
    i_hard = shade_fragments(frags, hard_shader(params, stage), model.faces, soft_cfg.background_color)

    soft_colors = pin.soft_colors if pin is not None else soft_color_source(params, model.faces, stage)
    i_soft = soft_render(pm, soft_colors, soft_cfg).rgb
    s_hat = soft_silhouette(pm, soft_cfg)

    k_hat = model_keypoints(joints, posed, model, obs.camera)
    return {
        "rgb": loss_rgb(obs.image, i_hard, i_soft),
        "sil": loss_silhouette(s_hat, obs.mask),
        "kps": loss_keypoints(k_hat, obs.keypoints),
    }


def regularizer_terms(model: BodyModel, params: AvatarParams) -> dict[str, torch.Tensor]:
    """Normal consistency and face-area terms on the canonical deformed mesh."""
    mesh_d = build_rest_mesh(model, params.beta, params.offsets)
    mesh_0 = build_rest_mesh(model, params.beta, torch.zeros_like(params.offsets))
    return {
        "nc": loss_normal_consistency(mesh_d, model.adjacency()),
        "fa": loss_face_area(mesh_d, mesh_0),
    }


def render_frame(
    model: BodyModel,
    params: AvatarParams,
    pose: FramePose,
    camera,
    soft_cfg: SoftRasterConfig,
    stage: int = STAGE_TEXTURE,
) -> tuple[torch.Tensor, torch.Tensor, Mesh]:
    """Hard-branch render plus hard coverage mask (no gradients needed)."""
    with torch.no_grad():
        rest = build_rest_mesh(model, params.beta, params.offsets)
        skel = build_rest_mesh(model, params.beta, torch.zeros_like(params.offsets))
        posed, _ = lbs_pose(rest, model, pose.theta, rodrigues(pose.rot_vec[None])[0],
                            pose.trans, joint_source=skel.vertices)
        pm = project(camera, posed)
        frags = rasterize_hard(pm)
        image = shade_fragments(frags, hard_shader(params, stage), model.faces, soft_cfg.background_color)
        mask = frags.covered.to(torch.float64)
    return image, mask, posed
