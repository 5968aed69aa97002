"""Analytic-vs-finite-difference gradient verification.

The loss is evaluated with the hard-branch fragments and the soft-branch
face colors pinned at the base point (they carry stopped gradients by
design, so the differentiable function is the one with those inputs held
constant). Both the analytic backward and the central differences use the
pinned forward, making the comparison exact up to FD truncation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..geometry.avatar import AvatarParams
from ..geometry.body import BodyModel, FramePose, build_rest_mesh, lbs_pose, rodrigues
from ..geometry.camera import Camera, project
from ..losses import LossWeights, loss_total
from ..raster import SoftRasterConfig, rasterize_hard
from ..sceneio.scene import FrameObservation
from ..texfield import HashGridConfig, TextureField
from .config import FitConfig
from .forward import (
    STAGE_BASE_COLOR,
    STAGE_JOINT,
    FramePin,
    frame_forward,
    regularizer_terms,
    soft_color_source,
)
from .driver import build_param_groups

FD_STEP = 1e-5
REL_FLOOR = 1e-6


@dataclass
class GroupReport:
    name: str
    max_rel_error: float
    checked: int


@dataclass
class GradCheckReport:
    groups: list[GroupReport] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((g.max_rel_error for g in self.groups), default=0.0)

    def passed(self, tol: float) -> bool:
        return self.max_rel_error <= tol

    def lines(self) -> list[str]:
        return [f"{g.name:16s} max_rel={g.max_rel_error:.3e} ({g.checked} coords)" for g in self.groups]


def _micro_body(rng: np.random.Generator) -> BodyModel:
    verts = np.array([
        [-0.4, -0.3, 0.0], [0.1, -0.35, 0.05], [-0.15, 0.1, -0.05],
        [0.05, 0.05, 0.02], [0.45, 0.1, -0.03], [0.25, 0.45, 0.04],
    ])
    verts += rng.normal(0, 0.02, verts.shape)
    faces = np.array([[0, 1, 2], [3, 4, 5], [0, 2, 4], [1, 3, 5]])
    regressor = np.zeros((2, 6))
    regressor[0, :3] = 1.0 / 3.0
    regressor[1, 3:] = 1.0 / 3.0
    skin = rng.uniform(0.1, 1.0, (6, 2))
    skin /= skin.sum(axis=1, keepdims=True)
    basis = rng.normal(0, 0.05, (1, 6, 3))
    return BodyModel(
        rest_vertices=torch.as_tensor(verts),
        faces=torch.as_tensor(faces, dtype=torch.int64),
        shape_basis=torch.as_tensor(basis),
        joint_regressor=torch.as_tensor(regressor),
        parents=torch.tensor([-1, 0], dtype=torch.int64),
        skin_weights=torch.as_tensor(skin),
        keypoint_map={"kp_joint": ("joint", 1), "kp_vert": ("vertex", 0)},
    )


def build_check_instance(seed: int = 0, resolution: int = 32):
    """4-triangle articulated instance with a random target frame."""
    rng = np.random.default_rng(seed)
    body = _micro_body(rng)
    cam = Camera(fx=40.0, fy=40.0, cx=resolution / 2, cy=resolution / 2,
                 width=resolution, height=resolution, near=0.1, far=10.0)
    pose = FramePose(
        theta=torch.as_tensor(rng.uniform(-0.2, 0.2, (2, 3))),
        rot_vec=torch.as_tensor(rng.uniform(-0.1, 0.1, 3)),
        trans=torch.tensor([0.0, 0.0, 2.0], dtype=torch.float64),
    )
    grid = HashGridConfig(levels=2, table_size=256, n_min=2, n_max=4, feat_dim=2)
    texture = TextureField.init_from_vertices(body.rest_vertices, grid, hidden=16, seed=seed)
    with torch.no_grad():
        texture.tables.uniform_(-0.5, 0.5, generator=torch.Generator().manual_seed(seed))
        texture.texcoords.add_(torch.as_tensor(rng.normal(0, 0.02, (6, 3))))
    params = AvatarParams(
        beta=torch.as_tensor(rng.uniform(-0.3, 0.3, 1)),
        offsets=torch.as_tensor(rng.normal(0, 0.02, (6, 3))),
        frame_poses=[pose],
        texture=texture,
        face_colors=torch.as_tensor(rng.uniform(0.2, 0.8, (4, 3))),
    )

    ys, xs = np.mgrid[0:resolution, 0:resolution]
    mask = ((xs - resolution / 2) ** 2 + (ys - resolution / 2) ** 2) < (0.4 * resolution) ** 2
    image = rng.uniform(0, 1, (resolution, resolution, 3)) * mask[:, :, None]
    obs = FrameObservation(
        image=torch.as_tensor(image),
        mask=torch.as_tensor(mask.astype(np.float64)),
        keypoints={
            "kp_joint": (rng.uniform(8, 24, 2), 1.0),
            "kp_vert": (rng.uniform(8, 24, 2), 1.0),
        },
        camera=cam,
        init_pose=pose,
        name="gradcheck",
    )
    soft = SoftRasterConfig(sigma=2e-3, gamma=2e-2)
    return body, params, obs, soft


def _make_pin(body, params, obs, soft, stage) -> FramePin:
    pose = params.frame_poses[0]
    with torch.no_grad():
        rest = build_rest_mesh(body, params.beta, params.offsets)
        skel = build_rest_mesh(body, params.beta, torch.zeros_like(params.offsets))
        posed, _ = lbs_pose(rest, body, pose.theta, rodrigues(pose.rot_vec[None])[0],
                            pose.trans, joint_source=skel.vertices)
        pm = project(obs.camera, posed)
        frags = rasterize_hard(pm)
        # clone: detached views share storage with the live parameters, and
        # the pin must stay fixed while coordinates are perturbed
        colors = soft_color_source(params, body.faces, stage).clone()
    return FramePin(frags=frags, soft_colors=colors)


def grad_check(
    selector: str | list[str] = "all",
    tolerance: float = 1e-3,
    seed: int = 0,
    resolution: int = 32,
    coords_per_group: int = 8,
    weights: LossWeights | None = None,
) -> GradCheckReport:
    """Check d(total loss)/d(group) against central finite differences.

    Face colors receive gradients only under the stage-1 loss and the
    texture field only once it drives the hard branch, so the check sums
    the stage-1 and joint-stage objectives. Relative error uses
    |a - f| / max(|a|, |f|, 1e-6).
    """
    body, params, obs, soft = build_check_instance(seed, resolution)
    weights = weights or LossWeights()
    rng = np.random.default_rng(seed + 1)

    pins = {stage: _make_pin(body, params, obs, soft, stage)
            for stage in (STAGE_BASE_COLOR, STAGE_JOINT)}

    def objective() -> torch.Tensor:
        total = torch.zeros((), dtype=torch.float64)
        for stage, pin in pins.items():
            terms = [frame_forward(body, params, params.frame_poses[0], obs, soft, stage, pin=pin)]
            regs = regularizer_terms(body, params)
            total = total + loss_total(terms, regs, weights)
        return total

    groups = build_param_groups(params, FitConfig(hash_grid=params.texture.config))
    if selector != "all":
        wanted = {selector} if isinstance(selector, str) else set(selector)
        groups = [g for g in groups if g.name in wanted]

    for g in groups:
        g.thaw()
        g.zero_grad()
    loss = objective()
    loss.backward()

    report = GradCheckReport()
    for g in groups:
        max_rel = 0.0
        checked = 0
        for tensor in g.tensors:
            grad = tensor.grad if tensor.grad is not None else torch.zeros_like(tensor)
            flat = tensor.detach().numpy().reshape(-1)
            gflat = grad.detach().numpy().reshape(-1)
            n = flat.size
            idx = rng.choice(n, size=min(coords_per_group, n), replace=False)
            for i in idx:
                orig = flat[i]
                flat[i] = orig + FD_STEP
                with torch.no_grad():
                    lp = float(objective())
                flat[i] = orig - FD_STEP
                with torch.no_grad():
                    lm = float(objective())
                flat[i] = orig
                fd = (lp - lm) / (2.0 * FD_STEP)
                an = float(gflat[i])
                rel = abs(an - fd) / max(abs(an), abs(fd), REL_FLOOR)
                max_rel = max(max_rel, rel)
                checked += 1
        report.groups.append(GroupReport(name=g.name, max_rel_error=max_rel, checked=checked))
    return report
