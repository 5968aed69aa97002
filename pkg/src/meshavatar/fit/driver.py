"""Two-stage fitting driver.

Stage 1 aligns geometry and pose with per-face base colors; stage 2 freezes
shape, offsets and base colors, then trains the texture field while refining
per-frame pose and extrinsics. The one-stage mode (ablation) optimizes
everything jointly from scratch.
"""

from __future__ import annotations

import logging

import numpy as np
import torch

from ..errors import NumericError
from ..geometry.avatar import AvatarParams
from ..geometry.body import FramePose
from ..losses import loss_total
from ..sceneio.scene import Scene
from ..texfield import TextureField
from .config import FitConfig
from .forward import STAGE_BASE_COLOR, STAGE_JOINT, STAGE_TEXTURE, frame_forward, regularizer_terms
from .optim import Adam, ParamGroup

log = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 10.0
DIVERGENCE_PATIENCE = 50

TEXTURE_GROUPS = ("texcoords", "hash_tables", "mlp")
GEOMETRY_GROUPS = ("beta", "offsets", "face_colors")


def init_params(scene: Scene, cfg: FitConfig) -> AvatarParams:
    """Zero shape/offsets, ingested poses, mean-color faces, fresh texture."""
    body = scene.body
    texture = TextureField.init_from_vertices(
        body.rest_vertices, cfg.hash_grid, hidden=cfg.mlp_hidden, seed=cfg.seed
    )
    color_sum = torch.zeros(3, dtype=torch.float64)
    count = 0.0
    for obs in scene.frames:
        sel = obs.mask > 0.5
        color_sum += obs.image[sel].sum(dim=0)
        count += float(sel.sum())
    base = color_sum / count if count else torch.full((3,), 0.5, dtype=torch.float64)
    # snap to the images' own 8-bit grid (keeps uniform scenes bit-exact)
    base = torch.round(base * 255.0) / 255.0
    init_poses = [obs.init_pose for obs in scene.frames]
    return AvatarParams.initial(body, init_poses, texture, base_color=base)


def build_param_groups(params: AvatarParams, cfg: FitConfig) -> list[ParamGroup]:
    tf = params.texture
    return [
        ParamGroup("beta", [params.beta], cfg.lr),
        ParamGroup("offsets", [params.offsets], cfg.lr),
        ParamGroup("pose_theta", [fp.theta for fp in params.frame_poses], cfg.lr),
        ParamGroup("extrinsic_rot", [fp.rot_vec for fp in params.frame_poses], cfg.lr),
        ParamGroup("extrinsic_trans", [fp.trans for fp in params.frame_poses], cfg.lr),
        ParamGroup("face_colors", [params.face_colors], cfg.lr_face_colors),
        ParamGroup("texcoords", [tf.texcoords], cfg.lr),
        ParamGroup("hash_tables", [tf.tables], cfg.lr),
        ParamGroup("mlp", list(tf.mlp_weights), cfg.lr),
    ]


def _apply_stage_freezing(groups: list[ParamGroup], stage: int, always_frozen: tuple[str, ...] = ()):
    frozen: tuple[str, ...]
    if stage == STAGE_BASE_COLOR:
        frozen = TEXTURE_GROUPS
    elif stage == STAGE_TEXTURE:
        frozen = GEOMETRY_GROUPS
    else:  # joint one-stage ablation: base colors unused
        frozen = ("face_colors",)
    for g in groups:
        if g.name in frozen or g.name in always_frozen:
            g.freeze()
        else:
            g.thaw()


def run_stage(
    scene: Scene,
    params: AvatarParams,
    cfg: FitConfig,
    stage: int,
    iters: int,
    rows: list[dict],
    iter_offset: int = 0,
    on_iteration=None,
) -> AvatarParams:
    groups = build_param_groups(params, cfg)
    _apply_stage_freezing(groups, stage, tuple(cfg.freeze_groups))
    opt = Adam(groups)
    rng = np.random.default_rng(cfg.seed * 1000 + stage)
    n = scene.num_frames
    initial_total = None
    bad_streak = 0

    for it in range(iters):
        if cfg.batch_size >= n:
            batch = list(range(n))
        else:
            batch = sorted(rng.choice(n, size=cfg.batch_size, replace=False).tolist())
        opt.zero_grad()
        terms = [
            frame_forward(scene.body, params, params.frame_poses[i], scene.frames[i], cfg.soft, stage)
            for i in batch
        ]
        regs = regularizer_terms(scene.body, params)
        total = loss_total(terms, regs, cfg.loss_weights)
        if not bool(torch.isfinite(total)):
            raise NumericError(f"non-finite loss at stage {stage} iter {it}")
        total.backward()
        opt.step()
        with torch.no_grad():
            params.face_colors.clamp_(0.0, 1.0)

        t = float(total.detach())
        if initial_total is None:
            initial_total = t
        if t > DIVERGENCE_FACTOR * initial_total:
            bad_streak += 1
            if bad_streak >= DIVERGENCE_PATIENCE:
                raise NumericError(
                    f"divergence: stage {stage} loss {t:.6g} > "
                    f"{DIVERGENCE_FACTOR}x initial {initial_total:.6g} "
                    f"for {DIVERGENCE_PATIENCE} consecutive iterations"
                )
        else:
            bad_streak = 0

        rows.append({
            "iter": iter_offset + it,
            "stage": stage,
            "rgb": float(sum(float(tm["rgb"].detach()) for tm in terms)),
            "sil": float(sum(float(tm["sil"].detach()) for tm in terms)),
            "kps": float(sum(float(tm["kps"].detach()) for tm in terms)),
            "nc": float(regs["nc"].detach()),
            "fa": float(regs["fa"].detach()),
            "total": t,
        })
        if on_iteration is not None:
            on_iteration(iter_offset + it, stage, params)
    return params


def run_stage1(scene: Scene, cfg: FitConfig, params: AvatarParams | None = None,
               rows: list[dict] | None = None, on_iteration=None) -> AvatarParams:
    if params is None:
        params = init_params(scene, cfg)
    rows = rows if rows is not None else []
    return run_stage(scene, params, cfg, STAGE_BASE_COLOR,
                     cfg.iters(1, scene.num_frames), rows, 0, on_iteration)


def run_stage2(scene: Scene, params: AvatarParams, cfg: FitConfig,
               rows: list[dict] | None = None, iter_offset: int = 0,
               on_iteration=None) -> AvatarParams:
    rows = rows if rows is not None else []
    return run_stage(scene, params, cfg, STAGE_TEXTURE,
                     cfg.iters(2, scene.num_frames), rows, iter_offset, on_iteration)


def fit(scene: Scene, cfg: FitConfig, mode: str = "two-stage",
        on_iteration=None) -> tuple[AvatarParams, list[dict]]:
    """Full optimization; returns the fitted parameters and the loss log rows."""
    rows: list[dict] = []
    params = init_params(scene, cfg)
    n = scene.num_frames
    if mode == "two-stage":
        run_stage(scene, params, cfg, STAGE_BASE_COLOR, cfg.iters(1, n), rows, 0, on_iteration)
        run_stage(scene, params, cfg, STAGE_TEXTURE, cfg.iters(2, n), rows,
                  cfg.iters(1, n), on_iteration)
    elif mode == "one-stage":
        total_iters = cfg.iters(1, n) + cfg.iters(2, n)
        run_stage(scene, params, cfg, STAGE_JOINT, total_iters, rows, 0, on_iteration)
    else:
        raise ValueError(f"unknown fit mode {mode!r}")
    return params, rows
