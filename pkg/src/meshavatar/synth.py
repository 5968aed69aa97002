"""Synthetic toy-body scenes rendered with the package's own forward model.

Ground truth: the procedural toy humanoid with a known shape, smooth offset
bumps, a high-contrast procedural 3D texture, and scripted arm/leg swings,
viewed from a small camera rig. Scenes are written in the scene-v1 layout so
they exercise the full ingestion path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .geometry.body import BodyModel, FramePose, build_rest_mesh, lbs_pose, rodrigues
from .geometry.camera import Camera, project
from .geometry.toybody import JOINT_NAMES, make_toy_body
from .raster import rasterize_hard, shade_fragments
from .geometry.body import model_keypoints
from .sceneio.bodyfile import save_body_model
from .sceneio.images import write_image
from .sceneio.manifest import write_keypoints
from .texfield import ProceduralTexture


def lookat_extrinsics(eye, target, up=(0.0, 1.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera (R, t) for a +z-forward, +y-down camera."""
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    z = target - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    rot = np.stack([x, y, z])
    return rot, -rot @ eye


def make_position_texture(center=(0.0, 0.0, 0.0), scale: float = 1.0):
    """Color field combining monotone positional gradients (unambiguous,
    wide capture range for alignment) with high-frequency stripes (sharp
    optimum). Returns a (N,3)->(N,3) torch function with values in [0,1]."""
    c = torch.tensor(center, dtype=torch.float64)

    def fn(t: torch.Tensor) -> torch.Tensor:
        u = (t - c) / scale
        x, y, z = u[:, 0], u[:, 1], u[:, 2]
        r = 0.5 + 0.75 * x + 0.18 * torch.sin(40.0 * y + 10.0 * x)
        g = 0.5 + 0.75 * y + 0.18 * torch.sin(34.0 * z + 8.0 * y + 1.0)
        b = 0.5 + 0.75 * z + 0.18 * torch.sin(46.0 * x + 12.0 * z + 2.0)
        return torch.stack([r, g, b], dim=1).clamp(0.0, 1.0)

    return fn


def high_contrast_texture(t: torch.Tensor) -> torch.Tensor:
    """Default body texture: positional gradients + stripes over the
    toy-body bounding region."""
    return make_position_texture(center=(0.0, 0.85, 0.0), scale=1.9)(t)


def gt_offsets(body: BodyModel, amplitude: float = 0.025) -> torch.Tensor:
    """Smooth radial bumps: clothing-like deviations from the base body."""
    v = body.rest_vertices.numpy()
    horiz = v.copy()
    horiz[:, 1] = 0.0
    norm = np.linalg.norm(horiz, axis=1, keepdims=True)
    direction = np.divide(horiz, norm, out=np.zeros_like(horiz), where=norm > 1e-9)
    bump = amplitude * (0.6 + 0.4 * np.sin(9.0 * v[:, 1]) * np.cos(5.0 * v[:, 0]))
    return torch.as_tensor(direction * bump[:, None])


def swing_pose(body: BodyModel, phase: float, amplitude: float = 0.5) -> torch.Tensor:
    """Scripted joint angles: swinging arms and legs, slight spine sway."""
    theta = np.zeros((body.num_joints, 3))
    s = math.sin(2.0 * math.pi * phase)
    c = math.cos(2.0 * math.pi * phase)
    idx = {n: i for i, n in enumerate(JOINT_NAMES)}
    theta[idx["l_shoulder"], 2] = 0.9 + amplitude * s
    theta[idx["r_shoulder"], 2] = -(0.9 + amplitude * c)
    theta[idx["l_elbow"], 2] = 0.3 + 0.4 * amplitude * c
    theta[idx["r_elbow"], 2] = -(0.3 + 0.4 * amplitude * s)
    theta[idx["l_hip"], 0] = 0.35 * amplitude * s
    theta[idx["r_hip"], 0] = -0.35 * amplitude * s
    theta[idx["l_knee"], 0] = 0.25 * amplitude * (1 + c) / 2
    theta[idx["r_knee"], 0] = 0.25 * amplitude * (1 + s) / 2
    theta[idx["spine"], 1] = 0.15 * amplitude * s
    return torch.as_tensor(theta)


@dataclass
class SynthSpec:
    """Recipe for a synthetic scene."""

    n_poses: int = 10
    train_azimuths: tuple[float, ...] = (0.0, 90.0)
    heldout: tuple[tuple[float, int], ...] = ((45.0, 1), (135.0, 4), (225.0, 6), (315.0, 8))
    size: int = 256
    distance: float = 3.4
    fov_scale: float = 1.25
    pose_noise: float = 0.05
    extr_noise: float = 0.01
    seed: int = 11
    offset_amplitude: float = 0.025
    beta_gt: tuple[float, float] = (0.25, -0.15)
    swing_amplitude: float = 0.5


def _camera_for(spec: SynthSpec) -> Camera:
    f = spec.fov_scale * spec.size
    return Camera(fx=f, fy=f, cx=spec.size / 2, cy=spec.size / 2,
                  width=spec.size, height=spec.size, near=0.2, far=20.0)


def _rig(spec: SynthSpec, azimuth_deg: float) -> tuple[np.ndarray, np.ndarray]:
    a = math.radians(azimuth_deg)
    eye = (spec.distance * math.sin(a), 1.4, spec.distance * math.cos(a))
    return lookat_extrinsics(eye, (0.0, 0.85, 0.0))


def render_gt_frame(body, beta, offsets, theta, rot, trans, cam, texture):
    mesh = build_rest_mesh(body, beta, offsets)
    skel = build_rest_mesh(body, beta, torch.zeros_like(offsets))
    posed, joints = lbs_pose(mesh, body, theta, rot, trans, joint_source=skel.vertices)
    pm = project(cam, posed)
    frags = rasterize_hard(pm)
    image = shade_fragments(frags, texture, body.faces)
    mask = frags.covered.to(torch.float64)
    kps = model_keypoints(joints, posed, body, cam)
    keypoints = {
        name: (xy.detach().numpy(), 1.0 if in_front else 0.0)
        for name, (xy, in_front) in kps.items()
    }
    return image, mask, keypoints


def make_toy_scene(out_dir: str | Path, spec: SynthSpec | None = None) -> dict:
    """Write train + held-out scene-v1 manifests; returns their paths."""
    spec = spec or SynthSpec()
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "keypoints").mkdir(exist_ok=True)
    rng = np.random.default_rng(spec.seed)

    body = make_toy_body()
    save_body_model(body, out / "body.json")
    beta = torch.as_tensor(np.asarray(spec.beta_gt))
    offsets = gt_offsets(body, spec.offset_amplitude)
    texture = ProceduralTexture(high_contrast_texture, body.rest_vertices)
    cam = _camera_for(spec)

    cam_table = {}
    azimuths = list(spec.train_azimuths) + sorted({az for az, _ in spec.heldout})
    for az in azimuths:
        rot, trans = _rig(spec, az)
        cam_table[f"cam{az:g}"] = {
            "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
            "width": cam.width, "height": cam.height, "near": cam.near, "far": cam.far,
            "rot": rot.ravel().tolist(), "trans": trans.tolist(),
        }

    def emit_frame(tag: str, az: float, pose_idx: int, noisy: bool) -> dict:
        phase = pose_idx / spec.n_poses
        theta_gt = swing_pose(body, phase, spec.swing_amplitude)
        rot_np, trans_np = _rig(spec, az)
        rot = torch.as_tensor(rot_np)
        trans = torch.as_tensor(trans_np)
        image, mask, keypoints = render_gt_frame(
            body, beta, offsets, theta_gt, rot, trans, cam, texture
        )
        write_image(out / "images" / f"{tag}.ppm", image.numpy())
        write_image(out / "images" / f"{tag}_mask.pgm", mask.numpy())
        write_keypoints(out / "keypoints" / f"{tag}.json", keypoints)
        theta_init = theta_gt.numpy()
        rot_init = rot_np
        trans_init = trans_np
        if noisy:
            theta_init = theta_init + rng.normal(0, spec.pose_noise, theta_init.shape)
            rot_init = rot_np @ rodrigues(
                torch.as_tensor(rng.normal(0, spec.extr_noise, 3))[None]
            )[0].numpy()
            trans_init = trans_np + rng.normal(0, spec.extr_noise, 3)
        return {
            "name": tag,
            "image": f"images/{tag}.ppm",
            "mask": f"images/{tag}_mask.pgm",
            "keypoints": f"keypoints/{tag}.json",
            "camera": f"cam{az:g}",
            "init_pose": {
                "theta": np.asarray(theta_init).ravel().tolist(),
                "rot": np.asarray(rot_init).ravel().tolist(),
                "trans": np.asarray(trans_init).ravel().tolist(),
            },
        }

    train_frames = [
        emit_frame(f"t_az{az:g}_p{p}", az, p, noisy=True)
        for az in spec.train_azimuths
        for p in range(spec.n_poses)
    ]
    heldout_frames = [
        emit_frame(f"h_az{az:g}_p{p}", az, p, noisy=False)
        for az, p in spec.heldout
    ]

    def write_manifest(name, frames):
        doc = {
            "format": "scene-v1",
            "body_model": "body.json",
            "cameras": cam_table,
            "frames": frames,
        }
        with open(out / name, "w") as f:
            json.dump(doc, f, indent=1)
        return str(out / name)

    return {
        "train": write_manifest("scene.json", train_frames),
        "heldout": write_manifest("heldout.json", heldout_frames),
        "body": str(out / "body.json"),
    }


def make_cube_body() -> BodyModel:
    """Single-joint rigid cube rig used by the fixed-point scene."""
    verts = np.array([
        [-0.5, -0.5, -0.5], [0.5, -0.5, -0.5], [0.5, 0.5, -0.5], [-0.5, 0.5, -0.5],
        [-0.5, -0.5, 0.5], [0.5, -0.5, 0.5], [0.5, 0.5, 0.5], [-0.5, 0.5, 0.5],
    ])
    faces = np.array([
        [0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7],
        [0, 1, 5], [0, 5, 4], [2, 3, 7], [2, 7, 6],
        [1, 2, 6], [1, 6, 5], [0, 4, 7], [0, 7, 3],
    ])
    return BodyModel(
        rest_vertices=torch.as_tensor(verts, dtype=torch.float64),
        faces=torch.as_tensor(faces, dtype=torch.int64),
        shape_basis=torch.zeros(1, 8, 3, dtype=torch.float64),
        joint_regressor=torch.full((1, 8), 1.0 / 8.0, dtype=torch.float64),
        parents=torch.tensor([-1], dtype=torch.int64),
        skin_weights=torch.ones(8, 1, dtype=torch.float64),
        keypoint_map={"center": ("joint", 0), "corner": ("vertex", 6)},
    )


def make_fixed_point_scene(out_dir: str | Path, size: int = 64) -> dict:
    """A scene whose ground truth is exactly the initialization's own render.

    A uniform-color cube faces the camera head-on with its projected outline
    placed strictly between pixel centers (projected diagonals avoid them
    too), so with a razor-thin face blur every loss term in the objective is
    bitwise stationary at the initialization.
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "keypoints").mkdir(exist_ok=True)
    body = make_cube_body()
    save_body_model(body, out / "body.json")
    beta = torch.zeros(1, dtype=torch.float64)
    offsets = torch.zeros(8, 3, dtype=torch.float64)
    theta = torch.zeros(1, 3, dtype=torch.float64)

    # front face (unit square at z = 1.5) must span a pixel box whose edges
    # and whose projected diagonals keep clear of pixel centers
    z0 = 1.5
    fx = 0.28 * size * z0  # half-size ~0.14*size px from the center
    cx = size / 2 + 0.21
    cy = size / 2 + 0.36
    cam = Camera(fx=fx, fy=fx, cx=cx, cy=cy, width=size, height=size, near=0.2, far=20.0)
    rot = torch.eye(3, dtype=torch.float64)
    trans = torch.tensor([0.0, 0.0, 2.0], dtype=torch.float64)

    color = torch.tensor([156 / 255, 102 / 255, 51 / 255], dtype=torch.float64)
    colors = color.expand(12, 3)
    shader = lambda ids, bary, faces: colors[ids]
    image, mask, keypoints = render_gt_frame(body, beta, offsets, theta, rot, trans, cam, shader)
    tag = "fp0"
    write_image(out / "images" / f"{tag}.ppm", image.numpy())
    write_image(out / "images" / f"{tag}_mask.pgm", mask.numpy())
    write_keypoints(out / "keypoints" / f"{tag}.json", keypoints)
    doc = {
        "format": "scene-v1",
        "body_model": "body.json",
        "cameras": {"cam0": {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
                             "width": size, "height": size, "near": cam.near, "far": cam.far}},
        "frames": [{
            "name": tag,
            "image": f"images/{tag}.ppm",
            "mask": f"images/{tag}_mask.pgm",
            "keypoints": f"keypoints/{tag}.json",
            "camera": "cam0",
            "init_pose": {
                "theta": theta.numpy().ravel().tolist(),
                "rot": rot.numpy().ravel().tolist(),
                "trans": trans.numpy().tolist(),
            },
        }],
    }
    path = out / "scene.json"
    with open(path, "w") as fobj:
        json.dump(doc, fobj, indent=1)
    return {"train": str(path), "body": str(out / "body.json")}
