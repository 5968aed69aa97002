"""Command-line interface.

Subcommands: fit, render, export-mesh, eval, toy-cube, gradcheck.
Exit codes: 0 success, 2 usage error, 3 data/configuration error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from . import fit as fitmod
from .errors import ConfigurationError, DataError, NumericError
from .fit.config import FitConfig
from .fit.forward import STAGE_BASE_COLOR, STAGE_TEXTURE, render_frame
from .geometry.body import FramePose, build_rest_mesh, lbs_pose, rodrigues
from .geometry.camera import Camera
from .geometry.meshops import Mesh
from .raster import SoftRasterConfig, set_num_threads
from .sceneio import (
    export_obj,
    import_obj,
    load_checkpoint,
    load_scene,
    save_checkpoint,
    verify_body_hash,
    write_image,
    write_loss_log,
)
from .sceneio.metrics import chamfer_p2s, metric_image, silhouette_iou
from .toycube import MODES, format_report, run_toycube

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _load_config(path: str | None, scene=None) -> FitConfig:
    return FitConfig.from_json(path) if path else FitConfig()


def _stage_for_render(header: dict) -> int:
    return STAGE_TEXTURE if header.get("stage", STAGE_TEXTURE) >= STAGE_TEXTURE else STAGE_BASE_COLOR


def cmd_fit(args) -> int:
    scene = load_scene(args.scene)
    cfg = _load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    params, rows = fitmod.fit(scene, cfg, mode=args.mode)
    write_loss_log(out / "loss_log.csv", rows)
    final_stage = STAGE_TEXTURE if args.mode == "two-stage" else fitmod.STAGE_JOINT
    save_checkpoint(
        out / "checkpoint.npz", params, scene.body_hash, cfg.to_dict(),
        iteration=len(rows), stage=2 if args.mode == "two-stage" else 0,
    )
    mesh_d = build_rest_mesh(scene.body, params.beta.detach(), params.offsets.detach())
    export_obj(mesh_d.detach(), out / "canonical.obj")

    renders = out / "renders"
    renders.mkdir(exist_ok=True)
    summary = {"mode": args.mode, "frames": {}}
    render_stage = STAGE_TEXTURE if args.mode != "two-stage" or cfg.iters(2, scene.num_frames) > 0 else STAGE_BASE_COLOR
    for i, obs in enumerate(scene.frames):
        image, mask, _ = render_frame(
            scene.body, params, params.frame_poses[i], obs.camera, cfg.soft, render_stage
        )
        write_image(renders / f"{obs.name}.ppm", image.numpy())
        psnr_v, ssim_v = metric_image(image, obs.image)
        summary["frames"][obs.name] = {
            "psnr": psnr_v, "ssim": ssim_v,
            "iou": silhouette_iou(mask, obs.mask),
        }
    with open(out / "summary.json", "w") as f:
        json.dump(summary, f, indent=2)
    print(f"fit complete: {len(rows)} iterations, outputs in {out}")
    return EXIT_OK


def _pose_from_file(path: str, num_joints: int) -> FramePose:
    try:
        with open(path) as f:
            spec = json.load(f)
    except OSError as e:
        raise DataError(f"cannot read pose file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"malformed pose file {path}: {e}") from e
    from .sceneio.manifest import _rot_to_vec

    theta = np.asarray(spec.get("theta", np.zeros(num_joints * 3)), dtype=np.float64)
    if theta.size != num_joints * 3:
        raise DataError(f"pose file theta must have {num_joints * 3} values")
    return FramePose(
        theta=torch.as_tensor(theta.reshape(num_joints, 3)),
        rot_vec=torch.as_tensor(_rot_to_vec(spec["rot"])),
        trans=torch.as_tensor(np.asarray(spec["trans"], dtype=np.float64).reshape(3)),
    )


def cmd_render(args) -> int:
    scene = load_scene(args.scene)
    params, header = load_checkpoint(args.checkpoint, scene.body)
    verify_body_hash(header, scene.body_hash, args.checkpoint)
    cfg = FitConfig.from_dict(header.get("config", {}))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stage = _stage_for_render(header)

    jobs = []
    if args.frame is not None:
        if not (0 <= args.frame < scene.num_frames):
            raise DataError(f"frame index {args.frame} out of range")
        obs = scene.frames[args.frame]
        if args.frame >= len(params.frame_poses):
            raise DataError("checkpoint has no pose for that frame")
        jobs.append((obs.name, params.frame_poses[args.frame], obs.camera))
    elif args.pose:
        cams = scene.extras["cameras"]
        if args.camera not in cams:
            raise DataError(f"unknown camera {args.camera!r}")
        pose = _pose_from_file(args.pose, scene.body.num_joints)
        jobs.append((f"pose_{Path(args.pose).stem}", pose, cams[args.camera]))
    else:
        for i, obs in enumerate(scene.frames):
            if i < len(params.frame_poses):
                jobs.append((obs.name, params.frame_poses[i], obs.camera))

    for name, pose, cam in jobs:
        image, mask, _ = render_frame(scene.body, params, pose, cam, cfg.soft, stage)
        write_image(out / f"{name}.ppm", image.numpy())
        write_image(out / f"{name}_mask.pgm", mask.numpy())
    print(f"rendered {len(jobs)} view(s) to {out}")
    return EXIT_OK


def cmd_export_mesh(args) -> int:
    scene = load_scene(args.scene)
    params, header = load_checkpoint(args.checkpoint, scene.body)
    verify_body_hash(header, scene.body_hash, args.checkpoint)
    mesh = build_rest_mesh(scene.body, params.beta, params.offsets)
    if args.frame is not None:
        if not (0 <= args.frame < len(params.frame_poses)):
            raise DataError(f"frame index {args.frame} out of range")
        pose = params.frame_poses[args.frame]
        mesh, _ = lbs_pose(mesh, scene.body, pose.theta, rodrigues(pose.rot_vec[None])[0], pose.trans)
    export_obj(mesh.detach(), args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    scene = load_scene(args.scene)
    params, header = load_checkpoint(args.checkpoint, scene.body)
    verify_body_hash(header, scene.body_hash, args.checkpoint)
    cfg = FitConfig.from_dict(header.get("config", {}))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stage = _stage_for_render(header)

    rows = []
    for obs in scene.frames:
        image, mask, _ = render_frame(scene.body, params, obs.init_pose, obs.camera, cfg.soft, stage)
        psnr_v, ssim_v = metric_image(image, obs.image)
        rows.append({
            "frame": obs.name, "psnr": psnr_v, "ssim": ssim_v,
            "iou": silhouette_iou(mask, obs.mask),
        })

    geo = {}
    if args.gt_mesh:
        gt = import_obj(args.gt_mesh)
        mesh_d = build_rest_mesh(scene.body, params.beta.detach(), params.offsets.detach())
        chamfer, p2s = chamfer_p2s(mesh_d.detach(), gt, samples=args.samples, seed=0)
        geo = {"chamfer": chamfer, "p2s": p2s}

    means = {k: float(np.mean([r[k] for r in rows])) for k in ("psnr", "ssim", "iou")}
    report = {"frames": rows, "mean": means, **geo}
    with open(out / "metrics.json", "w") as f:
        json.dump(report, f, indent=2)
    header_line = f"{'frame':24s} {'psnr':>8s} {'ssim':>8s} {'iou':>8s}"
    print(header_line)
    for r in rows:
        print(f"{r['frame']:24s} {r['psnr']:8.3f} {r['ssim']:8.4f} {r['iou']:8.4f}")
    print(f"{'mean':24s} {means['psnr']:8.3f} {means['ssim']:8.4f} {means['iou']:8.4f}")
    if geo:
        print(f"chamfer={geo['chamfer']:.6f} p2s={geo['p2s']:.6f}")
    return EXIT_OK


def cmd_toycube(args) -> int:
    report = run_toycube(
        args.out, views=args.views, size=args.size, mode=args.mode,
        iters=args.iters, seed=args.seed,
    )
    print(format_report(report))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    report = fitmod.grad_check(tolerance=args.tol, seed=args.seed)
    for line in report.lines():
        print(line)
    if not report.passed(args.tol):
        print(f"FAIL: max relative error {report.max_rel_error:.3e} exceeds {args.tol:g}")
        return EXIT_NUMERIC
    print(f"OK: max relative error {report.max_rel_error:.3e} <= {args.tol:g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="meshavatar", description=__doc__)
    p.add_argument("--threads", type=int, default=1, help="worker threads for rasterization")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit an avatar to a scene")
    f.add_argument("--scene", required=True)
    f.add_argument("--config", default=None)
    f.add_argument("--out", required=True)
    f.add_argument("--mode", choices=("two-stage", "one-stage"), default="two-stage")
    f.set_defaults(fn=cmd_fit)

    r = sub.add_parser("render", help="render views from a checkpoint")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--scene", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--frame", type=int, default=None)
    r.add_argument("--pose", default=None, help="pose JSON (theta/rot/trans)")
    r.add_argument("--camera", default=None, help="camera id for --pose")
    r.set_defaults(fn=cmd_render)

    e = sub.add_parser("export-mesh", help="export canonical or posed OBJ")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--scene", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--frame", type=int, default=None, help="pose the mesh with this frame")
    e.set_defaults(fn=cmd_export_mesh)

    v = sub.add_parser("eval", help="evaluate a checkpoint on a scene")
    v.add_argument("--checkpoint", required=True)
    v.add_argument("--scene", required=True)
    v.add_argument("--out", required=True)
    v.add_argument("--gt-mesh", default=None)
    v.add_argument("--samples", type=int, default=10000)
    v.set_defaults(fn=cmd_eval)

    t = sub.add_parser("toy-cube", help="concavity toy experiment")
    t.add_argument("--out", required=True)
    t.add_argument("--views", type=int, default=12)
    t.add_argument("--size", type=int, default=128)
    t.add_argument("--mode", choices=MODES, default="both")
    t.add_argument("--iters", type=int, default=1600)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(fn=cmd_toycube)

    g = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    g.add_argument("--tol", type=float, default=1e-3)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(fn=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    torch.set_num_threads(max(1, args.threads))
    set_num_threads(args.threads)
    try:
        return args.fn(args)
    except (DataError, ConfigurationError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
