"""scene-v1 manifests: JSON scene descriptions and the loader.

Layout:
{
  "format": "scene-v1",
  "body_model": "body.json",
  "cameras": {"cam0": {"fx","fy","cx","cy","width","height","near","far",
                        optional "rot": [9]|[3], "trans": [3]}},
  "frames": [{"image", "mask", "keypoints", "camera",
              "init_pose": {"theta": [J*3], "rot": [9]|[3], "trans": [3]}}]
}
Paths are relative to the manifest file. A frame may omit rot/trans in its
init_pose to inherit the camera-table extrinsics.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
import torch
from scipy.spatial.transform import Rotation

from ..errors import DataError
from ..geometry.body import FramePose
from ..geometry.camera import Camera
from .bodyfile import file_sha256, load_body_model
from .images import read_image
from .scene import FrameObservation, Scene

log = logging.getLogger(__name__)

FORMAT = "scene-v1"


def _rot_to_vec(rot_field) -> np.ndarray:
    arr = np.asarray(rot_field, dtype=np.float64)
    if arr.size == 3:
        return arr.reshape(3)
    if arr.size == 9:
        return Rotation.from_matrix(arr.reshape(3, 3)).as_rotvec()
    raise DataError("rot must be a 3-vector (axis-angle) or 9 values (row-major matrix)")


def load_keypoints(path: str | Path, width: int, height: int, frame_name: str) -> dict:
    try:
        with open(path) as f:
            records = json.load(f)
    except OSError as e:
        raise DataError(f"{frame_name}: cannot read keypoints {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"{frame_name}: malformed keypoints {path}: {e}") from e
    out = {}
    for rec in records:
        try:
            name = rec["name"]
            x, y = float(rec["x"]), float(rec["y"])
            conf = float(rec.get("confidence", 1.0))
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"{frame_name}: malformed keypoint record in {path}: {e}") from e
        if not (0 <= x < width and 0 <= y < height):
            log.warning("%s: keypoint %s out of bounds, confidence zeroed", frame_name, name)
            conf = 0.0
        out[name] = (np.array([x, y]), conf)
    return out


def write_keypoints(path: str | Path, keypoints: dict):
    records = [
        {"name": name, "x": float(xy[0]), "y": float(xy[1]), "confidence": float(conf)}
        for name, (xy, conf) in keypoints.items()
    ]
    with open(path, "w") as f:
        json.dump(records, f, indent=1)


def _parse_camera(name: str, spec: dict) -> Camera:
    try:
        return Camera(
            fx=float(spec["fx"]), fy=float(spec["fy"]),
            cx=float(spec["cx"]), cy=float(spec["cy"]),
            width=int(spec["width"]), height=int(spec["height"]),
            near=float(spec.get("near", 0.01)), far=float(spec.get("far", 100.0)),
        )
    except KeyError as e:
        raise DataError(f"camera {name!r}: missing field {e}") from e


def load_scene(manifest_path: str | Path) -> Scene:
    """Parse a scene-v1 manifest and decode every referenced file.

    Masks are thresholded at 0.5, images zeroed outside the mask; a frame
    with an empty foreground or mismatched resolution is rejected.
    """
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    try:
        with open(manifest_path) as f:
            doc = json.load(f)
    except OSError as e:
        raise DataError(f"cannot read manifest {manifest_path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"malformed manifest {manifest_path}: {e}") from e
    if doc.get("format") != FORMAT:
        raise DataError(f"{manifest_path}: unsupported scene format {doc.get('format')!r}")

    body_path = base / doc["body_model"]
    if not body_path.exists():
        raise DataError(f"{manifest_path}: body model file missing: {body_path}")
    body = load_body_model(body_path)
    j = body.num_joints

    cameras = {name: _parse_camera(name, spec) for name, spec in doc.get("cameras", {}).items()}
    cam_extr = {
        name: spec for name, spec in doc.get("cameras", {}).items()
        if "rot" in spec or "trans" in spec
    }

    frames: list[FrameObservation] = []
    resolution = None
    for i, rec in enumerate(doc.get("frames", [])):
        name = rec.get("name", f"frame{i}")
        cam_id = rec.get("camera")
        if cam_id not in cameras:
            raise DataError(f"{name}: unknown camera {cam_id!r}")
        cam = cameras[cam_id]
        for key in ("image", "mask", "keypoints"):
            if key not in rec:
                raise DataError(f"{name}: missing {key!r} entry")
            if not (base / rec[key]).exists():
                raise DataError(f"{name}: {key} file missing: {base / rec[key]}")
        image = read_image(base / rec["image"])
        if image.ndim != 3:
            raise DataError(f"{name}: image must be RGB")
        mask_raw = read_image(base / rec["mask"])
        if mask_raw.ndim != 2:
            raise DataError(f"{name}: mask must be grayscale")
        if image.shape[:2] != mask_raw.shape:
            raise DataError(f"{name}: image/mask resolution mismatch")
        if resolution is None:
            resolution = image.shape[:2]
        elif image.shape[:2] != resolution:
            raise DataError(f"{name}: resolution differs from the first frame")
        if image.shape[:2] != (cam.height, cam.width):
            raise DataError(f"{name}: image resolution does not match camera {cam_id!r}")
        mask = (mask_raw >= 0.5).astype(np.float64)
        if mask.sum() == 0:
            raise DataError(f"{name}: empty foreground mask")
        image = image * mask[:, :, None]

        keypoints = load_keypoints(base / rec["keypoints"], cam.width, cam.height, name)

        pose_spec = rec.get("init_pose", {})
        theta = np.asarray(pose_spec.get("theta", np.zeros(j * 3)), dtype=np.float64)
        if theta.size != j * 3:
            raise DataError(f"{name}: init_pose theta must have {j * 3} values")
        extr = cam_extr.get(cam_id, {})
        rot_field = pose_spec.get("rot", extr.get("rot"))
        trans_field = pose_spec.get("trans", extr.get("trans"))
        if rot_field is None or trans_field is None:
            raise DataError(f"{name}: init pose needs rot and trans (frame or camera table)")
        pose = FramePose(
            theta=torch.as_tensor(theta.reshape(j, 3)),
            rot_vec=torch.as_tensor(_rot_to_vec(rot_field)),
            trans=torch.as_tensor(np.asarray(trans_field, dtype=np.float64).reshape(3)),
        )
        frames.append(FrameObservation(
            image=torch.as_tensor(image),
            mask=torch.as_tensor(mask),
            keypoints=keypoints,
            camera=cam,
            init_pose=pose,
            name=name,
        ))

    return Scene(
        body=body,
        frames=frames,
        body_path=str(body_path),
        body_hash=file_sha256(body_path),
        manifest_dir=str(base),
        extras={"cameras": cameras, "raw": doc},
    )
