"""Minimal OBJ export/import (v and f records, triangles only)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from ..errors import DataError
from ..geometry.meshops import Mesh


def export_obj(mesh: Mesh, path: str | Path):
    """Write `v x y z` / `f a b c` lines, 1-based indices, 9 significant digits."""
    if mesh.num_vertices == 0 or mesh.num_faces == 0:
        raise DataError("refusing to export an empty mesh")
    v = mesh.vertices.detach().numpy()
    f = mesh.faces.numpy()
    try:
        with open(path, "w") as out:
            for x, y, z in v:
                out.write(f"v {x:.9g} {y:.9g} {z:.9g}\n")
            for a, b, c in f:
                out.write(f"f {a + 1} {b + 1} {c + 1}\n")
    except OSError as e:
        raise DataError(f"cannot write OBJ {path}: {e}") from e


def import_obj(path: str | Path) -> Mesh:
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise DataError(f"cannot read OBJ {path}: {e}") from e
    for ln, line in enumerate(lines, 1):
        parts = line.split()
        if not parts or parts[0] in ("#", "vn", "vt", "s", "o", "g", "usemtl", "mtllib"):
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise DataError(f"{path}:{ln}: malformed vertex")
            verts.append([float(p) for p in parts[1:4]])
        elif parts[0] == "f":
            if len(parts) != 4:
                raise DataError(f"{path}:{ln}: only triangle faces supported")
            faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    if not verts or not faces:
        raise DataError(f"{path}: no geometry found")
    return Mesh(
        vertices=torch.as_tensor(np.asarray(verts), dtype=torch.float64),
        faces=torch.as_tensor(np.asarray(faces), dtype=torch.int64),
    )
