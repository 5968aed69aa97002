"""Procedural primitive meshes."""

from __future__ import annotations

import numpy as np
import torch

from .meshops import Mesh


def uv_sphere(lat: int = 82, lon: int = 84, radius: float = 1.0) -> Mesh:
    """Closed triangulated sphere: lat*lon + 2 vertices, 2*lat*lon faces.

    The default (82, 84) yields 6890 vertices and 13776 faces, the size of
    the full-scale body mesh.
    """
    verts = [np.array([0.0, radius, 0.0])]
    for li in range(1, lat + 1):
        phi = np.pi * li / (lat + 1)
        for si in range(lon):
            ang = 2.0 * np.pi * si / lon
            verts.append(radius * np.array(
                [np.sin(phi) * np.cos(ang), np.cos(phi), np.sin(phi) * np.sin(ang)]
            ))
    verts.append(np.array([0.0, -radius, 0.0]))
    south = len(verts) - 1

    def ring(li):
        return 1 + (li - 1) * lon

    faces = []
    for si in range(lon):
        faces.append((0, ring(1) + si, ring(1) + (si + 1) % lon))
    for li in range(1, lat):
        for si in range(lon):
            a0 = ring(li) + si
            a1 = ring(li) + (si + 1) % lon
            b0 = ring(li + 1) + si
            b1 = ring(li + 1) + (si + 1) % lon
            faces.append((a0, b0, a1))
            faces.append((a1, b0, b1))
    for si in range(lon):
        faces.append((south, ring(lat) + (si + 1) % lon, ring(lat) + si))

    return Mesh(
        vertices=torch.as_tensor(np.asarray(verts), dtype=torch.float64),
        faces=torch.as_tensor(np.asarray(faces), dtype=torch.int64),
    )
