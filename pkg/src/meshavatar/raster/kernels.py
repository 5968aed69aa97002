"""Kernel backend selection and threading orchestration.

The compiled extension (meshavatar._core, Cython) provides the hot loops;
the pure-numpy module mirrors its semantics. The compiled path is picked at
import unless MESHAVATAR_PURE_PY=1 forces the fallback.

Determinism contract: results are bit-identical for any worker count.
Forward kernels partition pixels into tiles (disjoint writes, faces visited
in index order per pixel); backward kernels compute independent per-face
partials that are scattered serially in face order.
"""

from __future__ import annotations

import math
import os
import threading

import numpy as np

_core = None
if os.environ.get("MESHAVATAR_PURE_PY", "0") in ("", "0"):
    try:
        from .. import _core  # type: ignore
    except ImportError:
        _core = None

from . import _kernels_py as _py

HAVE_COMPILED = _core is not None
BACKEND = "compiled" if HAVE_COMPILED else "python"

_num_threads = 1


def set_num_threads(n: int):
    global _num_threads
    _num_threads = max(1, int(n))


def get_num_threads() -> int:
    return _num_threads


def _run_chunks(total: int, fn):
    """Run fn(lo, hi) over a contiguous partition of range(total)."""
    k = min(_num_threads, total) if total else 0
    if k <= 1:
        if total:
            fn(0, total)
        return
    bounds = [round(i * total / k) for i in range(k + 1)]
    workers = [
        threading.Thread(target=fn, args=(bounds[i], bounds[i + 1]))
        for i in range(k)
        if bounds[i] < bounds[i + 1]
    ]
    for t in workers:
        t.start()
    for t in workers:
        t.join()


def _tiles(w: int, h: int, tile: int) -> tuple[int, int]:
    return math.ceil(w / tile), math.ceil(h / tile)


def hard_rasterize(xy, z, faces, face_valid, w, h):
    if HAVE_COMPILED:
        face_img = np.full((h, w), -1, dtype=np.int64)
        bary = np.zeros((h, w, 3))
        depth = np.zeros((h, w))
        zbuf = np.full((h, w), np.inf)
        _core.hard_rasterize(xy, z, faces, face_valid, w, h, face_img, bary, depth, zbuf)
        return face_img, bary, depth
    return _py.hard_rasterize(xy, z, faces, face_valid, w, h)


def soft_forward(xy, z, faces, face_valid, w, h, near, far, sigma, gamma, bg_eps, colors, bg_color, tile=32):
    if HAVE_COMPILED:
        m = np.full((h, w), bg_eps)
        num = np.zeros((h, w, 3))
        den = np.zeros((h, w))
        ntx, nty = _tiles(w, h, tile)

        def chunk(lo, hi):
            _core.soft_forward_tiles(
                lo, hi, ntx, tile, xy, z, faces, face_valid, w, h,
                near, far, sigma, gamma, colors, m, num, den,
            )

        _run_chunks(ntx * nty, chunk)
        bg_w = np.exp((bg_eps - m) / gamma)
        denom = den + bg_w
        rgb = (num + bg_w[:, :, None] * np.asarray(bg_color)) / denom[:, :, None]
        alpha = den / denom
        return rgb, alpha, m, denom
    return _py.soft_forward(
        xy, z, faces, face_valid, w, h, near, far, sigma, gamma, bg_eps, colors, bg_color
    )


def soft_backward(
    xy, z, faces, face_valid, w, h, near, far, sigma, gamma, bg_eps,
    colors, bg_color, m, denom, rgb, alpha, grad_rgb, grad_alpha,
):
    if HAVE_COMPILED:
        nf = faces.shape[0]
        part_xy = np.zeros((nf, 3, 2))
        part_z = np.zeros((nf, 3))

        def chunk(lo, hi):
            _core.soft_backward_faces(
                lo, hi, xy, z, faces, face_valid, w, h, near, far,
                sigma, gamma, colors, m, denom, rgb, alpha,
                grad_rgb, grad_alpha, part_xy, part_z,
            )

        _run_chunks(nf, chunk)
        grad_xy = np.zeros_like(xy)
        grad_z = np.zeros_like(z)
        _core.scatter_face_partials(faces, part_xy, part_z, grad_xy, grad_z)
        return grad_xy, grad_z
    return _py.soft_backward(
        xy, z, faces, face_valid, w, h, near, far, sigma, gamma, bg_eps,
        colors, bg_color, m, denom, rgb, alpha, grad_rgb, grad_alpha,
    )


def silhouette_forward(xy, faces, face_valid, w, h, sigma, tile=32):
    if HAVE_COMPILED:
        prod = np.ones((h, w))
        ntx, nty = _tiles(w, h, tile)

        def chunk(lo, hi):
            _core.silhouette_forward_tiles(
                lo, hi, ntx, tile, xy, faces, face_valid, w, h, sigma, prod
            )

        _run_chunks(ntx * nty, chunk)
        return 1.0 - prod, prod
    return _py.silhouette_forward(xy, faces, face_valid, w, h, sigma)


def silhouette_backward(xy, faces, face_valid, w, h, sigma, prod, grad_sil):
    if HAVE_COMPILED:
        nf = faces.shape[0]
        part_xy = np.zeros((nf, 3, 2))

        def chunk(lo, hi):
            _core.silhouette_backward_faces(
                lo, hi, xy, faces, face_valid, w, h, sigma, prod, grad_sil, part_xy
            )

        _run_chunks(nf, chunk)
        grad_xy = np.zeros_like(xy)
        _core.scatter_face_partials_xy(faces, part_xy, grad_xy)
        return grad_xy
    return _py.silhouette_backward(xy, faces, face_valid, w, h, sigma, prod, grad_sil)


def hash_encode_forward(t01, tables, resolutions):
    if HAVE_COMPILED:
        n = t01.shape[0]
        levels, _, feat = tables.shape
        out = np.empty((n, levels * feat))
        _core.hash_encode_forward(t01, tables, resolutions, out)
        return out
    return _py.hash_encode_forward(t01, tables, resolutions)


def hash_encode_backward(t01, tables, resolutions, grad_out):
    if HAVE_COMPILED:
        grad_t = np.zeros_like(t01)
        grad_tab = np.zeros_like(tables)
        _core.hash_encode_backward(t01, tables, resolutions, grad_out, grad_t, grad_tab)
        return grad_t, grad_tab
    return _py.hash_encode_backward(t01, tables, resolutions, grad_out)


def point_triangle_dist2(points, tri):
    return _py.point_triangle_dist2(points, tri)


def nearest_dist2(points, tri_verts):
    """Exact min squared point-to-triangle distances (production path).

    Compiled backend walks a median-split BVH; the fallback brute-forces all
    triangles (identical values, slower).
    """
    if HAVE_COMPILED:
        from .bvh import build_bvh

        tree = build_bvh(tri_verts)
        out = np.empty(points.shape[0])
        _core.bvh_nearest_dist2(
            points, tri_verts, tree.node_min, tree.node_max, tree.node_left,
            tree.node_right, tree.node_start, tree.node_count, tree.tri_order, out,
        )
        return out
    return _py.nearest_dist2(points, tri_verts)
