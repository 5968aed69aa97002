"""Benchmark: compiled core vs pure-numpy fallback on the hot kernels.

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np
import torch

from meshavatar.geometry import Camera, Mesh, project
from meshavatar.geometry.shapes import uv_sphere
from meshavatar.raster import _kernels_py as py
from meshavatar.raster import kernels
from meshavatar.raster.hard import face_validity


def sphere_scene(size: int):
    """Full-scale mesh (6890 verts / 13776 faces) filling ~half the frame."""
    mesh = uv_sphere()
    verts = mesh.vertices + torch.tensor([0.0, 0.0, 3.0], dtype=torch.float64)
    cam = Camera(fx=0.9 * size, fy=0.9 * size, cx=size / 2, cy=size / 2,
                 width=size, height=size, near=0.1, far=10.0)
    pm = project(cam, Mesh(verts, mesh.faces))
    rng = np.random.default_rng(0)
    colors = rng.uniform(0, 1, (mesh.num_faces, 3))
    return (
        np.ascontiguousarray(pm.xy.numpy()),
        np.ascontiguousarray(pm.depth.numpy()),
        np.ascontiguousarray(pm.faces.numpy()),
        face_validity(pm),
        colors,
    )


def timeit(fn, repeats=3):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    rows = []
    xy, z, faces, valid, colors = sphere_scene(512)

    t_c, a = timeit(lambda: kernels.hard_rasterize(xy, z, faces, valid, 512, 512))
    t_p, b = timeit(lambda: py.hard_rasterize(xy, z, faces, valid, 512, 512), repeats=1)
    rows.append(("hard_rasterize 512^2 / 13776 faces", t_c, t_p, float(np.abs(a[2] - b[2]).max())))

    xy2, z2, faces2, valid2, colors2 = sphere_scene(256)
    args = (xy2, z2, faces2, valid2, 256, 256, 0.1, 10.0, 1e-5, 1e-4, 0.0, colors2, np.zeros(3))
    t_c, fa = timeit(lambda: kernels.soft_forward(*args))
    t_p, fb = timeit(lambda: py.soft_forward(*args), repeats=1)
    rows.append(("soft_forward 256^2 / 13776 faces", t_c, t_p, float(np.abs(fa[0] - fb[0]).max())))

    rng = np.random.default_rng(2)
    g_rgb = rng.standard_normal((256, 256, 3))
    g_alpha = rng.standard_normal((256, 256))
    t_c, ba = timeit(lambda: kernels.soft_backward(*args, *fa[2:], fa[0], fa[1], g_rgb, g_alpha))
    t_p, bb = timeit(lambda: py.soft_backward(*args, *fb[2:], fb[0], fb[1], g_rgb, g_alpha), repeats=1)
    rows.append(("soft_backward 256^2 / 13776 faces", t_c, t_p, float(np.abs(ba[0] - bb[0]).max())))

    t01 = rng.uniform(0, 1, (100000, 3))
    tables = rng.standard_normal((16, 2 ** 19, 2))
    res = np.geomspace(16, 1024, 16).astype(np.int64)
    t_c, ea = timeit(lambda: kernels.hash_encode_forward(t01, tables, res))
    t_p, eb = timeit(lambda: py.hash_encode_forward(t01, tables, res), repeats=1)
    rows.append(("hash_encode 100k pts / L16 T2^19", t_c, t_p, float(np.abs(ea - eb).max())))

    sphere = uv_sphere()
    tris = np.ascontiguousarray(sphere.vertices.numpy()[sphere.faces.numpy()])
    pts = rng.normal(size=(10000, 3))
    t_c, na = timeit(lambda: kernels.nearest_dist2(pts, tris), repeats=1)
    t_p, nb = timeit(lambda: py.nearest_dist2(pts, tris), repeats=1)
    rows.append(("nearest_dist2 10k pts / 13776 tris", t_c, t_p, float(np.abs(na - nb).max())))

    print(f"backend: {kernels.BACKEND}")
    print(f"{'kernel':36s} {'compiled':>10s} {'python':>10s} {'speedup':>8s} {'max|diff|':>10s}")
    for name, tc, tp, diff in rows:
        print(f"{name:36s} {tc * 1e3:9.1f}ms {tp * 1e3:9.1f}ms {tp / tc:7.1f}x {diff:10.2e}")


if __name__ == "__main__":
    main()
