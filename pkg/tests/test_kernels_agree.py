"""Compiled core vs pure-numpy fallback: identical semantics on random scenes."""

import numpy as np
import pytest

from meshavatar.raster import _kernels_py as py
from meshavatar.raster import kernels


requires_compiled = pytest.mark.skipif(
    not kernels.HAVE_COMPILED, reason="compiled core not built"
)


def random_scene(seed, n_verts=15, n_faces=8, w=48, h=40):
    rng = np.random.default_rng(seed)
    xy = rng.uniform(-6, max(w, h) + 6, (n_verts, 2))
    z = rng.uniform(0.8, 4.0, n_verts)
    faces = np.empty((n_faces, 3), dtype=np.int64)
    for i in range(n_faces):
        faces[i] = rng.choice(n_verts, 3, replace=False)
    valid = (rng.uniform(size=n_faces) > 0.1).astype(np.uint8)
    colors = rng.uniform(0, 1, (n_faces, 3))
    return xy, z, faces, valid, colors


@requires_compiled
@pytest.mark.parametrize("seed", range(5))
def test_hard_rasterize_agrees(seed):
    xy, z, faces, valid, colors = random_scene(seed)
    a = kernels.hard_rasterize(xy, z, faces, valid, 48, 40)
    b = py.hard_rasterize(xy, z, faces, valid, 48, 40)
    assert (a[0] == b[0]).all()
    np.testing.assert_allclose(a[1], b[1], atol=1e-12)
    np.testing.assert_allclose(a[2], b[2], atol=1e-12)


@requires_compiled
@pytest.mark.parametrize("seed", range(5))
def test_soft_forward_backward_agree(seed):
    xy, z, faces, valid, colors = random_scene(seed)
    args = (xy, z, faces, valid, 48, 40, 0.1, 10.0, 2e-3, 1e-2, 0.0, colors, np.zeros(3))
    fa = kernels.soft_forward(*args)
    fb = py.soft_forward(*args)
    for a, b in zip(fa, fb):
        np.testing.assert_allclose(a, b, atol=1e-12)
    rng = np.random.default_rng(seed + 100)
    g_rgb = rng.standard_normal((40, 48, 3))
    g_alpha = rng.standard_normal((40, 48))
    ba = kernels.soft_backward(*args, *fa[2:], fa[0], fa[1], g_rgb, g_alpha)
    bb = py.soft_backward(*args, *fb[2:], fb[0], fb[1], g_rgb, g_alpha)
    np.testing.assert_allclose(ba[0], bb[0], atol=1e-10)
    np.testing.assert_allclose(ba[1], bb[1], atol=1e-10)


@requires_compiled
@pytest.mark.parametrize("seed", range(3))
def test_silhouette_agrees(seed):
    xy, z, faces, valid, colors = random_scene(seed)
    sa, pa = kernels.silhouette_forward(xy, faces, valid, 48, 40, 2e-3)
    sb, pb = py.silhouette_forward(xy, faces, valid, 48, 40, 2e-3)
    np.testing.assert_allclose(sa, sb, atol=1e-12)
    rng = np.random.default_rng(seed + 7)
    g = rng.standard_normal((40, 48))
    ga = kernels.silhouette_backward(xy, faces, valid, 48, 40, 2e-3, pa, g)
    gb = py.silhouette_backward(xy, faces, valid, 48, 40, 2e-3, pb, g)
    np.testing.assert_allclose(ga, gb, atol=1e-10)


@requires_compiled
def test_hash_encode_agrees():
    rng = np.random.default_rng(0)
    t01 = rng.uniform(0, 1, (200, 3))
    tables = rng.standard_normal((4, 512, 2))
    res = np.array([2, 5, 11, 23], dtype=np.int64)
    np.testing.assert_array_equal(
        kernels.hash_encode_forward(t01, tables, res),
        py.hash_encode_forward(t01, tables, res),
    )
    go = rng.standard_normal((200, 8))
    ga = kernels.hash_encode_backward(t01, tables, res, go)
    gb = py.hash_encode_backward(t01, tables, res, go)
    np.testing.assert_allclose(ga[0], gb[0], atol=1e-10)
    np.testing.assert_allclose(ga[1], gb[1], atol=1e-12)


@requires_compiled
def test_nearest_dist2_bvh_vs_brute():
    rng = np.random.default_rng(1)
    tris = rng.normal(size=(120, 3, 3))
    pts = rng.normal(size=(300, 3)) * 2.0
    np.testing.assert_allclose(
        kernels.nearest_dist2(pts, tris), py.nearest_dist2(pts, tris), atol=1e-12
    )


@requires_compiled
def test_threaded_soft_render_bit_identical():
    xy, z, faces, valid, colors = random_scene(9, n_verts=30, n_faces=18, w=96, h=96)
    args = (xy, z, faces, valid, 96, 96, 0.1, 10.0, 2e-3, 1e-2, 0.0, colors, np.zeros(3))
    rng = np.random.default_rng(2)
    g_rgb = rng.standard_normal((96, 96, 3))
    g_alpha = rng.standard_normal((96, 96))
    results = []
    for threads in (1, 2, 8):
        kernels.set_num_threads(threads)
        try:
            fwd = kernels.soft_forward(*args, tile=32)
            bwd = kernels.soft_backward(*args, *fwd[2:], fwd[0], fwd[1], g_rgb, g_alpha)
        finally:
            kernels.set_num_threads(1)
        results.append((fwd, bwd))
    for fwd, bwd in results[1:]:
        for a, b in zip(fwd, results[0][0]):
            assert np.array_equal(a, b)
        for a, b in zip(bwd, results[0][1]):
            assert np.array_equal(a, b)
