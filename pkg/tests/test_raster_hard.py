import numpy as np
import pytest
import torch

from meshavatar.geometry import Camera, Mesh, project
from meshavatar.raster import face_color_shader, rasterize_hard, shade_fragments

T = torch.float64


def tt(x):
    return torch.as_tensor(x, dtype=T)


def make_pm(verts, faces, w=32, h=32, fx=1.0, near=0.01):
    """Screen-space helper: verts given directly as (x_px, y_px, z)."""
    cam = Camera(fx=fx, fy=fx, cx=0.0, cy=0.0, width=w, height=h, near=near, far=100.0)
    v = tt(verts)
    # invert the pinhole so projected pixels equal the requested coordinates
    xyz = torch.stack([v[:, 0] * v[:, 2] / fx, v[:, 1] * v[:, 2] / fx, v[:, 2]], dim=1)
    return project(cam, Mesh(xyz, torch.as_tensor(faces, dtype=torch.int64)))


class TestHardRaster:
    def test_full_frame_triangle(self):
        pm = make_pm([[-40, -40, 2], [200, -40, 2], [-40, 200, 2]], [[0, 1, 2]])
        frags = rasterize_hard(pm)
        assert bool(frags.covered.all())
        sums = frags.bary.sum(dim=2)
        assert torch.allclose(sums, torch.ones_like(sums), atol=1e-9)

    def test_depth_test_nearest_wins(self):
        pm = make_pm(
            [[-40, -40, 2], [200, -40, 2], [-40, 200, 2],
             [-40, -40, 1], [200, -40, 1], [-40, 200, 1]],
            [[0, 1, 2], [3, 4, 5]],
        )
        frags = rasterize_hard(pm)
        assert bool((frags.face[frags.covered] == 1).all())
        assert torch.allclose(frags.depth[frags.covered], torch.ones_like(frags.depth[frags.covered]))

    def test_pixel_at_vertex_gets_unit_bary(self):
        # vertex exactly at the center of pixel (4,4)
        pm = make_pm([[4.5, 4.5, 2], [20.5, 4.5, 2], [4.5, 20.5, 2]], [[0, 1, 2]])
        frags = rasterize_hard(pm)
        assert int(frags.face[4, 4]) == 0
        assert torch.allclose(frags.bary[4, 4], tt([1.0, 0.0, 0.0]), atol=1e-9)

    def test_perspective_correct_depth(self):
        # slanted triangle: depth interpolation must be harmonic, not affine
        pm = make_pm([[0, -40, 1.0], [0, 90, 1.0], [31, 25, 3.0]], [[0, 1, 2]])
        frags = rasterize_hard(pm)
        ys, xs = torch.nonzero(frags.covered, as_tuple=True)
        i = len(ys) // 2
        y, x = int(ys[i]), int(xs[i])
        w = frags.bary[y, x]
        z = tt([1.0, 1.0, 3.0])
        # perspective-correct bary w interpolates depth linearly in 1/z:
        assert float(frags.depth[y, x]) == pytest.approx(float((w * z).sum()), rel=1e-9)

    def test_behind_near_plane_faces_dropped(self):
        pm = make_pm(
            [[-40, -40, 2], [200, -40, 2], [-40, 200, 2],
             [-40, -40, 0.005], [200, -40, 0.005], [-40, 200, 1]],
            [[0, 1, 2], [3, 4, 5]],
        )
        frags = rasterize_hard(pm)
        assert bool((frags.face[frags.covered] == 0).all())

    def test_backfaces_not_culled(self):
        pm = make_pm([[-40, -40, 2], [-40, 200, 2], [200, -40, 2]], [[0, 1, 2]])
        frags = rasterize_hard(pm)
        assert bool(frags.covered.all())


class TestShadeFragments:
    def test_constant_shader(self):
        pm = make_pm([[-40, -40, 2], [200, -40, 2], [-40, 200, 2]], [[0, 1, 2]])
        frags = rasterize_hard(pm)
        shader = lambda ids, bary, faces: torch.full((ids.shape[0], 3), 0.25, dtype=T)
        img = shade_fragments(frags, shader, pm.faces)
        assert torch.allclose(img, torch.full_like(img, 0.25))

    def test_face_colors_shader(self):
        pm = make_pm(
            [[-40, -40, 2], [90, -40, 2], [-40, 90, 2],
             [200, 200, 2], [210, 200, 2], [200, 210, 2]],
            [[0, 1, 2], [3, 4, 5]],
        )
        frags = rasterize_hard(pm)
        colors = tt([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        img = shade_fragments(frags, face_color_shader(colors), pm.faces)
        assert torch.allclose(img[16, 16], tt([1.0, 0.0, 0.0]))

    def test_background_color_on_empty_pixels(self):
        pm = make_pm([[1, 1, 2], [5, 1, 2], [1, 5, 2]], [[0, 1, 2]])
        frags = rasterize_hard(pm)
        shader = lambda ids, bary, faces: torch.zeros((ids.shape[0], 3), dtype=T)
        img = shade_fragments(frags, shader, pm.faces, background_color=(0.1, 0.2, 0.3))
        assert torch.allclose(img[31, 31], tt([0.1, 0.2, 0.3]))

    def test_gradients_flow_to_colors_only(self):
        pm = make_pm([[-40, -40, 2], [200, -40, 2], [-40, 200, 2]], [[0, 1, 2]])
        frags = rasterize_hard(pm)
        colors = tt([[0.3, 0.5, 0.7]]).requires_grad_(True)
        img = shade_fragments(frags, face_color_shader(colors), pm.faces)
        img.sum().backward()
        assert colors.grad is not None
        # every covered pixel contributes 1 to each channel of the lone face
        assert torch.allclose(colors.grad, torch.full((1, 3), 32.0 * 32.0, dtype=T))
