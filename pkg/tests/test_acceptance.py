"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 2 and 4 run full optimizations and take several minutes each; the
others complete in seconds. Stated tolerances are pinned here.
"""

import time

import numpy as np
import pytest
import torch

from meshavatar.fit import grad_check
from meshavatar.fit.forward import STAGE_TEXTURE
from meshavatar.geometry import Camera, Mesh, adjacent_face_pairs, project
from meshavatar.geometry.shapes import uv_sphere
from meshavatar.losses import loss_face_area, loss_normal_consistency, loss_silhouette
from meshavatar.raster import SoftRasterConfig, rasterize_hard, shade_fragments, soft_render
from meshavatar.sceneio.metrics import point_mesh_distances, psnr, sample_surface
from meshavatar.texfield import HashGridConfig, TextureField

T = torch.float64


def _line(name: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] {name}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


class TestCriterion1GradientSuite:
    def test_gradients_match_finite_differences(self):
        t0 = time.time()
        report = grad_check(tolerance=1e-3, seed=0, resolution=32, coords_per_group=8)
        elapsed = time.time() - t0
        detail = f"max rel {report.max_rel_error:.2e}, {elapsed:.1f}s"
        _line("criterion 1: gradient suite rel<=1e-3 in <=60s",
              report.passed(1e-3) and elapsed <= 60.0, detail)


class TestCriterion2ToyCubeConcavity:
    def test_rgb_sil_recovers_dent_sil_only_does_not(self, tmp_path):
        from meshavatar.toycube import run_toycube

        t0 = time.time()
        report = run_toycube(tmp_path, views=12, size=128, mode="both", iters=1600, seed=0)
        elapsed = time.time() - t0
        ch_rgb = report["modes"]["rgb-sil"]["chamfer"]
        ch_sil = report["modes"]["sil-only"]["chamfer"]
        iou_rgb = report["modes"]["rgb-sil"]["train_iou_min"]
        iou_sil = report["modes"]["sil-only"]["train_iou_min"]
        detail = (f"chamfer rgb-sil {ch_rgb:.4f} vs sil-only {ch_sil:.4f} "
                  f"(ratio {ch_rgb / ch_sil:.3f}), IoU {iou_rgb:.3f}/{iou_sil:.3f}, {elapsed:.0f}s")
        ok = (ch_rgb <= 0.5 * ch_sil) and iou_rgb >= 0.98 and iou_sil >= 0.98 and elapsed <= 600
        _line("criterion 2: toy-cube concavity (ratio<=0.5, IoU>=0.98, <=10min)", ok, detail)


class TestCriterion3LossAnalytics:
    def test_closed_form_loss_values(self):
        # face-area minimum and zero gradient at D=0
        verts = torch.tensor([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=T)
        faces = torch.tensor([[0, 1, 2], [1, 3, 2]], dtype=torch.int64)
        d = torch.zeros(4, 3, dtype=T, requires_grad=True)
        mesh0 = Mesh(verts, faces)
        fa = loss_face_area(Mesh(verts + d, faces), mesh0)
        fa.backward()
        ok_fa = abs(float(fa.detach()) - 2.0 * 2) <= 1e-9 and float(d.grad.abs().max()) <= 1e-9

        # silhouette closed forms
        z = torch.zeros(4, 4, dtype=T)
        ones = torch.ones(4, 4, dtype=T)
        half_gt = torch.zeros(4, 4, dtype=T)
        half_gt[:2] = 1.0
        half_pred = torch.zeros(4, 4, dtype=T)
        half_pred[0] = 1.0
        ok_sil = (
            abs(float(loss_silhouette(ones, ones))) <= 1e-9
            and abs(float(loss_silhouette(ones, z)) - 1.0) <= 1e-9
            and abs(float(loss_silhouette(half_pred, half_gt)) - 0.5) <= 1e-9
        )

        # normal consistency on the canonical 12-triangle cube
        cube_v = torch.tensor(
            [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
             [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]], dtype=T)
        cube_f = torch.tensor(
            [[0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7], [0, 1, 5], [0, 5, 4],
             [2, 3, 7], [2, 7, 6], [1, 2, 6], [1, 6, 5], [0, 4, 7], [0, 7, 3]],
            dtype=torch.int64)
        nc = float(loss_normal_consistency(Mesh(cube_v, cube_f), adjacent_face_pairs(cube_f)))
        ok_nc = abs(nc - 12.0) <= 1e-9

        _line("criterion 3: loss analytics to 1e-9",
              ok_fa and ok_sil and ok_nc,
              f"fa_min_ok={ok_fa} sil_ok={ok_sil} nc={nc:.12f}")


class TestCriterion4TwoStageAblation:
    def test_two_stage_beats_one_stage_on_heldout(self, tmp_path):
        from meshavatar.fit import FitConfig, fit
        from meshavatar.fit.forward import render_frame
        from meshavatar.losses import LossWeights
        from meshavatar.sceneio import load_scene
        from meshavatar.sceneio.metrics import metric_image
        from meshavatar.synth import SynthSpec, make_toy_scene

        t0 = time.time()
        paths = make_toy_scene(tmp_path, SynthSpec())
        train = load_scene(paths["train"])
        heldout = load_scene(paths["heldout"])
        weights = LossWeights(lambda_rgb=4.0, lambda_sil=4.0, lambda_kps=1.0,
                              lambda_nc=0.02, lambda_fa=0.5)

        def heldout_psnr(params, cfg):
            vals = []
            for obs in heldout.frames:
                img, _, _ = render_frame(train.body, params, obs.init_pose, obs.camera,
                                         cfg.soft, STAGE_TEXTURE)
                vals.append(metric_image(img, obs.image)[0])
            return vals

        means = {}
        for mode in ("two-stage", "one-stage"):
            cfg = FitConfig(stage1_iters=1500, stage2_iters=2000, seed=2,
                            hash_grid=HashGridConfig.desk_scale(), loss_weights=weights,
                            freeze_groups=("extrinsic_rot", "extrinsic_trans"))
            params, _ = fit(train, cfg, mode=mode)
            vals = heldout_psnr(params, cfg)
            means[mode] = float(np.mean(vals))
        elapsed = time.time() - t0
        detail = (f"two-stage {means['two-stage']:.2f} dB vs one-stage "
                  f"{means['one-stage']:.2f} dB, {elapsed:.0f}s")
        ok = (means["two-stage"] >= means["one-stage"]
              and means["two-stage"] >= 25.0 and elapsed <= 1800)
        _line("criterion 4: two-stage ablation (>=one-stage, >=25dB, <=30min)", ok, detail)


class TestCriterion5BranchRouting:
    def test_stop_grad_contracts(self):
        from meshavatar.fit.gradcheck import build_check_instance
        from meshavatar.fit.forward import soft_color_source
        from meshavatar.geometry.body import build_rest_mesh, lbs_pose, rodrigues
        from meshavatar.raster import soft_silhouette

        body, params, obs, soft = build_check_instance(0, 32)
        pose = params.frame_poses[0]
        for t in params.texture.parameters().values():
            t.requires_grad_(True)
            t.grad = None
        for t in (params.beta, params.offsets, pose.theta, pose.rot_vec, pose.trans):
            t.requires_grad_(True)
            t.grad = None

        rest = build_rest_mesh(body, params.beta, params.offsets)
        posed, _ = lbs_pose(rest, body, pose.theta, rodrigues(pose.rot_vec[None])[0], pose.trans)
        pm = project(obs.camera, posed)
        colors = soft_color_source(params, body.faces, 0)
        soft_term = (obs.image - soft_render(pm, colors, soft).rgb).abs().mean() \
            + soft_silhouette(pm, soft).sum()
        soft_term.backward()
        max_tex = max(
            (float(t.grad.abs().max()) if t.grad is not None else 0.0)
            for t in params.texture.parameters().values()
        )

        for t in (params.beta, params.offsets, pose.theta, pose.rot_vec, pose.trans):
            t.grad = None
        frags = rasterize_hard(pm)
        hard_term = (obs.image - shade_fragments(frags, params.texture.shade, body.faces)).abs().mean()
        hard_term.backward()
        max_geo = max(
            (float(t.grad.abs().max()) if t.grad is not None else 0.0)
            for t in (params.beta, params.offsets, pose.theta, pose.rot_vec, pose.trans)
        )
        _line("criterion 5: branch routing (cross grads <=1e-12)",
              max_tex <= 1e-12 and max_geo <= 1e-12,
              f"soft->texture {max_tex:.1e}, hard->geometry {max_geo:.1e}")


class TestCriterion6Determinism:
    def test_bit_identical_traces_across_thread_counts(self, tmp_path):
        from meshavatar.fit import FitConfig, fit
        from meshavatar.raster import set_num_threads
        from meshavatar.sceneio import load_scene
        from meshavatar.synth import SynthSpec, make_toy_scene

        paths = make_toy_scene(tmp_path, SynthSpec(n_poses=2, train_azimuths=(0.0,),
                                                   heldout=(), size=64))
        scene = load_scene(paths["train"])
        cfg = FitConfig(stage1_iters=10, stage2_iters=0, seed=5,
                        hash_grid=HashGridConfig(levels=2, table_size=512, n_min=2, n_max=8),
                        mlp_hidden=16)
        traces = []
        for threads in (1, 2, 8):
            set_num_threads(threads)
            try:
                _, rows = fit(scene, cfg)
            finally:
                set_num_threads(1)
            traces.append(rows)
        ok = traces[0] == traces[1] == traces[2]
        _line("criterion 6: bit-identical traces at 1/2/8 worker threads", ok,
              f"{len(traces[0])} iterations compared")


class TestCriterion7PerformanceSmoke:
    def test_render_times(self):
        mesh = uv_sphere()
        verts = mesh.vertices + torch.tensor([0.0, 0.0, 3.0], dtype=T)
        placed = Mesh(verts, mesh.faces)
        tf = TextureField.init_from_vertices(placed.vertices, HashGridConfig.full_scale(), seed=0)

        cam512 = Camera(fx=460.0, fy=460.0, cx=256, cy=256, width=512, height=512,
                        near=0.1, far=10.0)
        pm = project(cam512, placed)
        old_threads = torch.get_num_threads()
        torch.set_num_threads(1)
        try:
            rasterize_hard(pm)  # warm caches
            t0 = time.time()
            frags = rasterize_hard(pm)
            shade_fragments(frags, tf.shade, placed.faces)
            hard_time = time.time() - t0
        finally:
            torch.set_num_threads(old_threads)

        cam256 = Camera(fx=230.0, fy=230.0, cx=128, cy=128, width=256, height=256,
                        near=0.1, far=10.0)
        pm256 = project(cam256, placed)
        colors = torch.rand(mesh.num_faces, 3, dtype=T)
        cfg = SoftRasterConfig(tile_size=32)
        t0 = time.time()
        soft_render(pm256, colors, cfg)
        soft_time = time.time() - t0
        ok = hard_time <= 1.0 and soft_time <= 2.0
        _line("criterion 7: performance smoke (hard+shade<=1s @512^2, soft<=2s @256^2)",
              ok, f"hard+shade {hard_time:.2f}s, soft {soft_time:.2f}s")


class TestCriterion8MetricOracles:
    def test_chamfer_oracle_and_psnr_closed_forms(self):
        from meshavatar.raster import _kernels_py as fallback

        sphere = uv_sphere(lat=14, lon=16)
        bumped = Mesh(sphere.vertices * 1.03, sphere.faces)
        pts = sample_surface(bumped, 2000, seed=1)
        got = point_mesh_distances(pts, sphere)
        tris = np.ascontiguousarray(sphere.vertices.numpy()[sphere.faces.numpy()])
        oracle = np.sqrt(fallback.nearest_dist2(np.ascontiguousarray(pts), tris))
        chamfer_ok = float(np.abs(got - oracle).max()) <= 1e-9

        img = torch.rand(16, 16, 3, dtype=T)
        psnr_ok = (
            psnr(img, img) == 99.0
            and abs(psnr(torch.zeros(8, 8, 3, dtype=T), torch.ones(8, 8, 3, dtype=T))) <= 1e-12
            and abs(psnr(img * 0 + 0.6, img * 0 + 0.5) - 20.0) <= 1e-9
        )
        _line("criterion 8: metric oracles (chamfer 1e-9, psnr exact)",
              chamfer_ok and psnr_ok,
              f"max chamfer dev {float(np.abs(got - oracle).max()):.2e}")
