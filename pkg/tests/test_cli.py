import json
from pathlib import Path

import numpy as np
import pytest
import torch

from meshavatar.cli import main
from meshavatar.sceneio import import_obj, read_loss_log
from meshavatar.synth import SynthSpec, make_toy_scene


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_scene")
    make_toy_scene(out, SynthSpec(n_poses=2, train_azimuths=(0.0,), heldout=((90.0, 0),), size=64))
    return out


@pytest.fixture(scope="module")
def fit_config(tmp_path_factory):
    cfg = {
        "stage1_iters": 6,
        "stage2_iters": 6,
        "seed": 7,
        "hash_grid": {"levels": 2, "table_size": 512, "n_min": 2, "n_max": 8, "feat_dim": 2},
        "mlp_hidden": 16,
    }
    p = tmp_path_factory.mktemp("cfg") / "fit.json"
    p.write_text(json.dumps(cfg))
    return p


@pytest.fixture(scope="module")
def fitted(scene_dir, fit_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit_out")
    rc = main(["fit", "--scene", str(scene_dir / "scene.json"),
               "--config", str(fit_config), "--out", str(out)])
    assert rc == 0
    return out


class TestFitCommand:
    def test_outputs_exist(self, fitted, scene_dir):
        assert (fitted / "checkpoint.npz").exists()
        assert (fitted / "canonical.obj").exists()
        assert (fitted / "summary.json").exists()
        rows = read_loss_log(fitted / "loss_log.csv")
        assert len(rows) == 12
        renders = list((fitted / "renders").glob("*.ppm"))
        assert len(renders) == 2

    def test_rerun_identical_loss_rows(self, scene_dir, fit_config, fitted, tmp_path):
        out2 = tmp_path / "again"
        rc = main(["fit", "--scene", str(scene_dir / "scene.json"),
                   "--config", str(fit_config), "--out", str(out2)])
        assert rc == 0
        a = read_loss_log(fitted / "loss_log.csv")[:10]
        b = read_loss_log(out2 / "loss_log.csv")[:10]
        assert a == b

    def test_missing_mask_names_file(self, scene_dir, fit_config, tmp_path):
        doc = json.loads((scene_dir / "scene.json").read_text())
        doc["frames"][0]["mask"] = "images/gone.pgm"
        broken = tmp_path / "broken.json"
        # manifest paths resolve relative to the manifest file, keep it together
        broken = scene_dir / "broken.json"
        broken.write_text(json.dumps(doc))
        rc = main(["fit", "--scene", str(broken), "--config", str(fit_config),
                   "--out", str(tmp_path / "o")])
        assert rc == 3

    def test_unknown_flag_exits_2(self, scene_dir):
        with pytest.raises(SystemExit) as e:
            main(["fit", "--scene", str(scene_dir / "scene.json"), "--bogus", "x"])
        assert e.value.code == 2


class TestRenderExportEval:
    def test_render_training_frame_consistent_with_summary(self, fitted, scene_dir, tmp_path):
        out = tmp_path / "render"
        rc = main(["render", "--checkpoint", str(fitted / "checkpoint.npz"),
                   "--scene", str(scene_dir / "scene.json"), "--out", str(out),
                   "--frame", "0"])
        assert rc == 0
        summary = json.loads((fitted / "summary.json").read_text())
        from meshavatar.sceneio import load_scene, read_image
        from meshavatar.sceneio.metrics import psnr

        scene = load_scene(scene_dir / "scene.json")
        name = scene.frames[0].name
        img = read_image(out / f"{name}.ppm")
        got = psnr(img, scene.frames[0].image.numpy())
        logged = summary["frames"][name]["psnr"]
        assert got >= logged - 0.1

    def test_export_round_trip(self, fitted, scene_dir, tmp_path):
        obj = tmp_path / "mesh.obj"
        rc = main(["export-mesh", "--checkpoint", str(fitted / "checkpoint.npz"),
                   "--scene", str(scene_dir / "scene.json"), "--out", str(obj)])
        assert rc == 0
        mesh = import_obj(obj)
        from meshavatar.sceneio import load_checkpoint, load_scene
        from meshavatar.geometry.body import build_rest_mesh

        scene = load_scene(scene_dir / "scene.json")
        params, _ = load_checkpoint(fitted / "checkpoint.npz", scene.body)
        expect = build_rest_mesh(scene.body, params.beta, params.offsets)
        assert torch.allclose(mesh.vertices, expect.vertices.detach(), atol=1e-7)

    def test_posed_export(self, fitted, scene_dir, tmp_path):
        obj = tmp_path / "posed.obj"
        rc = main(["export-mesh", "--checkpoint", str(fitted / "checkpoint.npz"),
                   "--scene", str(scene_dir / "scene.json"), "--out", str(obj),
                   "--frame", "0"])
        assert rc == 0
        assert import_obj(obj).num_vertices > 0

    def test_eval_writes_metric_rows(self, fitted, scene_dir, tmp_path):
        out = tmp_path / "eval"
        rc = main(["eval", "--checkpoint", str(fitted / "checkpoint.npz"),
                   "--scene", str(scene_dir / "heldout.json"), "--out", str(out),
                   "--samples", "200"])
        assert rc == 0
        report = json.loads((out / "metrics.json").read_text())
        assert len(report["frames"]) == 1
        assert set(report["mean"]) == {"psnr", "ssim", "iou"}

    def test_missing_checkpoint_exits_3(self, scene_dir, tmp_path):
        rc = main(["render", "--checkpoint", str(tmp_path / "none.npz"),
                   "--scene", str(scene_dir / "scene.json"), "--out", str(tmp_path / "o")])
        assert rc == 3

    def test_novel_pose_render(self, fitted, scene_dir, tmp_path):
        scene_doc = json.loads((scene_dir / "scene.json").read_text())
        pose_file = tmp_path / "pose.json"
        pose_file.write_text(json.dumps(scene_doc["frames"][0]["init_pose"]))
        out = tmp_path / "novel"
        rc = main(["render", "--checkpoint", str(fitted / "checkpoint.npz"),
                   "--scene", str(scene_dir / "scene.json"), "--out", str(out),
                   "--pose", str(pose_file), "--camera", scene_doc["frames"][0]["camera"]])
        assert rc == 0
        assert list(out.glob("pose_*.ppm"))


class TestGradcheckCommand:
    def test_passes_at_default_tolerance(self, capsys):
        rc = main(["gradcheck", "--tol", "1e-3"])
        assert rc == 0
        assert "OK" in capsys.readouterr().out

    def test_fails_at_absurd_tolerance(self):
        rc = main(["gradcheck", "--tol", "1e-14"])
        assert rc == 4


class TestToyCubeCommand:
    def test_single_mode_smoke(self, tmp_path, capsys):
        rc = main(["toy-cube", "--out", str(tmp_path), "--views", "4", "--size", "48",
                   "--mode", "sil-only", "--iters", "4"])
        assert rc == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert "sil-only" in report["modes"]
        assert (tmp_path / "fit_sil-only.obj").exists()

    def test_both_mode_emits_two_rows(self, tmp_path, capsys):
        rc = main(["toy-cube", "--out", str(tmp_path), "--views", "4", "--size", "48",
                   "--mode", "both", "--iters", "4"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "rgb-sil" in out and "sil-only" in out

    def test_too_few_views_rejected(self, tmp_path):
        rc = main(["toy-cube", "--out", str(tmp_path), "--views", "2"])
        assert rc == 3
