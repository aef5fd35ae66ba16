"""Pinhole projection and focal-length recovery tests."""

import numpy as np
import pytest

from pitchblur.camera import (
    CameraModel,
    OptimizerConfig,
    load_camera,
    load_extrinsics,
    loss_gradient,
    optimize_focal,
    project,
    reprojection_loss,
    save_camera,
    save_trace,
)
from pitchblur.core import Pose


def _make_scene(rng, f=1200.0, joints=18, noise=0.0, frame_id=0):
    """A 3D pose in front of the camera and its noisy projection."""
    pts = rng.uniform(-1.0, 1.0, size=(joints, 3))
    pts[:, 2] = rng.uniform(3.0, 8.0, size=joints)
    pose3d = Pose(frame_id=frame_id, joints=pts)
    cam = CameraModel(f=f, c=(960.0, 540.0))
    ann = project(pose3d, cam)
    if noise > 0.0:
        ann = Pose(
            frame_id=frame_id,
            joints=ann.joints + rng.normal(0.0, noise, size=ann.joints.shape),
        )
    return pose3d, ann, cam


def test_project_formula():
    pose = Pose(frame_id=0, joints=np.array([[1.0, -2.0, 4.0]]))
    cam = CameraModel(f=100.0, c=(10.0, 20.0))
    out = project(pose, cam)
    assert out.joints[0, 0] == pytest.approx(100.0 * 1.0 / 4.0 + 10.0)
    assert out.joints[0, 1] == pytest.approx(100.0 * -2.0 / 4.0 + 20.0)


def test_project_applies_extrinsics():
    # Rotate 90 degrees about Z: (x, y) -> (-y, x).
    r = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    t = np.array([0.0, 0.0, 2.0])
    cam = CameraModel(f=50.0, c=(0.0, 0.0), r_ext=r, t_ext=t)
    pose = Pose(frame_id=0, joints=np.array([[1.0, 0.0, 0.0]]))
    out = project(pose, cam)
    assert out.joints[0, 0] == pytest.approx(0.0)
    assert out.joints[0, 1] == pytest.approx(50.0 * 1.0 / 2.0)


def test_project_rejects_non_positive_depth():
    pose = Pose(frame_id=0, joints=np.array([[0.0, 0.0, -1.0]]))
    cam = CameraModel(f=100.0, c=(0.0, 0.0))
    with pytest.raises(ValueError):
        project(pose, cam)


def test_project_rejects_2d_pose():
    pose = Pose(frame_id=0, joints=np.array([[1.0, 2.0]]))
    cam = CameraModel(f=100.0, c=(0.0, 0.0))
    with pytest.raises(ValueError):
        project(pose, cam)


def test_camera_model_validates_rotation():
    bad = np.eye(3) * 2.0
    with pytest.raises(ValueError):
        CameraModel(f=100.0, c=(0.0, 0.0), r_ext=bad)
    reflect = np.diag([1.0, 1.0, -1.0])
    with pytest.raises(ValueError):
        CameraModel(f=100.0, c=(0.0, 0.0), r_ext=reflect)
    with pytest.raises(ValueError):
        CameraModel(f=-5.0, c=(0.0, 0.0))


def test_loss_zero_at_truth_and_positive_elsewhere():
    rng = np.random.default_rng(81)
    pose3d, ann, cam = _make_scene(rng)
    assert reprojection_loss(cam, pose3d, ann) == pytest.approx(0.0, abs=1e-12)
    off = CameraModel(f=cam.f * 1.1, c=cam.c)
    assert reprojection_loss(off, pose3d, ann) > 0.0


def test_loss_matches_manual_mean():
    rng = np.random.default_rng(82)
    pose3d, ann, cam = _make_scene(rng, noise=2.0)
    proj = project(pose3d, cam)
    manual = float(np.linalg.norm(proj.joints - ann.joints, axis=1).mean())
    assert reprojection_loss(cam, pose3d, ann) == pytest.approx(manual, rel=1e-12)


def test_loss_multi_frame_outer_mean():
    rng = np.random.default_rng(83)
    scenes = [_make_scene(rng, noise=1.0, frame_id=i) for i in range(3)]
    cam = scenes[0][2]
    pts = [s[0] for s in scenes]
    anns = [s[1] for s in scenes]
    per_frame = [reprojection_loss(cam, p, a) for p, a in zip(pts, anns)]
    combined = reprojection_loss(cam, pts, anns)
    assert combined == pytest.approx(float(np.mean(per_frame)), rel=1e-12)


def test_analytic_gradient_matches_finite_difference():
    rng = np.random.default_rng(84)
    for _ in range(30):
        pose3d, ann, cam = _make_scene(rng, f=float(rng.uniform(500, 2000)), noise=1.5)
        probe = CameraModel(f=cam.f * float(rng.uniform(0.7, 1.3)), c=cam.c)
        g_a = loss_gradient(probe, pose3d, ann, mode="analytic")
        g_fd = loss_gradient(probe, pose3d, ann, mode="finite_difference")
        assert g_a == pytest.approx(g_fd, rel=1e-4, abs=1e-10)


def test_gradient_zero_residual_contributes_zero():
    rng = np.random.default_rng(85)
    pose3d, ann, cam = _make_scene(rng)
    assert loss_gradient(cam, pose3d, ann) == 0.0


def test_gradient_rejects_unknown_mode():
    rng = np.random.default_rng(86)
    pose3d, ann, cam = _make_scene(rng)
    with pytest.raises(ValueError):
        loss_gradient(cam, pose3d, ann, mode="symbolic")


def test_optimize_recovers_focal_noiseless():
    rng = np.random.default_rng(87)
    pose3d, ann, cam = _make_scene(rng, f=1500.0)
    start = CameraModel(f=900.0, c=cam.c)
    opt = OptimizerConfig(learning_rate=1e5, tolerance=1e-12)
    fitted, trace = optimize_focal(start, pose3d, ann, opt)
    assert abs(fitted.f - 1500.0) / 1500.0 < 5e-3
    assert trace[0] == (900.0, pytest.approx(reprojection_loss(start, pose3d, ann)))
    losses = [loss for _, loss in trace]
    assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_optimize_raw_mode_diverges_with_huge_rate():
    rng = np.random.default_rng(88)
    pose3d, ann, cam = _make_scene(rng, f=1500.0)
    start = CameraModel(f=900.0, c=cam.c)
    opt = OptimizerConfig(learning_rate=1e9, backtracking=False, max_iters=50)
    with pytest.raises(RuntimeError):
        optimize_focal(start, pose3d, ann, opt)


def test_optimize_backtracking_survives_huge_rate():
    rng = np.random.default_rng(89)
    pose3d, ann, cam = _make_scene(rng, f=1500.0)
    start = CameraModel(f=900.0, c=cam.c)
    opt = OptimizerConfig(learning_rate=1e9, backtracking=True, tolerance=1e-12)
    fitted, _ = optimize_focal(start, pose3d, ann, opt)
    assert abs(fitted.f - 1500.0) / 1500.0 < 5e-3


def test_optimize_converged_at_start():
    rng = np.random.default_rng(90)
    pose3d, ann, cam = _make_scene(rng)
    fitted, trace = optimize_focal(cam, pose3d, ann)
    assert fitted.f == cam.f
    assert len(trace) == 1


def test_optimize_refine_translation_improves_offset_scene():
    rng = np.random.default_rng(91)
    pose3d, ann, cam = _make_scene(rng, f=1200.0)
    start = CameraModel(f=1000.0, c=cam.c, t_ext=np.array([0.05, -0.05, 0.1]))
    opt = OptimizerConfig(learning_rate=1e4, max_iters=2000, tolerance=1e-14)
    plain, _ = optimize_focal(start, pose3d, ann, opt)
    refined, _ = optimize_focal(start, pose3d, ann, opt, refine_translation=True)
    loss_plain = reprojection_loss(plain, pose3d, ann)
    loss_refined = reprojection_loss(refined, pose3d, ann)
    assert loss_refined <= loss_plain


def test_optimizer_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        OptimizerConfig(max_iters=0)
    with pytest.raises(ValueError):
        OptimizerConfig(tolerance=-1.0)
    with pytest.raises(ValueError):
        OptimizerConfig(gradient_mode="nope")


def test_camera_file_round_trip(tmp_path):
    r = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    cam = CameraModel(f=1234.5, c=(100.25, 200.75), r_ext=r, t_ext=np.array([1.0, -2.0, 3.0]))
    path = tmp_path / "camera.txt"
    save_camera(cam, path)
    back = load_camera(path)
    assert back.f == cam.f
    assert back.c == cam.c
    assert np.array_equal(back.r_ext, cam.r_ext)
    assert np.array_equal(back.t_ext, cam.t_ext)


def test_camera_file_missing_field(tmp_path):
    path = tmp_path / "camera.txt"
    path.write_text("f 100.0\nc 0.0 0.0\n")
    with pytest.raises(ValueError):
        load_camera(path)


def test_extrinsics_file(tmp_path):
    path = tmp_path / "extrinsics.txt"
    vals = [1, 0, 0, 0, 1, 0, 0, 0, 1, 0.5, -0.5, 2.0]
    path.write_text(" ".join(str(v) for v in vals))
    r, t = load_extrinsics(path)
    assert np.array_equal(r, np.eye(3))
    assert np.array_equal(t, np.array([0.5, -0.5, 2.0]))
    path.write_text("1 2 3")
    with pytest.raises(ValueError):
        load_extrinsics(path)


def test_trace_csv(tmp_path):
    path = tmp_path / "trace.csv"
    save_trace([(1000.0, 5.5), (1100.0, 2.25)], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,f,loss"
    assert lines[1].startswith("0,1000")
    assert lines[2].startswith("1,1100")
