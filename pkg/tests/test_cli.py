"""Command-line interface: subcommands, exit codes, worker resolution."""

import numpy as np
import pytest

from pitchblur.cli import WORKERS_ENV, main
from pitchblur.core import (
    Frame,
    FrameSequence,
    Pose,
    PoseTrack,
    save_frame_sequence,
    save_pose_track,
)
from pitchblur.camera import CameraModel, load_camera, project


def _save_frames(tmp_path, rng, n=3, h=16, w=16, name="frames"):
    seq = FrameSequence(
        frames=tuple(
            Frame(id=i, pixels=rng.integers(0, 256, (h, w, 3), dtype=np.uint8))
            for i in range(n)
        )
    )
    save_frame_sequence(seq, tmp_path / name)
    return seq


def _save_tracks(tmp_path, rng, n_gt=3, n_pred=4, joints=4, dims=3):
    gt = PoseTrack(
        dims=dims,
        poses=tuple(
            Pose(frame_id=i, joints=rng.uniform(-1, 1, (joints, dims))) for i in range(n_gt)
        ),
        joint_count=joints,
    )
    pred = PoseTrack(
        dims=dims,
        poses=tuple(
            Pose(frame_id=i, joints=rng.uniform(-1, 1, (joints, dims)))
            for i in range(n_pred)
        ),
        joint_count=joints,
    )
    save_pose_track(gt, tmp_path / "gt.csv")
    save_pose_track(pred, tmp_path / "pred.csv")


def test_flow_then_augment_round_trip(tmp_path):
    rng = np.random.default_rng(141)
    _save_frames(tmp_path, rng)
    rc = main(
        ["flow", "--frames", str(tmp_path / "frames"), "--out", str(tmp_path / "flows")]
    )
    assert rc == 0
    assert len(list((tmp_path / "flows").glob("*.flo"))) == 2

    rc = main(
        [
            "augment",
            "--frames", str(tmp_path / "frames"),
            "--flows", str(tmp_path / "flows"),
            "--out", str(tmp_path / "augmented"),
            "--patch-mode", "fixed:8",
            "--seed", "3",
        ]
    )
    assert rc == 0
    assert len(list((tmp_path / "augmented").glob("*.png"))) == 3
    assert (tmp_path / "augmented" / "manifest.jsonl").is_file()


def test_sync_command(tmp_path, capsys):
    rng = np.random.default_rng(142)
    _save_tracks(tmp_path, rng)
    rc = main(
        [
            "sync",
            "--gt", str(tmp_path / "gt.csv"),
            "--pred", str(tmp_path / "pred.csv"),
            "--out", str(tmp_path / "alignment.csv"),
        ]
    )
    assert rc == 0
    assert (tmp_path / "alignment.csv").read_text().strip().splitlines()[-1].startswith(
        "total_cost,"
    )


def test_calibrate_command_recovers_focal(tmp_path):
    rng = np.random.default_rng(143)
    pts = rng.uniform(-1, 1, (8, 3))
    pts[:, 2] += 6.0
    pose3d = Pose(frame_id=0, joints=pts)
    cam = CameraModel(f=1400.0, c=(320.0, 240.0))
    ann = project(pose3d, cam)
    save_pose_track(PoseTrack(dims=3, poses=(pose3d,), joint_count=8), tmp_path / "p3.csv")
    save_pose_track(PoseTrack(dims=2, poses=(ann,), joint_count=8), tmp_path / "p2.csv")
    rc = main(
        [
            "calibrate",
            "--points3d", str(tmp_path / "p3.csv"),
            "--annotation", str(tmp_path / "p2.csv"),
            "--dims", "640x480",
            "--learning-rate", "1e5",
            "--tolerance", "1e-12",
            "--out-camera", str(tmp_path / "camera.txt"),
        ]
    )
    assert rc == 0
    fitted = load_camera(tmp_path / "camera.txt")
    assert abs(fitted.f - 1400.0) / 1400.0 < 5e-3
    assert (tmp_path / "camera.trace.csv").is_file()


def test_calibrate_requires_principal_or_dims(tmp_path, capsys):
    rng = np.random.default_rng(144)
    _save_tracks(tmp_path, rng)
    rc = main(
        [
            "calibrate",
            "--points3d", str(tmp_path / "gt.csv"),
            "--annotation", str(tmp_path / "pred.csv"),
            "--out-camera", str(tmp_path / "camera.txt"),
        ]
    )
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_enhance_command(tmp_path):
    rng = np.random.default_rng(145)
    _save_frames(tmp_path, rng, n=2)
    (tmp_path / "boxes.csv").write_text("0,2,2,10,10\n1,2,2,10,10\n")
    rc = main(
        [
            "enhance",
            "--frames", str(tmp_path / "frames"),
            "--boxes", str(tmp_path / "boxes.csv"),
            "--out", str(tmp_path / "enhanced"),
        ]
    )
    assert rc == 0
    assert len(list((tmp_path / "enhanced").glob("*.png"))) == 2


def test_eval_command(tmp_path):
    rng = np.random.default_rng(146)
    _save_tracks(tmp_path, rng, n_gt=3, n_pred=3, dims=2)
    rc = main(
        [
            "eval",
            "--pred", str(tmp_path / "pred.csv"),
            "--gt", str(tmp_path / "gt.csv"),
            "--out", str(tmp_path / "report.json"),
        ]
    )
    assert rc == 0
    assert (tmp_path / "report.json").is_file()
    assert (tmp_path / "report.csv").is_file()


def test_validate_command_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.yaml"
    good.write_text("seed: 4\n")
    assert main(["validate", "--config", str(good)]) == 0
    assert "config OK" in capsys.readouterr().out

    bad = tmp_path / "bad.yaml"
    bad.write_text("nonsense: 1\naugment:\n  patches: 0\n")
    assert main(["validate", "--config", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "unknown key: nonsense" in err
    assert "patches" in err


def test_pipeline_command_and_stage_failure_exit_code(tmp_path, capsys):
    rng = np.random.default_rng(147)
    _save_frames(tmp_path, rng, n=1)
    config = tmp_path / "config.yaml"
    config.write_text(
        "out_dir: out\nflow:\n  enabled: true\n  frames: frames\n  out: out/flows\n"
    )
    # One frame is a validation-clean config whose flow stage then fails.
    assert main(["pipeline", "--config", str(config)]) == 2

    ok = tmp_path / "noop.yaml"
    ok.write_text("out_dir: out\n")
    assert main(["pipeline", "--config", str(ok)]) == 0


def test_missing_input_file_is_validation_error(tmp_path, capsys):
    rc = main(
        [
            "sync",
            "--gt", str(tmp_path / "nope.csv"),
            "--pred", str(tmp_path / "nope2.csv"),
            "--out", str(tmp_path / "alignment.csv"),
        ]
    )
    assert rc == 1


def test_bad_argument_exits_one(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["augment", "--frames", str(tmp_path)])
    assert info.value.code == 1


def test_unknown_command_exits_one():
    with pytest.raises(SystemExit) as info:
        main(["serve"])
    assert info.value.code == 1


def test_workers_env_fallback(tmp_path, monkeypatch):
    rng = np.random.default_rng(148)
    _save_frames(tmp_path, rng, n=2)
    monkeypatch.setenv(WORKERS_ENV, "4")
    rc = main(
        ["flow", "--frames", str(tmp_path / "frames"), "--out", str(tmp_path / "flows")]
    )
    assert rc == 0
    monkeypatch.setenv(WORKERS_ENV, "not-a-number")
    rc = main(
        ["flow", "--frames", str(tmp_path / "frames"), "--out", str(tmp_path / "flows2")]
    )
    assert rc == 0


def test_workers_do_not_change_outputs(tmp_path):
    rng = np.random.default_rng(149)
    _save_frames(tmp_path, rng, n=4)
    base = [
        "augment",
        "--frames", str(tmp_path / "frames"),
        "--flows", str(tmp_path / "flows"),
        "--patch-mode", "fixed:8",
        "--seed", "9",
    ]
    main(["flow", "--frames", str(tmp_path / "frames"), "--out", str(tmp_path / "flows")])
    main(base + ["--out", str(tmp_path / "aug1"), "--workers", "1"])
    main(base + ["--out", str(tmp_path / "aug8"), "--workers", "8"])
    files1 = sorted((tmp_path / "aug1").glob("*"))
    files8 = sorted((tmp_path / "aug8").glob("*"))
    assert [p.name for p in files1] == [p.name for p in files8]
    for a, b in zip(files1, files8):
        assert a.read_bytes() == b.read_bytes()
