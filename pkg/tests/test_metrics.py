import numpy as np
import pytest

from pitchblur.core import Pose, PoseTrack
from pitchblur.metrics import (
    EvalReport,
    compare_runs,
    load_report,
    mpjpe,
    save_report,
)


def _make_track(rng, ids, joints=18, dims=3, offset=0.0):
    poses = tuple(
        Pose(frame_id=i, joints=rng.uniform(-2, 2, size=(joints, dims)) + offset)
        for i in ids
    )
    return PoseTrack(dims=dims, poses=poses, joint_count=joints)


def test_mpjpe_matches_scalar_oracle():
    rng = np.random.default_rng(111)
    ids = range(6)
    gt = _make_track(rng, ids)
    pred = _make_track(rng, ids)
    report = mpjpe(pred, gt)
    gt_by_id = {p.frame_id: p for p in gt.poses}
    for fid, loss in report.frame_losses:
        pred_pose = next(p for p in pred.poses if p.frame_id == fid)
        total = 0.0
        for a, b in zip(pred_pose.joints, gt_by_id[fid].joints):
            total += float(np.sqrt(((a - b) ** 2).sum()))
        assert loss == pytest.approx(total / 18, rel=1e-12)
    want = float(np.mean([loss for _, loss in report.frame_losses]))
    assert report.aggregate == pytest.approx(want, rel=1e-12)


def test_mpjpe_identical_tracks_zero():
    rng = np.random.default_rng(112)
    gt = _make_track(rng, range(4))
    report = mpjpe(gt, gt)
    assert report.aggregate == 0.0
    assert all(loss == 0.0 for _, loss in report.frame_losses)


def test_mpjpe_known_offset():
    rng = np.random.default_rng(113)
    gt = _make_track(rng, range(3), dims=3)
    shifted = PoseTrack(
        dims=3,
        poses=tuple(
            Pose(frame_id=p.frame_id, joints=p.joints + np.array([3.0, 4.0, 0.0]))
            for p in gt.poses
        ),
        joint_count=gt.joint_count,
    )
    report = mpjpe(shifted, gt)
    assert report.aggregate == pytest.approx(5.0, rel=1e-12)


def test_mpjpe_partial_overlap_records_skips():
    rng = np.random.default_rng(114)
    gt = _make_track(rng, [0, 1, 2, 3])
    pred = _make_track(rng, [2, 3, 4, 5])
    report = mpjpe(pred, gt)
    assert [fid for fid, _ in report.frame_losses] == [2, 3]
    assert report.skipped_gt == (0, 1)
    assert report.skipped_pred == (4, 5)


def test_mpjpe_rejects_layout_mismatch():
    rng = np.random.default_rng(115)
    gt = _make_track(rng, range(3), joints=18)
    pred = _make_track(rng, range(3), joints=17)
    with pytest.raises(ValueError):
        mpjpe(pred, gt)


def test_mpjpe_rejects_zero_overlap():
    rng = np.random.default_rng(116)
    gt = _make_track(rng, [0, 1])
    pred = _make_track(rng, [5, 6])
    with pytest.raises(ValueError):
        mpjpe(pred, gt)


def test_report_validates_aggregate():
    with pytest.raises(ValueError):
        EvalReport(frame_losses=((0, 1.0), (1, 3.0)), aggregate=5.0, joint_count=18, dims=3)
    with pytest.raises(ValueError):
        EvalReport(frame_losses=(), aggregate=0.0, joint_count=18, dims=3)


def test_compare_runs_sorted_ascending():
    def report(value):
        return EvalReport(
            frame_losses=((0, value),), aggregate=value, joint_count=18, dims=3
        )

    table = compare_runs([report(2.5), report(0.5), report(1.5)], ["b", "c", "a"])
    lines = table.strip().splitlines()
    assert lines[0] == "label,mean_loss,frames"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["c", "a", "b"]


def test_compare_runs_validates_inputs():
    with pytest.raises(ValueError):
        compare_runs([], [])
    report = EvalReport(frame_losses=((0, 1.0),), aggregate=1.0, joint_count=18, dims=3)
    with pytest.raises(ValueError):
        compare_runs([report], ["a", "b"])


def test_report_round_trip(tmp_path):
    rng = np.random.default_rng(117)
    gt = _make_track(rng, [0, 1, 5])
    pred = _make_track(rng, [0, 1, 5, 7])
    report = mpjpe(pred, gt)
    path = tmp_path / "report.json"
    save_report(report, path)
    loaded = load_report(path)
    assert loaded == report
