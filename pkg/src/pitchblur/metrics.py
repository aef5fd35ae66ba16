"""Pose-error evaluation: mean per-joint position error over tracks.

Scores an externally estimated track against ground truth: per frame the
mean Euclidean joint distance, aggregated as the mean over all frames
present in both tracks. No root-centering or similarity alignment is
applied; the raw distances are the score.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import PoseTrack


@dataclass(frozen=True)
class EvalReport:
    """Per-frame losses plus their mean for one pred-vs-gt comparison."""

    frame_losses: tuple[tuple[int, float], ...]
    aggregate: float
    joint_count: int
    dims: int
    skipped_gt: tuple[int, ...] = field(default_factory=tuple)
    skipped_pred: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not self.frame_losses:
            raise ValueError("report needs at least one evaluated frame")
        mean = float(np.mean([loss for _, loss in self.frame_losses]))
        if abs(mean - self.aggregate) > 1e-9 * max(1.0, abs(mean)):
            raise ValueError("aggregate must equal the mean of the per-frame losses")

    @property
    def frame_count(self) -> int:
        return len(self.frame_losses)


def mpjpe(pred: PoseTrack, gt: PoseTrack) -> EvalReport:
    """Mean per-joint position error of pred against gt.

    Frames present in both tracks are evaluated; frames present in only
    one are listed as skipped rather than silently dropped.

    Raises:
        ValueError: Joint count or dimension mismatch, or zero overlapping
            frames.
    """
    if pred.joint_count != gt.joint_count or pred.dims != gt.dims:
        raise ValueError(
            f"track layout mismatch: pred {pred.joint_count}x{pred.dims} "
            f"vs gt {gt.joint_count}x{gt.dims}"
        )
    pred_by_id = {p.frame_id: p for p in pred.poses}
    gt_by_id = {p.frame_id: p for p in gt.poses}
    shared = sorted(pred_by_id.keys() & gt_by_id.keys())
    if not shared:
        raise ValueError("tracks share no frame ids")

    losses = []
    for fid in shared:
        dist = np.linalg.norm(pred_by_id[fid].joints - gt_by_id[fid].joints, axis=1)
        losses.append((fid, float(dist.mean())))
    return EvalReport(
        frame_losses=tuple(losses),
        aggregate=float(np.mean([loss for _, loss in losses])),
        joint_count=pred.joint_count,
        dims=pred.dims,
        skipped_gt=tuple(sorted(gt_by_id.keys() - pred_by_id.keys())),
        skipped_pred=tuple(sorted(pred_by_id.keys() - gt_by_id.keys())),
    )


def compare_runs(reports: Sequence[EvalReport], labels: Sequence[str]) -> str:
    """Comma-delimited comparison table, best (lowest) aggregate first.

    Raises:
        ValueError: No reports, or label count mismatch.
    """
    if not reports:
        raise ValueError("at least one report required")
    if len(reports) != len(labels):
        raise ValueError(f"{len(reports)} reports vs {len(labels)} labels")
    ranked = sorted(zip(labels, reports), key=lambda item: item[1].aggregate)
    lines = ["label,mean_loss,frames"]
    for label, report in ranked:
        lines.append(f"{label},{format(report.aggregate, '.9g')},{report.frame_count}")
    return "\n".join(lines) + "\n"


def save_report(report: EvalReport, path: str | Path) -> None:
    """Machine-readable report: JSON with per-frame and aggregate losses."""
    data = {
        "aggregate": report.aggregate,
        "frame_count": report.frame_count,
        "joint_count": report.joint_count,
        "dims": report.dims,
        "frame_losses": [[fid, loss] for fid, loss in report.frame_losses],
        "skipped_gt": list(report.skipped_gt),
        "skipped_pred": list(report.skipped_pred),
    }
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_report(path: str | Path) -> EvalReport:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return EvalReport(
        frame_losses=tuple((int(fid), float(loss)) for fid, loss in data["frame_losses"]),
        aggregate=float(data["aggregate"]),
        joint_count=int(data["joint_count"]),
        dims=int(data["dims"]),
        skipped_gt=tuple(data["skipped_gt"]),
        skipped_pred=tuple(data["skipped_pred"]),
    )
