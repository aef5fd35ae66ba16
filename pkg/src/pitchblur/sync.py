"""Temporal alignment of pose tracks under a one-to-one constraint.

Matches a ground-truth 3D pose track against an externally estimated track
by dynamic programming over a combined cost: a spatial term (mean squared
joint distance) plus a temporal term (one minus the cosine similarity of
the flattened poses). Classical time warping allows many-to-one matches;
here every element of the shorter track is injected monotonically into the
longer one, so each frame pairs with at most one pose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import FrameSequence, Pose, PoseTrack


@dataclass(frozen=True)
class SyncWeights:
    """Gains for the spatial (g_s) and temporal (g_t) cost terms."""

    g_s: float = 1.0
    g_t: float = 1.0

    def __post_init__(self) -> None:
        if self.g_s < 0 or self.g_t < 0:
            raise ValueError("weights must be non-negative")
        if self.g_s + self.g_t <= 0:
            raise ValueError("at least one weight must be positive")


@dataclass(frozen=True)
class Alignment:
    """A monotone one-to-one matching of track positions.

    pairs holds (gt_index, pred_index) tuples, strictly increasing in both
    coordinates; total_cost is the summed pair cost of the matching.
    """

    pairs: tuple[tuple[int, int], ...]
    total_cost: float

    def __post_init__(self) -> None:
        for (i0, j0), (i1, j1) in zip(self.pairs, self.pairs[1:]):
            if i1 <= i0 or j1 <= j0:
                raise ValueError("alignment pairs must be strictly increasing in both coordinates")

    @property
    def gt_indices(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.pairs)

    @property
    def pred_indices(self) -> tuple[int, ...]:
        return tuple(j for _, j in self.pairs)


def pose_pair_cost(gt: Pose, pred: Pose, w: SyncWeights = SyncWeights()) -> float:
    """Combined spatial-temporal mismatch between two poses.

    Returns g_s * (1/J) * sum of squared joint distances plus
    g_t * (1 - cosine similarity of the flattened coordinate vectors).
    The cosine of a zero vector with anything is defined as 0, so a
    degenerate pose still contributes the full temporal term.

    Raises:
        ValueError: Joint count or coordinate dimension mismatch.
    """
    if gt.joints.shape != pred.joints.shape:
        raise ValueError(
            f"pose shape mismatch: gt {gt.joints.shape} vs pred {pred.joints.shape}"
        )
    diff = gt.joints - pred.joints
    spatial = float(np.sum(diff * diff)) / gt.joints.shape[0]

    a = gt.joints.ravel()
    b = pred.joints.ravel()
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        cosine = 0.0
    else:
        # Clamp: rounding can push the ratio past 1, and the cost must
        # never go negative.
        cosine = min(1.0, max(-1.0, float(a @ b) / (norm_a * norm_b)))
    return w.g_s * spatial + w.g_t * (1.0 - cosine)


def _min_cost_injection(cost: np.ndarray) -> tuple[list[tuple[int, int]], float]:
    """Minimum-cost strictly monotone injection of rows into columns.

    cost is (m, n) with m <= n; every row must be matched to a distinct
    column, in increasing column order. Ties resolve toward the
    lexicographically smallest column sequence by preferring a match over a
    skip during the greedy walk of the suffix table.
    """
    m, n = cost.shape
    inf = math.inf
    # suffix[i][j]: min cost of matching rows i.. into columns j..
    suffix = [[inf] * (n + 2) for _ in range(m + 1)]
    for j in range(n + 1):
        suffix[m][j] = 0.0
    for i in range(m - 1, -1, -1):
        last_feasible = n - (m - i)
        for j in range(last_feasible, -1, -1):
            match = cost[i, j] + suffix[i + 1][j + 1]
            skip = suffix[i][j + 1] if j + 1 <= last_feasible else inf
            suffix[i][j] = match if match <= skip else skip

    pairs: list[tuple[int, int]] = []
    j = 0
    for i in range(m):
        while cost[i, j] + suffix[i + 1][j + 1] > suffix[i][j]:
            j += 1
        pairs.append((i, j))
        j += 1
    return pairs, suffix[0][0]


def align_sequences(
    gt_track: PoseTrack, pred_track: PoseTrack, w: SyncWeights = SyncWeights()
) -> Alignment:
    """Best one-to-one temporal alignment of two pose tracks.

    Every pose of the shorter track is matched; skips are permitted only on
    the longer track. The result minimizes the summed pair cost over all
    monotone one-to-one matchings; ties resolve toward the
    lexicographically smallest pair list.

    Raises:
        ValueError: Empty track, or joint count / coordinate dimension
            mismatch between the tracks.
    """
    if len(gt_track.poses) == 0 or len(pred_track.poses) == 0:
        raise ValueError("cannot align an empty track")
    if gt_track.joint_count != pred_track.joint_count or gt_track.dims != pred_track.dims:
        raise ValueError(
            f"track layout mismatch: gt {gt_track.joint_count}x{gt_track.dims} "
            f"vs pred {pred_track.joint_count}x{pred_track.dims}"
        )

    gt_poses = gt_track.poses
    pred_poses = pred_track.poses
    gt_shorter = len(gt_poses) <= len(pred_poses)
    if gt_shorter:
        rows, cols = gt_poses, pred_poses
    else:
        rows, cols = pred_poses, gt_poses

    cost = np.empty((len(rows), len(cols)), dtype=np.float64)
    for i, rp in enumerate(rows):
        for j, cp in enumerate(cols):
            cost[i, j] = pose_pair_cost(rp, cp, w) if gt_shorter else pose_pair_cost(cp, rp, w)

    injection, _ = _min_cost_injection(cost)
    if gt_shorter:
        pairs = tuple(injection)
    else:
        pairs = tuple((j, i) for i, j in injection)
    total = math.fsum(cost[i, j] for i, j in injection)
    return Alignment(pairs=pairs, total_cost=total)


def alignment_pair_costs(
    gt_track: PoseTrack,
    pred_track: PoseTrack,
    alignment: Alignment,
    w: SyncWeights = SyncWeights(),
) -> list[float]:
    """Per-pair costs of an alignment, in pair order."""
    return [
        pose_pair_cost(gt_track.poses[i], pred_track.poses[j], w)
        for i, j in alignment.pairs
    ]


def trim_unannotated(seq: FrameSequence, alignment: Alignment) -> FrameSequence:
    """Drop frames whose positions are absent from the alignment.

    Frame position k is kept iff k appears among the alignment's pred
    indices; order is preserved.

    Raises:
        ValueError: Empty alignment, or a pred index outside the sequence.
    """
    if not alignment.pairs:
        raise ValueError("empty alignment")
    keep = set(alignment.pred_indices)
    bad = [j for j in keep if j < 0 or j >= len(seq)]
    if bad:
        raise ValueError(f"alignment indices {sorted(bad)} outside sequence of {len(seq)} frames")
    frames = tuple(frame for k, frame in enumerate(seq.frames) if k in keep)
    return FrameSequence(frames=frames, source_tag=seq.source_tag)


def cost_histogram(
    gt_track: PoseTrack,
    pred_track: PoseTrack,
    w: SyncWeights = SyncWeights(),
    bins: int = 10,
) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of all pairwise costs; a diagnostic, not part of alignment."""
    costs = [
        pose_pair_cost(g, p, w) for g in gt_track.poses for p in pred_track.poses
    ]
    return np.histogram(np.asarray(costs, dtype=np.float64), bins=bins)


def save_alignment(
    alignment: Alignment, pair_costs: Sequence[float], path: str | Path
) -> None:
    """Write `gt_index,pred_index,pair_cost` rows plus a total_cost trailer."""
    if len(pair_costs) != len(alignment.pairs):
        raise ValueError("one cost per pair required")
    lines = [
        f"{i},{j},{format(float(c), '.17g')}"
        for (i, j), c in zip(alignment.pairs, pair_costs)
    ]
    lines.append(f"total_cost,{format(float(alignment.total_cost), '.17g')}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_alignment(path: str | Path) -> tuple[Alignment, list[float]]:
    """Read an alignment file written by save_alignment."""
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines or not lines[-1].startswith("total_cost,"):
        raise ValueError(f"alignment file {path} missing total_cost trailer")
    total = float(lines[-1].split(",", 1)[1])
    pairs = []
    costs = []
    for ln in lines[:-1]:
        fields = ln.split(",")
        if len(fields) != 3:
            raise ValueError(f"malformed alignment row: {ln!r}")
        pairs.append((int(fields[0]), int(fields[1])))
        costs.append(float(fields[2]))
    return Alignment(pairs=tuple(pairs), total_cost=total), costs
