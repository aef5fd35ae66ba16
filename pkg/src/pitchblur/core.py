"""Domain types, dataset file I/O, and structural validation.

File conventions
----------------
Keypoint files are UTF-8 text, comma separated. The first line is a header
declaring the joint count, the coordinate dimension, and the joint names:

    J,gamma,name_1,...,name_J

Every following record is one frame: the integer frame id, then J groups of
gamma reals. Reals are written with nine significant digits, which makes
save(load(path)) byte-identical for files already in canonical form.

Bounding-box files are plain CSV rows of ``frame_id,x,y,w,h``.

Frames are 8-bit RGB PNG images whose numeric filename stem is the frame id.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

logger = logging.getLogger(__name__)

DEFAULT_JOINT_COUNT = 18


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _fmt_real(x: float) -> str:
    return format(float(x), ".9g")


@dataclass(frozen=True)
class Frame:
    """One RGB video frame with its integer sequence index."""

    id: int
    pixels: np.ndarray  # (H, W, 3) uint8, read-only

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"frame pixels must be (H, W, 3), got {px.shape}")
        if px.shape[0] <= 0 or px.shape[1] <= 0:
            raise ValueError("frame dimensions must be positive")
        if px.dtype != np.uint8:
            raise ValueError(f"frame pixels must be uint8, got {px.dtype}")
        object.__setattr__(self, "pixels", _freeze(px))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class FrameSequence:
    """An ordered pitch clip; all frames share one resolution."""

    frames: tuple[Frame, ...]
    source_tag: str = "dataset"

    def __post_init__(self) -> None:
        frames = tuple(self.frames)
        object.__setattr__(self, "frames", frames)
        ids = [f.id for f in frames]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ValueError(f"frame ids must be strictly increasing, got {ids}")
        dims = {(f.width, f.height) for f in frames}
        if len(dims) > 1:
            raise ValueError(f"mixed resolutions in sequence: {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def dims(self) -> tuple[int, int]:
        """(width, height) of the shared resolution."""
        if not self.frames:
            raise ValueError("empty sequence has no dimensions")
        return (self.frames[0].width, self.frames[0].height)


@dataclass(frozen=True)
class Pose:
    """Per-frame keypoints: a (J, gamma) coordinate array."""

    frame_id: int
    joints: np.ndarray
    joint_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        joints = np.asarray(self.joints, dtype=np.float64)
        if joints.ndim != 2 or joints.shape[1] not in (2, 3):
            raise ValueError(f"joints must be (J, 2) or (J, 3), got {joints.shape}")
        if not np.isfinite(joints).all():
            raise ValueError(f"non-finite coordinate in pose for frame {self.frame_id}")
        if self.joint_names and len(self.joint_names) != joints.shape[0]:
            raise ValueError("joint_names length disagrees with joint count")
        object.__setattr__(self, "joints", _freeze(joints))
        object.__setattr__(self, "joint_names", tuple(self.joint_names))

    @property
    def joint_count(self) -> int:
        return self.joints.shape[0]

    @property
    def dims(self) -> int:
        return self.joints.shape[1]


@dataclass(frozen=True)
class PoseTrack:
    """An ordered list of poses sharing joint count and dimension."""

    dims: int
    poses: tuple[Pose, ...]
    joint_count: int = DEFAULT_JOINT_COUNT
    joint_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.dims not in (2, 3):
            raise ValueError(f"dims must be 2 or 3, got {self.dims}")
        poses = tuple(self.poses)
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        for p in poses:
            if p.joint_count != self.joint_count:
                raise ValueError(
                    f"pose at frame {p.frame_id} has J={p.joint_count}, "
                    f"track declares J={self.joint_count}"
                )
            if p.dims != self.dims:
                raise ValueError(
                    f"pose at frame {p.frame_id} has gamma={p.dims}, "
                    f"track declares gamma={self.dims}"
                )
        ids = [p.frame_id for p in poses]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ValueError("non-monotone frame ids")

    def __len__(self) -> int:
        return len(self.poses)

    def frame_ids(self) -> list[int]:
        return [p.frame_id for p in self.poses]


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box for one frame."""

    frame_id: int
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box for frame {self.frame_id} must have w, h > 0")


# ---------------------------------------------------------------------------
# Keypoint file I/O
# ---------------------------------------------------------------------------


def load_pose_track(path: str | Path, dims: int | None = None) -> PoseTrack:
    """Load a keypoint file.

    Args:
        path: Keypoint file (format documented in the module docstring).
        dims: Expected coordinate dimension, 2 or 3; must agree with the
            file header. None accepts whatever the header declares.

    Returns:
        The parsed track. Rows whose numeric fields fail to parse are
        skipped; the skip count is reported through the module logger.

    Raises:
        FileNotFoundError: Missing file.
        ValueError: Empty track, header/dims disagreement, a row whose field
            count disagrees with the declared joint count, non-finite
            coordinates, or non-monotone frame ids.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"keypoint file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise ValueError(f"empty track: {path}")

    header = lines[0].split(",")
    if len(header) < 2:
        raise ValueError(f"malformed header in {path!s}: {lines[0]!r}")
    try:
        joint_count = int(header[0])
        gamma = int(header[1])
    except ValueError as exc:
        raise ValueError(f"malformed header in {path!s}: {lines[0]!r}") from exc
    if dims is not None and gamma != dims:
        raise ValueError(f"file declares gamma={gamma}, caller expected {dims}")
    names = tuple(header[2:])
    if names and len(names) != joint_count:
        raise ValueError(
            f"header names {len(names)} joints but declares J={joint_count}"
        )
    if not names:
        names = tuple(f"joint_{i:02d}" for i in range(joint_count))

    expected_fields = 1 + joint_count * gamma
    poses: list[Pose] = []
    skipped = 0
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        try:
            frame_id = int(fields[0])
        except ValueError:
            skipped += 1
            continue
        if len(fields) != expected_fields:
            raise ValueError(
                f"{path}:{lineno}: row has {len(fields)} fields, expected "
                f"{expected_fields} for J={joint_count}, gamma={gamma}"
            )
        try:
            coords = [float(v) for v in fields[1:]]
        except ValueError:
            skipped += 1
            continue
        if not all(math.isfinite(v) for v in coords):
            raise ValueError(f"{path}:{lineno}: non-finite coordinate")
        joints = np.array(coords, dtype=np.float64).reshape(joint_count, gamma)
        poses.append(Pose(frame_id=frame_id, joints=joints, joint_names=names))

    if skipped:
        logger.warning("skipped %d malformed row(s) while loading %s", skipped, path)
    if not poses:
        raise ValueError(f"empty track: {path}")
    ids = [p.frame_id for p in poses]
    if any(b <= a for a, b in zip(ids, ids[1:])):
        raise ValueError(f"non-monotone frame ids in {path}")
    return PoseTrack(dims=gamma, poses=tuple(poses), joint_count=joint_count, joint_names=names)


def save_pose_track(track: PoseTrack, path: str | Path) -> None:
    """Write a track in canonical keypoint-file form."""
    path = Path(path)
    names = track.joint_names or tuple(
        f"joint_{i:02d}" for i in range(track.joint_count)
    )
    out = [",".join([str(track.joint_count), str(track.dims), *names])]
    for pose in track.poses:
        flat = (_fmt_real(v) for v in pose.joints.reshape(-1))
        out.append(",".join([str(pose.frame_id), *flat]))
    path.write_text("\n".join(out) + "\n", encoding="utf-8")


def load_bounding_boxes(path: str | Path) -> dict[int, BoundingBox]:
    """Load a ``frame_id,x,y,w,h`` CSV into a frame-id keyed dict."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"bounding-box file not found: {path}")
    boxes: dict[int, BoundingBox] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 5:
            raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(fields)}")
        try:
            frame_id = int(fields[0])
            x, y, w, h = (float(v) for v in fields[1:])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: unparseable box row") from exc
        boxes[frame_id] = BoundingBox(frame_id=frame_id, x=x, y=y, w=w, h=h)
    return boxes


# ---------------------------------------------------------------------------
# Frame I/O
# ---------------------------------------------------------------------------

_NUMERIC_STEM = re.compile(r"^\d+$")


def load_frame_sequence(directory: str | Path, source_tag: str = "dataset") -> FrameSequence:
    """Load all numerically named PNG images in a directory, sorted by stem.

    Raises:
        FileNotFoundError: Missing directory.
        ValueError: No numerically named frames, mixed resolutions, or an
            unreadable image.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"frame directory not found: {directory}")
    paths = [
        p
        for p in directory.iterdir()
        if p.suffix.lower() == ".png" and _NUMERIC_STEM.match(p.stem)
    ]
    if not paths:
        raise ValueError(f"no frames in {directory}")
    paths.sort(key=lambda p: int(p.stem))
    frames = []
    for p in paths:
        try:
            with Image.open(p) as img:
                pixels = np.asarray(img.convert("RGB"), dtype=np.uint8)
        except OSError as exc:
            raise ValueError(f"unreadable image: {p}") from exc
        frames.append(Frame(id=int(p.stem), pixels=pixels))
    dims = {(f.width, f.height) for f in frames}
    if len(dims) > 1:
        raise ValueError(f"mixed resolutions in {directory}: {sorted(dims)}")
    return FrameSequence(frames=tuple(frames), source_tag=source_tag)


def save_frame_sequence(seq: FrameSequence, directory: str | Path) -> list[Path]:
    """Write each frame as ``<id:06d>.png``; returns the written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for frame in seq.frames:
        out = directory / f"{frame.id:06d}.png"
        Image.fromarray(np.asarray(frame.pixels)).save(out, format="PNG")
        written.append(out)
    return written


# ---------------------------------------------------------------------------
# Split validation
# ---------------------------------------------------------------------------

SPLIT_NAMES = ("train", "validation", "test")


@dataclass(frozen=True)
class SplitExpectation:
    """Reference dataset split configuration (sequence and frame counts)."""

    enabled: bool = True
    sequences: tuple[int, int, int] = (105, 15, 30)
    frames: tuple[int, int, int] = (21050, 2962, 5988)


@dataclass(frozen=True)
class SplitCounts:
    sequences: tuple[int, int, int]
    frames: tuple[int, int, int] | None = None


@dataclass(frozen=True)
class SplitReport:
    """Advisory comparison of actual split counts against the expectation."""

    skipped: bool
    statuses: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.skipped or all(v == "match" for v in self.statuses.values())

    def summary(self) -> str:
        if self.skipped:
            return "split check: skipped"
        parts = [f"{name}={status}" for name, status in self.statuses.items()]
        return "split check: " + ", ".join(parts)


def validate_split(counts: SplitCounts, expectation: SplitExpectation | None = None) -> SplitReport:
    """Compare per-split counts against the configured expectation.

    Purely advisory: mismatches are flagged in the report, never raised.
    """
    exp = expectation if expectation is not None else SplitExpectation()
    if not exp.enabled:
        return SplitReport(skipped=True)
    statuses: dict[str, str] = {}
    for i, name in enumerate(SPLIT_NAMES):
        ok_seq = counts.sequences[i] == exp.sequences[i]
        ok_frames = counts.frames is None or counts.frames[i] == exp.frames[i]
        statuses[name] = "match" if (ok_seq and ok_frames) else "mismatch"
    report = SplitReport(skipped=False, statuses=statuses)
    if not report.ok:
        logger.warning("%s", report.summary())
    return report
