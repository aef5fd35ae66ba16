"""Pinhole projection and focal-length recovery.

The world-frame 3D pose of a reference frame is projected through a
pinhole camera and compared against a manually annotated 2D pose; the
focal length is then recovered by gradient descent on the mean Euclidean
reprojection error. Extrinsics are inputs: the descent optimizes the focal
length alone by default, with an optional joint refinement of the
translation for scenes where it is only roughly known.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Pose

FOCAL_MIN = 0.0
FOCAL_MAX = 1.0e6

_IDENTITY3 = np.eye(3, dtype=np.float64)
_ZERO3 = np.zeros(3, dtype=np.float64)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus world-to-camera extrinsics."""

    f: float
    c: tuple[float, float]
    r_ext: np.ndarray = _IDENTITY3
    t_ext: np.ndarray = _ZERO3

    def __post_init__(self) -> None:
        if not self.f > 0:
            raise ValueError(f"focal length must be positive, got {self.f}")
        r = np.asarray(self.r_ext, dtype=np.float64)
        t = np.asarray(self.t_ext, dtype=np.float64)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if t.shape != (3,):
            raise ValueError(f"translation must be a 3-vector, got {t.shape}")
        if np.max(np.abs(r @ r.T - np.eye(3))) > 1e-9:
            raise ValueError("rotation is not orthonormal")
        if abs(float(np.linalg.det(r)) - 1.0) > 1e-9:
            raise ValueError("rotation determinant must be +1")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "r_ext", r)
        object.__setattr__(self, "t_ext", t)


@dataclass(frozen=True)
class OptimizerConfig:
    """Descent settings for focal recovery.

    backtracking halves the step until the loss stops increasing; with it
    off, the raw fixed-step update runs under a divergence guard that
    aborts once f leaves (0, 1e6).
    """

    learning_rate: float = 1e-2
    max_iters: int = 500
    tolerance: float = 1e-8
    gradient_mode: str = "analytic"
    backtracking: bool = True

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tolerance < 0:
            raise ValueError("tolerance must be non-negative")
        if self.gradient_mode not in ("analytic", "finite_difference"):
            raise ValueError("gradient_mode must be 'analytic' or 'finite_difference'")


def project(points3d: Pose, cam: CameraModel) -> Pose:
    """Project a world-frame 3D pose to pixel coordinates.

    Per joint: X_c = R (dot) X_w + t, then u = f * X_c / Z_c + cx and
    v = f * Y_c / Z_c + cy.

    Raises:
        ValueError: A joint with camera-frame depth <= 0 (behind the
            camera), or a non-3D input pose.
    """
    if points3d.joints.shape[1] != 3:
        raise ValueError(f"projection needs 3D joints, got {points3d.joints.shape[1]}D")
    cam_pts = points3d.joints @ cam.r_ext.T + cam.t_ext
    z = cam_pts[:, 2]
    if np.any(z <= 0):
        bad = int(np.argmin(z))
        raise ValueError(f"joint {bad} has non-positive depth {z[bad]:.6g}")
    u = cam.f * cam_pts[:, 0] / z + cam.c[0]
    v = cam.f * cam_pts[:, 1] / z + cam.c[1]
    return Pose(
        frame_id=points3d.frame_id,
        joints=np.stack([u, v], axis=1),
        joint_names=points3d.joint_names,
    )


def _as_pose_list(poses: Pose | Sequence[Pose]) -> list[Pose]:
    return [poses] if isinstance(poses, Pose) else list(poses)


def reprojection_loss(
    cam: CameraModel,
    points3d: Pose | Sequence[Pose],
    annotated2d: Pose | Sequence[Pose],
) -> float:
    """Mean Euclidean distance between projected and annotated joints.

    Single poses give the per-frame mean over joints; lists of reference
    frames add an outer mean over frames.

    Raises:
        ValueError: Frame count or joint layout mismatch; propagated
            projection errors.
    """
    pts = _as_pose_list(points3d)
    anns = _as_pose_list(annotated2d)
    if len(pts) != len(anns):
        raise ValueError(f"{len(pts)} 3D poses vs {len(anns)} annotations")
    if not pts:
        raise ValueError("at least one reference frame required")
    per_frame = []
    for p3, ann in zip(pts, anns):
        proj = project(p3, cam)
        if ann.joints.shape != proj.joints.shape:
            raise ValueError(
                f"annotation shape {ann.joints.shape} does not match projection "
                f"{proj.joints.shape}"
            )
        dist = np.linalg.norm(proj.joints - ann.joints, axis=1)
        per_frame.append(float(dist.mean()))
    return float(np.mean(per_frame))


def loss_gradient(
    cam: CameraModel,
    points3d: Pose | Sequence[Pose],
    annotated2d: Pose | Sequence[Pose],
    mode: str = "analytic",
) -> float:
    """d(reprojection_loss)/df.

    The analytic form sums r (dot) (X_c/Z_c, Y_c/Z_c) / |r| per joint,
    where r is the pixel residual; a joint with zero residual sits at the
    kink of the Euclidean norm and contributes 0 by convention. The
    finite_difference mode uses a central difference with step
    h = max(1e-6 * f, 1e-3).
    """
    if mode == "finite_difference":
        h = max(1e-6 * cam.f, 1e-3)
        lo = replace(cam, f=cam.f - h)
        hi = replace(cam, f=cam.f + h)
        return (
            reprojection_loss(hi, points3d, annotated2d)
            - reprojection_loss(lo, points3d, annotated2d)
        ) / (2.0 * h)
    if mode != "analytic":
        raise ValueError(f"unknown gradient mode {mode!r}")

    pts = _as_pose_list(points3d)
    anns = _as_pose_list(annotated2d)
    if len(pts) != len(anns):
        raise ValueError(f"{len(pts)} 3D poses vs {len(anns)} annotations")
    total = 0.0
    for p3, ann in zip(pts, anns):
        cam_pts = p3.joints @ cam.r_ext.T + cam.t_ext
        z = cam_pts[:, 2]
        if np.any(z <= 0):
            raise ValueError("joint behind camera")
        xhat = cam_pts[:, 0] / z
        yhat = cam_pts[:, 1] / z
        # Same association order as project(): (f * x) / z, not f * (x / z).
        # Annotations produced by projecting through this very camera must
        # yield exactly zero residuals so the kink convention applies.
        u = cam.f * cam_pts[:, 0] / z + cam.c[0]
        v = cam.f * cam_pts[:, 1] / z + cam.c[1]
        ru = u - ann.joints[:, 0]
        rv = v - ann.joints[:, 1]
        norms = np.sqrt(ru * ru + rv * rv)
        contrib = np.zeros_like(norms)
        nz = norms > 0.0
        contrib[nz] = (ru[nz] * xhat[nz] + rv[nz] * yhat[nz]) / norms[nz]
        total += float(contrib.mean())
    return total / len(pts)


def _t_gradient(
    cam: CameraModel,
    points3d: Pose | Sequence[Pose],
    annotated2d: Pose | Sequence[Pose],
    h: float = 1e-3,
) -> np.ndarray:
    """Central-difference gradient of the loss w.r.t. the translation."""
    grad = np.zeros(3, dtype=np.float64)
    for axis in range(3):
        delta = np.zeros(3)
        delta[axis] = h
        hi = replace(cam, t_ext=cam.t_ext + delta)
        lo = replace(cam, t_ext=cam.t_ext - delta)
        grad[axis] = (
            reprojection_loss(hi, points3d, annotated2d)
            - reprojection_loss(lo, points3d, annotated2d)
        ) / (2.0 * h)
    return grad


def optimize_focal(
    cam0: CameraModel,
    points3d: Pose | Sequence[Pose],
    annotated2d: Pose | Sequence[Pose],
    opt: OptimizerConfig = OptimizerConfig(),
    refine_translation: bool = False,
) -> tuple[CameraModel, list[tuple[float, float]]]:
    """Recover the focal length by descending the reprojection error.

    Iterates f <- f - alpha * dL/df until |loss change| drops below the
    tolerance or max_iters is hit. With backtracking on, a step that would
    raise the loss (or push f outside (0, 1e6)) is halved until accepted,
    so the loss trace is non-increasing; a step that underflows counts as
    converged. refine_translation additionally descends t_ext with the
    same accepted step scale.

    Returns:
        (camera with the recovered focal length, per-iteration (f, loss)
        trace including the starting point).

    Raises:
        RuntimeError: Divergence guard with backtracking off: f left
            (0, 1e6).
    """
    cam = cam0
    loss = reprojection_loss(cam, points3d, annotated2d)
    trace = [(cam.f, loss)]
    for _ in range(opt.max_iters):
        g_f = loss_gradient(cam, points3d, annotated2d, opt.gradient_mode)
        g_t = (
            _t_gradient(cam, points3d, annotated2d)
            if refine_translation
            else np.zeros(3)
        )
        if g_f == 0.0 and not np.any(g_t):
            break

        if opt.backtracking:
            alpha = opt.learning_rate
            accepted = None
            while alpha > 1e-18 * opt.learning_rate:
                f_new = cam.f - alpha * g_f
                if FOCAL_MIN < f_new < FOCAL_MAX:
                    cand = replace(cam, f=f_new, t_ext=cam.t_ext - alpha * g_t)
                    try:
                        loss_new = reprojection_loss(cand, points3d, annotated2d)
                    except ValueError:
                        loss_new = math.inf
                    if loss_new <= loss:
                        accepted = (cand, loss_new)
                        break
                alpha *= 0.5
            if accepted is None:
                break
            cam_new, loss_new = accepted
        else:
            f_new = cam.f - opt.learning_rate * g_f
            if not FOCAL_MIN < f_new < FOCAL_MAX:
                raise RuntimeError(
                    f"focal length diverged to {f_new:.6g}; "
                    f"must stay inside ({FOCAL_MIN:g}, {FOCAL_MAX:g})"
                )
            cam_new = replace(cam, f=f_new, t_ext=cam.t_ext - opt.learning_rate * g_t)
            loss_new = reprojection_loss(cam_new, points3d, annotated2d)

        delta = abs(loss - loss_new)
        cam, loss = cam_new, loss_new
        trace.append((cam.f, loss))
        if delta < opt.tolerance:
            break
    return cam, trace


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def save_camera(cam: CameraModel, path: str | Path) -> None:
    """Text camera file: f, principal point, rotation rows, translation."""
    fmt = lambda x: format(float(x), ".17g")  # noqa: E731
    lines = [
        f"f {fmt(cam.f)}",
        f"c {fmt(cam.c[0])} {fmt(cam.c[1])}",
        "R " + " ".join(fmt(x) for x in cam.r_ext.ravel()),
        "t " + " ".join(fmt(x) for x in cam.t_ext),
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_camera(path: str | Path) -> CameraModel:
    fields: dict[str, list[float]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        key, *vals = line.split()
        fields[key] = [float(v) for v in vals]
    missing = {"f", "c", "R", "t"} - fields.keys()
    if missing:
        raise ValueError(f"camera file {path} missing fields {sorted(missing)}")
    return CameraModel(
        f=fields["f"][0],
        c=(fields["c"][0], fields["c"][1]),
        r_ext=np.array(fields["R"], dtype=np.float64).reshape(3, 3),
        t_ext=np.array(fields["t"], dtype=np.float64),
    )


def load_extrinsics(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """12 whitespace-separated reals: row-major rotation then translation."""
    values = [float(tok) for tok in Path(path).read_text(encoding="utf-8").split()]
    if len(values) != 12:
        raise ValueError(f"extrinsics file {path} must hold 12 reals, got {len(values)}")
    arr = np.array(values, dtype=np.float64)
    return arr[:9].reshape(3, 3), arr[9:]


def save_trace(trace: list[tuple[float, float]], path: str | Path) -> None:
    """Convergence trace CSV: iteration, focal length, loss."""
    lines = ["iteration,f,loss"]
    for i, (f, loss) in enumerate(trace):
        lines.append(f"{i},{format(f, '.17g')},{format(loss, '.17g')}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
