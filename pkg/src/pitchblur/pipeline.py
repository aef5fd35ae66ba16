"""Stage orchestration and reproducibility plumbing.

Runs the enabled stages of a validated PipelineConfig in a fixed order
(enhance, flow, augment, sync, calibrate, eval), each reading only its own
configured inputs, and writes a run manifest holding the config digest,
the seed, and a content hash of every artifact produced. Manifests contain
no timestamps or machine state, so identical config and seed produce
byte-identical manifests at any parallelism level.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from .blur import BlurConfig, augment_sequence
from .camera import (
    CameraModel,
    load_extrinsics,
    optimize_focal,
    save_camera,
    save_trace,
)
from .config import PipelineConfig
from .core import (
    FrameSequence,
    load_bounding_boxes,
    load_frame_sequence,
    load_pose_track,
    PoseTrack,
    save_frame_sequence,
    save_pose_track,
)
from .enhance import crop, enhance_frame
from .flow import FlowParams, estimate_flow, export_flow, import_flow
from .metrics import mpjpe, save_report
from .sync import align_sequences, alignment_pair_costs, save_alignment

logger = logging.getLogger(__name__)

STAGE_ORDER = ("enhance", "flow", "augment", "sync", "calibrate", "eval")


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name for exit reporting."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _hash_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _output_hashes(paths: list[Path], root: Path) -> dict[str, str]:
    out = {}
    for p in paths:
        try:
            rel = str(Path(p).relative_to(root))
        except ValueError:
            rel = str(p)
        out[rel] = _hash_file(Path(p))
    return dict(sorted(out.items()))


def _save_single_frames(frames, directory: Path) -> list[Path]:
    """Write individually sized frames (crop outputs) as <id:06d>.png."""
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for frame in frames:
        out = directory / f"{frame.id:06d}.png"
        Image.fromarray(np.asarray(frame.pixels)).save(out, format="PNG")
        written.append(out)
    return written


def _run_enhance(cfg: PipelineConfig, workers: int) -> list[Path]:
    stage = cfg.enhance
    seq = load_frame_sequence(stage.frames)
    boxes = load_bounding_boxes(stage.boxes)

    def job(frame):
        box = boxes.get(frame.id)
        if box is None:
            return None
        cut = crop(frame, box, stage.settings.margin)
        return enhance_frame(cut, stage.settings)

    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        results = list(pool.map(job, seq.frames))
    missing = [f.id for f, r in zip(seq.frames, results) if r is None]
    if missing:
        logger.warning("enhance: no box for %d frame(s), skipped: %s", len(missing), missing)
    kept = [r for r in results if r is not None]
    if not kept:
        raise ValueError("no frames had bounding boxes")
    return _save_single_frames(kept, Path(stage.out))


def _run_flow(cfg: PipelineConfig, workers: int) -> list[Path]:
    stage = cfg.flow
    seq = load_frame_sequence(stage.frames)
    if len(seq) < 2:
        raise ValueError("flow stage needs at least two frames")
    out_dir = Path(stage.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def job(i: int) -> Path:
        a, b = seq.frames[i], seq.frames[i + 1]
        field = estimate_flow(a, b, stage.params)
        path = out_dir / f"{a.id:06d}_{b.id:06d}.flo"
        export_flow(field, path)
        return path

    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        return list(pool.map(job, range(len(seq) - 1)))


def _run_augment(cfg: PipelineConfig, workers: int) -> list[Path]:
    stage = cfg.augment
    seq = load_frame_sequence(stage.frames)
    flow_paths = sorted(Path(stage.flows).glob("*.flo"))
    if len(flow_paths) != max(len(seq) - 1, 0):
        raise ValueError(
            f"augment: {len(flow_paths)} flow files for {len(seq)} frames "
            f"(need {max(len(seq) - 1, 0)})"
        )
    flows = [import_flow(p, expected_dims=seq.dims) for p in flow_paths]
    out_seq, manifest = augment_sequence(seq, flows, stage.blur, workers=max(workers, 1))
    written = save_frame_sequence(out_seq, stage.out)
    manifest_path = Path(stage.manifest) if stage.manifest else Path(stage.out) / "manifest.jsonl"
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest.to_jsonl(manifest_path)
    return written + [manifest_path]


def _run_sync(cfg: PipelineConfig, workers: int) -> list[Path]:
    stage = cfg.sync
    gt = load_pose_track(stage.gt)
    pred = load_pose_track(stage.pred)
    alignment = align_sequences(gt, pred, stage.weights)
    costs = alignment_pair_costs(gt, pred, alignment, stage.weights)
    out = Path(stage.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_alignment(alignment, costs, out)
    return [out]


def _run_calibrate(cfg: PipelineConfig, workers: int) -> list[Path]:
    stage = cfg.calibrate
    track3d = load_pose_track(stage.points3d, dims=3)
    annotated = load_pose_track(stage.annotation, dims=2)
    ann_by_id = {p.frame_id: p for p in annotated.poses}
    pts, anns = [], []
    for pose in track3d.poses:
        ann = ann_by_id.get(pose.frame_id)
        if ann is not None:
            pts.append(pose)
            anns.append(ann)
    if not pts:
        raise ValueError("calibrate: no shared frame ids between 3D poses and annotations")

    if stage.extrinsics:
        r_ext, t_ext = load_extrinsics(stage.extrinsics)
    else:
        r_ext, t_ext = np.eye(3), np.zeros(3)
    principal = stage.principal
    if principal is None:
        principal = (stage.dims[0] / 2.0, stage.dims[1] / 2.0)
    cam0 = CameraModel(f=stage.init_f, c=principal, r_ext=r_ext, t_ext=t_ext)
    cam, trace = optimize_focal(
        cam0, pts, anns, stage.optimizer, refine_translation=stage.refine_translation
    )

    out_camera = Path(stage.out_camera)
    out_camera.parent.mkdir(parents=True, exist_ok=True)
    save_camera(cam, out_camera)
    out_trace = Path(stage.out_trace) if stage.out_trace else out_camera.with_suffix(".trace.csv")
    save_trace(trace, out_trace)
    return [out_camera, out_trace]


def _run_eval(cfg: PipelineConfig, workers: int) -> list[Path]:
    stage = cfg.eval
    pred = load_pose_track(stage.pred)
    gt = load_pose_track(stage.gt)
    report = mpjpe(pred, gt)
    out = Path(stage.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_report(report, out)
    table = out.with_suffix(".csv")
    lines = ["frame_id,loss"]
    lines += [f"{fid},{format(loss, '.9g')}" for fid, loss in report.frame_losses]
    lines.append(f"aggregate,{format(report.aggregate, '.9g')}")
    table.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return [out, table]


_STAGE_RUNNERS = {
    "enhance": _run_enhance,
    "flow": _run_flow,
    "augment": _run_augment,
    "sync": _run_sync,
    "calibrate": _run_calibrate,
    "eval": _run_eval,
}


def run_pipeline(cfg: PipelineConfig, workers: int = 1) -> dict:
    """Execute the enabled stages in order and write the run manifest.

    Returns the manifest data: config digest, seed, and per-stage output
    hashes. On a stage failure the manifest is still written, with
    aborted_at naming the stage and the completed stages' outputs intact,
    then a StageError is raised.
    """
    out_root = Path(cfg.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    summary: dict = {"config_digest": cfg.digest(), "seed": cfg.seed, "stages": {}}

    def flush() -> None:
        manifest_path = out_root / "run_manifest.json"
        manifest_path.write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    for name in STAGE_ORDER:
        if not getattr(cfg, name).enabled:
            continue
        logger.info("running stage %s", name)
        try:
            outputs = _STAGE_RUNNERS[name](cfg, workers)
        except Exception as exc:
            summary["aborted_at"] = name
            flush()
            raise StageError(name, exc) from exc
        summary["stages"][name] = {"outputs": _output_hashes(outputs, out_root)}
    flush()
    return summary


def ingest_itw(
    frames_dir: str | Path,
    keypoints_path: str | Path,
    out_dir: str | Path,
    blur_cfg: BlurConfig,
    flow_params: FlowParams | None = None,
    workers: int = 1,
) -> dict:
    """Turn in-the-wild footage plus externally estimated keypoints into a
    training shard: blurred frames, the untouched keypoints, a manifest.

    Frames without a keypoint row are excluded and logged. Flow is
    estimated over the surviving consecutive pairs, then the standard
    augmentation runs with the given policy.
    """
    seq = load_frame_sequence(frames_dir, source_tag="itw")
    track = load_pose_track(keypoints_path)
    covered = set(track.frame_ids())
    kept = [f for f in seq.frames if f.id in covered]
    excluded = [f.id for f in seq.frames if f.id not in covered]
    if excluded:
        logger.warning(
            "ingest: %d frame(s) lack keypoints and were excluded: %s",
            len(excluded),
            excluded,
        )
    if not kept:
        raise ValueError("no frames have keypoints")
    kept_seq = FrameSequence(frames=tuple(kept), source_tag="itw")

    params = flow_params if flow_params is not None else FlowParams()

    def flow_job(i: int):
        return estimate_flow(kept_seq.frames[i], kept_seq.frames[i + 1], params)

    n_pairs = len(kept_seq) - 1
    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        flows = list(pool.map(flow_job, range(n_pairs)))

    out_seq, manifest = augment_sequence(kept_seq, flows, blur_cfg, workers=max(workers, 1))

    out_root = Path(out_dir)
    frame_paths = save_frame_sequence(out_seq, out_root / "frames")
    kept_ids = {f.id for f in kept}
    shard_track = PoseTrack(
        dims=track.dims,
        poses=tuple(p for p in track.poses if p.frame_id in kept_ids),
        joint_count=track.joint_count,
        joint_names=track.joint_names,
    )
    keypoints_out = out_root / "keypoints.csv"
    save_pose_track(shard_track, keypoints_out)
    manifest_path = out_root / "manifest.jsonl"
    manifest.to_jsonl(manifest_path)

    outputs = _output_hashes(frame_paths + [keypoints_out, manifest_path], out_root)
    return {
        "frames": len(out_seq),
        "excluded": excluded,
        "config_digest": blur_cfg.digest(),
        "outputs": outputs,
    }
