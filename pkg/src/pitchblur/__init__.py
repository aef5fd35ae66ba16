"""Flow-guided partial motion blur augmentation and pose-data preparation
for sports video."""

from .blur import (
    AugmentationManifest,
    BlurConfig,
    FixedMode,
    GridMode,
    MotionKernel,
    PatchRegion,
    apply_patch_effect,
    augment_sequence,
    build_motion_kernel,
    init_patches,
    replay_manifest,
    select_patches,
)
from .camera import CameraModel, OptimizerConfig, loss_gradient, optimize_focal, project, reprojection_loss
from .config import ConfigError, PipelineConfig, validate_config
from .core import (
    BoundingBox,
    Frame,
    FrameSequence,
    Pose,
    PoseTrack,
    load_frame_sequence,
    load_pose_track,
    save_frame_sequence,
    save_pose_track,
)
from .enhance import EnhanceConfig, crop, enhance_frame, enhance_luminosity, lab_to_rgb, rgb_to_lab
from .flow import FlowField, FlowParams, estimate_flow, export_flow, import_flow, patch_flow_magnitude
from .metrics import EvalReport, compare_runs, mpjpe
from .pipeline import ingest_itw, run_pipeline
from .sync import Alignment, SyncWeights, align_sequences, pose_pair_cost, trim_unannotated

__version__ = "0.1.0"

__all__ = [
    "Alignment",
    "AugmentationManifest",
    "BlurConfig",
    "BoundingBox",
    "CameraModel",
    "ConfigError",
    "EnhanceConfig",
    "EvalReport",
    "FixedMode",
    "FlowField",
    "FlowParams",
    "Frame",
    "FrameSequence",
    "GridMode",
    "MotionKernel",
    "OptimizerConfig",
    "PatchRegion",
    "PipelineConfig",
    "Pose",
    "PoseTrack",
    "SyncWeights",
    "align_sequences",
    "apply_patch_effect",
    "augment_sequence",
    "build_motion_kernel",
    "compare_runs",
    "crop",
    "enhance_frame",
    "enhance_luminosity",
    "estimate_flow",
    "export_flow",
    "import_flow",
    "ingest_itw",
    "init_patches",
    "lab_to_rgb",
    "load_frame_sequence",
    "load_pose_track",
    "loss_gradient",
    "mpjpe",
    "optimize_focal",
    "patch_flow_magnitude",
    "pose_pair_cost",
    "project",
    "replay_manifest",
    "reprojection_loss",
    "rgb_to_lab",
    "run_pipeline",
    "save_frame_sequence",
    "save_pose_track",
    "select_patches",
    "trim_unannotated",
    "validate_config",
]
