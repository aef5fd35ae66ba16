"""Declarative pipeline configuration.

One YAML file describes a whole run: which stages execute, where each
reads its inputs and writes its artifacts, and every stage parameter. An
empty file is valid and yields the full default configuration (all stages
off, augmentation set to 2 filters, 3 patches of 30 pixels, motion blur).
Validation is strict and exhaustive: unknown keys are rejected and every
problem in the file is reported, not just the first.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .blur import BlurConfig, FixedMode, GridMode, PatchMode
from .camera import OptimizerConfig
from .core import SplitExpectation
from .enhance import EnhanceConfig
from .flow import FlowParams
from .sync import SyncWeights


class ConfigError(ValueError):
    """Carries every validation problem found in a config file."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


def parse_patch_mode(text: str) -> PatchMode:
    """Parse ``grid:RxC`` or ``fixed:S``."""
    kind, _, arg = text.partition(":")
    try:
        if kind == "grid":
            rows, _, cols = arg.partition("x")
            return GridMode(rows=int(rows), cols=int(cols))
        if kind == "fixed":
            return FixedMode(size=int(arg))
    except ValueError:
        pass
    raise ValueError(f"patch mode must be 'grid:RxC' or 'fixed:S', got {text!r}")


def format_patch_mode(mode: PatchMode) -> str:
    if isinstance(mode, GridMode):
        return f"grid:{mode.rows}x{mode.cols}"
    return f"fixed:{mode.size}"


@dataclass(frozen=True)
class EnhanceStage:
    enabled: bool = False
    frames: str = ""
    boxes: str = ""
    out: str = ""
    settings: EnhanceConfig = field(default_factory=EnhanceConfig)


@dataclass(frozen=True)
class FlowStage:
    enabled: bool = False
    frames: str = ""
    out: str = ""
    params: FlowParams = field(default_factory=FlowParams)


@dataclass(frozen=True)
class AugmentStage:
    enabled: bool = False
    frames: str = ""
    flows: str = ""
    out: str = ""
    manifest: str = ""
    blur: BlurConfig = field(default_factory=BlurConfig)


@dataclass(frozen=True)
class SyncStage:
    enabled: bool = False
    gt: str = ""
    pred: str = ""
    out: str = ""
    weights: SyncWeights = field(default_factory=SyncWeights)


@dataclass(frozen=True)
class CalibrateStage:
    enabled: bool = False
    points3d: str = ""
    annotation: str = ""
    extrinsics: str = ""
    init_f: float = 1000.0
    principal: tuple[float, float] | None = None
    dims: tuple[int, int] | None = None
    refine_translation: bool = False
    out_camera: str = ""
    out_trace: str = ""
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)


@dataclass(frozen=True)
class EvalStage:
    enabled: bool = False
    pred: str = ""
    gt: str = ""
    out: str = ""


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    out_dir: str = "runs"
    split: SplitExpectation = field(default_factory=SplitExpectation)
    enhance: EnhanceStage = field(default_factory=EnhanceStage)
    flow: FlowStage = field(default_factory=FlowStage)
    augment: AugmentStage = field(default_factory=AugmentStage)
    sync: SyncStage = field(default_factory=SyncStage)
    calibrate: CalibrateStage = field(default_factory=CalibrateStage)
    eval: EvalStage = field(default_factory=EvalStage)

    def digest(self) -> str:
        """Content hash covering every field that can influence outputs."""
        data = {
            "seed": self.seed,
            "split": [self.split.enabled, list(self.split.sequences), list(self.split.frames)],
            "enhance": [
                self.enhance.enabled,
                self.enhance.frames,
                self.enhance.boxes,
                self.enhance.out,
                self.enhance.settings.margin,
                self.enhance.settings.clip_limit,
                list(self.enhance.settings.tile_grid),
            ],
            "flow": [
                self.flow.enabled,
                self.flow.frames,
                self.flow.out,
                self.flow.params.pyramid_levels,
                self.flow.params.block_radius,
                self.flow.params.search_radius,
                self.flow.params.smoothing_passes,
            ],
            "augment": [
                self.augment.enabled,
                self.augment.frames,
                self.augment.flows,
                self.augment.out,
                self.augment.manifest,
                self.augment.blur.digest(),
            ],
            "sync": [
                self.sync.enabled,
                self.sync.gt,
                self.sync.pred,
                self.sync.out,
                self.sync.weights.g_s,
                self.sync.weights.g_t,
            ],
            "calibrate": [
                self.calibrate.enabled,
                self.calibrate.points3d,
                self.calibrate.annotation,
                self.calibrate.extrinsics,
                self.calibrate.init_f,
                list(self.calibrate.principal) if self.calibrate.principal else None,
                list(self.calibrate.dims) if self.calibrate.dims else None,
                self.calibrate.refine_translation,
                self.calibrate.out_camera,
                self.calibrate.out_trace,
                self.calibrate.optimizer.learning_rate,
                self.calibrate.optimizer.max_iters,
                self.calibrate.optimizer.tolerance,
                self.calibrate.optimizer.gradient_mode,
                self.calibrate.optimizer.backtracking,
            ],
            "eval": [self.eval.enabled, self.eval.pred, self.eval.gt, self.eval.out],
        }
        blob = json.dumps(data, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


class _Section:
    """One mapping level of the raw file, with error accumulation."""

    def __init__(self, data: dict, name: str, problems: list[str]):
        self.data = data or {}
        self.name = name
        self.problems = problems
        if not isinstance(self.data, dict):
            self.problems.append(f"{name or 'top level'}: expected a mapping")
            self.data = {}
        self._seen: set[str] = set()

    def _key(self, key: str) -> str:
        return f"{self.name}.{key}" if self.name else key

    def take(self, key: str, default):
        self._seen.add(key)
        return self.data.get(key, default)

    def number(self, key: str, default, minimum=None, integer=False):
        raw = self.take(key, default)
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            self.problems.append(f"{self._key(key)}: expected a number, got {raw!r}")
            return default
        if integer and not isinstance(raw, int):
            self.problems.append(f"{self._key(key)}: expected an integer, got {raw!r}")
            return default
        if minimum is not None and raw < minimum:
            self.problems.append(f"{self._key(key)}: must be >= {minimum}, got {raw}")
            return default
        return raw

    def boolean(self, key: str, default: bool) -> bool:
        raw = self.take(key, default)
        if not isinstance(raw, bool):
            self.problems.append(f"{self._key(key)}: expected true/false, got {raw!r}")
            return default
        return raw

    def text(self, key: str, default: str) -> str:
        raw = self.take(key, default)
        if not isinstance(raw, str):
            self.problems.append(f"{self._key(key)}: expected a string, got {raw!r}")
            return default
        return raw

    def pair(self, key: str, default, kind=float):
        raw = self.take(key, default)
        if raw is default:
            return default
        if (
            not isinstance(raw, (list, tuple))
            or len(raw) != 2
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in raw)
        ):
            self.problems.append(f"{self._key(key)}: expected [lo, hi], got {raw!r}")
            return default
        return (kind(raw[0]), kind(raw[1]))

    def triple(self, key: str, default):
        raw = self.take(key, default)
        if raw is default:
            return default
        if (
            not isinstance(raw, (list, tuple))
            or len(raw) != 3
            or any(isinstance(v, bool) or not isinstance(v, int) for v in raw)
        ):
            self.problems.append(f"{self._key(key)}: expected three integers, got {raw!r}")
            return default
        return tuple(raw)

    def section(self, key: str) -> "_Section":
        raw = self.take(key, {})
        return _Section(raw if raw is not None else {}, self._key(key), self.problems)

    def finish(self) -> None:
        for key in self.data:
            if key not in self._seen:
                self.problems.append(f"unknown key: {self._key(key)}")


def _resolve(base: Path | None, value: str) -> str:
    if not value or base is None:
        return value
    p = Path(value)
    return value if p.is_absolute() else str(base / p)


def _require_inputs(problems: list[str], stage: str, paths: dict[str, str], dirs: set[str]) -> None:
    for key, value in paths.items():
        if not value:
            problems.append(f"{stage}.{key}: required when the stage is enabled")
        elif key in dirs and not Path(value).is_dir():
            problems.append(f"{stage}.{key}: directory not found: {value}")
        elif key not in dirs and not Path(value).is_file():
            problems.append(f"{stage}.{key}: file not found: {value}")


def build_config(data: dict | None, base_dir: Path | None = None) -> PipelineConfig:
    """Validate raw mapping data into a PipelineConfig.

    Relative paths are resolved against base_dir (normally the config
    file's directory).

    Raises:
        ConfigError: With the full list of problems found.
    """
    problems: list[str] = []
    top = _Section(data or {}, "", problems)

    seed = top.number("seed", 0, minimum=0, integer=True)
    out_dir = _resolve(base_dir, top.text("out_dir", "runs"))

    split_sec = top.section("split")
    split = SplitExpectation(
        enabled=split_sec.boolean("enabled", True),
        sequences=split_sec.triple("sequences", (105, 15, 30)),
        frames=split_sec.triple("frames", (21050, 2962, 5988)),
    )
    split_sec.finish()

    enh_sec = top.section("enhance")
    enh_enabled = enh_sec.boolean("enabled", False)
    margin = enh_sec.number("margin", 0.0, minimum=0.0)
    clip_limit = enh_sec.number("clip_limit", 2.0)
    tiles = enh_sec.pair("tiles", (8, 8), kind=int)
    enh_settings = EnhanceConfig()
    try:
        enh_settings = EnhanceConfig(margin=margin, clip_limit=clip_limit, tile_grid=tiles)
    except ValueError as exc:
        problems.append(f"enhance: {exc}")
    enhance = EnhanceStage(
        enabled=enh_enabled,
        frames=_resolve(base_dir, enh_sec.text("frames", "")),
        boxes=_resolve(base_dir, enh_sec.text("boxes", "")),
        out=_resolve(base_dir, enh_sec.text("out", "")),
        settings=enh_settings,
    )
    enh_sec.finish()

    flow_sec = top.section("flow")
    flow_enabled = flow_sec.boolean("enabled", False)
    flow_params = FlowParams()
    try:
        flow_params = FlowParams(
            pyramid_levels=flow_sec.number("levels", 3, minimum=1, integer=True),
            block_radius=flow_sec.number("block_radius", 3, minimum=1, integer=True),
            search_radius=flow_sec.number("search_radius", 4, minimum=1, integer=True),
            smoothing_passes=flow_sec.number("smoothing", 1, minimum=0, integer=True),
        )
    except ValueError as exc:
        problems.append(f"flow: {exc}")
    flow = FlowStage(
        enabled=flow_enabled,
        frames=_resolve(base_dir, flow_sec.text("frames", "")),
        out=_resolve(base_dir, flow_sec.text("out", "")),
        params=flow_params,
    )
    flow_sec.finish()

    aug_sec = top.section("augment")
    aug_enabled = aug_sec.boolean("enabled", False)
    mode_text = aug_sec.text("patch_mode", "fixed:30")
    patch_mode: PatchMode = FixedMode(30)
    try:
        patch_mode = parse_patch_mode(mode_text)
    except ValueError as exc:
        problems.append(f"augment.patch_mode: {exc}")
    patches = aug_sec.number("patches", 3, minimum=1, integer=True)
    filters = aug_sec.number("filters", 2, minimum=0, integer=True)
    kernel_size = aug_sec.pair("kernel_size", (5, 15), kind=int)
    angle_deg = aug_sec.pair("angle", (0.0, 360.0))
    scale = aug_sec.pair("scale", (0.8, 1.2))
    sigma = aug_sec.pair("sigma", (1.0, 3.0))
    effect = aug_sec.text("effect", "motion_blur")
    flow_metric = aug_sec.text("flow_metric", "magnitude")
    uncentered = aug_sec.boolean("uncentered_affine", False)
    blur_cfg = BlurConfig()
    try:
        blur_cfg = BlurConfig(
            patch_mode=patch_mode,
            n_patches=patches,
            n_filters=filters,
            kernel_size_range=kernel_size,
            angle_range=(math.radians(angle_deg[0]), math.radians(angle_deg[1])),
            scale_range=scale,
            sigma_range=sigma,
            effect=effect,
            seed=seed,
            flow_metric=flow_metric,
            uncentered_affine=uncentered,
        )
    except ValueError as exc:
        problems.append(f"augment: {exc}")
    if isinstance(patch_mode, GridMode) and patches > patch_mode.rows * patch_mode.cols:
        problems.append(
            f"augment.patches: N exceeds patch count "
            f"({patches} > {patch_mode.rows * patch_mode.cols})"
        )
    augment = AugmentStage(
        enabled=aug_enabled,
        frames=_resolve(base_dir, aug_sec.text("frames", "")),
        flows=_resolve(base_dir, aug_sec.text("flows", "")),
        out=_resolve(base_dir, aug_sec.text("out", "")),
        manifest=_resolve(base_dir, aug_sec.text("manifest", "")),
        blur=blur_cfg,
    )
    aug_sec.finish()

    sync_sec = top.section("sync")
    sync_enabled = sync_sec.boolean("enabled", False)
    weights = SyncWeights()
    try:
        weights = SyncWeights(
            g_s=float(sync_sec.number("g_s", 1.0, minimum=0.0)),
            g_t=float(sync_sec.number("g_t", 1.0, minimum=0.0)),
        )
    except ValueError as exc:
        problems.append(f"sync: {exc}")
    sync = SyncStage(
        enabled=sync_enabled,
        gt=_resolve(base_dir, sync_sec.text("gt", "")),
        pred=_resolve(base_dir, sync_sec.text("pred", "")),
        out=_resolve(base_dir, sync_sec.text("out", "")),
        weights=weights,
    )
    sync_sec.finish()

    cal_sec = top.section("calibrate")
    cal_enabled = cal_sec.boolean("enabled", False)
    optimizer = OptimizerConfig()
    try:
        optimizer = OptimizerConfig(
            learning_rate=float(cal_sec.number("learning_rate", 1e-2)),
            max_iters=cal_sec.number("max_iters", 500, minimum=1, integer=True),
            tolerance=float(cal_sec.number("tolerance", 1e-8, minimum=0.0)),
            gradient_mode=cal_sec.text("gradient", "analytic"),
            backtracking=cal_sec.boolean("backtracking", True),
        )
    except ValueError as exc:
        problems.append(f"calibrate: {exc}")
    principal_raw = cal_sec.pair("principal", None)
    dims_raw = cal_sec.pair("dims", None, kind=int)
    init_f = float(cal_sec.number("init_f", 1000.0))
    if init_f <= 0:
        problems.append(f"calibrate.init_f: must be positive, got {init_f}")
    calibrate = CalibrateStage(
        enabled=cal_enabled,
        points3d=_resolve(base_dir, cal_sec.text("points3d", "")),
        annotation=_resolve(base_dir, cal_sec.text("annotation", "")),
        extrinsics=_resolve(base_dir, cal_sec.text("extrinsics", "")),
        init_f=init_f,
        principal=principal_raw,
        dims=dims_raw,
        refine_translation=cal_sec.boolean("refine_translation", False),
        out_camera=_resolve(base_dir, cal_sec.text("out_camera", "")),
        out_trace=_resolve(base_dir, cal_sec.text("out_trace", "")),
        optimizer=optimizer,
    )
    if cal_enabled and principal_raw is None and dims_raw is None:
        problems.append("calibrate: one of 'principal' or 'dims' is required")
    cal_sec.finish()

    eval_sec = top.section("eval")
    evaluation = EvalStage(
        enabled=eval_sec.boolean("enabled", False),
        pred=_resolve(base_dir, eval_sec.text("pred", "")),
        gt=_resolve(base_dir, eval_sec.text("gt", "")),
        out=_resolve(base_dir, eval_sec.text("out", "")),
    )
    eval_sec.finish()
    top.finish()

    if enhance.enabled:
        _require_inputs(
            problems, "enhance", {"frames": enhance.frames, "boxes": enhance.boxes}, {"frames"}
        )
        if not enhance.out:
            problems.append("enhance.out: required when the stage is enabled")
    if flow.enabled:
        _require_inputs(problems, "flow", {"frames": flow.frames}, {"frames"})
        if not flow.out:
            problems.append("flow.out: required when the stage is enabled")
    if augment.enabled:
        _require_inputs(
            problems,
            "augment",
            {"frames": augment.frames, "flows": augment.flows},
            {"frames", "flows"},
        )
        if not augment.out:
            problems.append("augment.out: required when the stage is enabled")
    if sync.enabled:
        _require_inputs(problems, "sync", {"gt": sync.gt, "pred": sync.pred}, set())
        if not sync.out:
            problems.append("sync.out: required when the stage is enabled")
    if calibrate.enabled:
        required = {"points3d": calibrate.points3d, "annotation": calibrate.annotation}
        if calibrate.extrinsics:
            required["extrinsics"] = calibrate.extrinsics
        _require_inputs(problems, "calibrate", required, set())
        if not calibrate.out_camera:
            problems.append("calibrate.out_camera: required when the stage is enabled")
    if evaluation.enabled:
        _require_inputs(problems, "eval", {"pred": evaluation.pred, "gt": evaluation.gt}, set())
        if not evaluation.out:
            problems.append("eval.out: required when the stage is enabled")

    if problems:
        raise ConfigError(problems)
    return PipelineConfig(
        seed=seed,
        out_dir=out_dir,
        split=split,
        enhance=enhance,
        flow=flow,
        augment=augment,
        sync=sync,
        calibrate=calibrate,
        eval=evaluation,
    )


def validate_config(path: str | Path) -> PipelineConfig:
    """Parse and validate a YAML config file.

    An empty file yields the full default configuration.

    Raises:
        ConfigError: Unparseable file, or the collected validation problems.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file not found: {path}"])
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError([f"unparseable config: {exc}"]) from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(["top level of the config must be a mapping"])
    return build_config(data, base_dir=path.parent)
