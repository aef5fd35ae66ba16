"""Selective motion blur: patch partitioning, motion ranking, oriented
kernel synthesis, and reproducible sequence augmentation.

A frame is partitioned into patches, the patches are ranked by the motion
flow magnitude accumulated over them, and the top N receive an effect. The
motion-blur effect convolves the patch with an oriented streak kernel: a
one-pixel-thick horizontal line of ones is transformed by the
rotate-about-center affine map (angle omega, scale factor s_f) with
bilinear resampling and normalized to unit sum, which preserves the mean
intensity of the patch.

All randomness derives from (seed, frame_id), so augmenting a sequence is
deterministic and independent of worker scheduling, and every choice is
recorded in a manifest that can be replayed bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Frame, FrameSequence
from .flow import FlowField, patch_flow_magnitude, patch_flow_vector_sum
from .imageops import filter_channels_u8, gaussian_kernel

EFFECT_NAMES = ("none", "binary_mask", "gaussian_blur", "motion_blur")

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Patch geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PatchRegion:
    """A rectangular frame sub-region; index is its row-major tile number."""

    index: int
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"patch {self.index}: w and h must be positive")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"patch {self.index}: origin must be non-negative")


@dataclass(frozen=True)
class GridMode:
    """Partition into rows x cols cells; the last row/column absorbs remainder pixels."""

    rows: int
    cols: int


@dataclass(frozen=True)
class FixedMode:
    """Tile with size x size squares; partial tiles are clipped to the frame."""

    size: int


PatchMode = GridMode | FixedMode


def init_patches(frame_dims: tuple[int, int], mode: PatchMode) -> list[PatchRegion]:
    """Partition a frame into non-overlapping regions covering it entirely.

    Args:
        frame_dims: (width, height) in pixels.
        mode: GridMode(rows, cols) or FixedMode(size).

    Returns:
        Regions in deterministic row-major order, indexed from 0.

    Raises:
        ValueError: Non-positive dims, or mode parameters exceeding the
            frame dimensions.
    """
    width, height = frame_dims
    if width <= 0 or height <= 0:
        raise ValueError(f"frame dims must be positive, got {frame_dims}")
    regions: list[PatchRegion] = []
    if isinstance(mode, GridMode):
        if mode.rows < 1 or mode.cols < 1:
            raise ValueError("grid must have at least one row and column")
        if mode.rows > height or mode.cols > width:
            raise ValueError(
                f"grid {mode.rows}x{mode.cols} exceeds frame dims {width}x{height}"
            )
        base_w = width // mode.cols
        base_h = height // mode.rows
        k = 0
        for r in range(mode.rows):
            y = r * base_h
            h = base_h if r < mode.rows - 1 else height - y
            for c in range(mode.cols):
                x = c * base_w
                w = base_w if c < mode.cols - 1 else width - x
                regions.append(PatchRegion(index=k, x=x, y=y, w=w, h=h))
                k += 1
    elif isinstance(mode, FixedMode):
        if mode.size < 1:
            raise ValueError("fixed patch size must be >= 1")
        if mode.size > width or mode.size > height:
            raise ValueError(
                f"patch size {mode.size} exceeds frame dims {width}x{height}"
            )
        k = 0
        for y in range(0, height, mode.size):
            for x in range(0, width, mode.size):
                regions.append(
                    PatchRegion(
                        index=k,
                        x=x,
                        y=y,
                        w=min(mode.size, width - x),
                        h=min(mode.size, height - y),
                    )
                )
                k += 1
    else:
        raise TypeError(f"unknown patch mode: {mode!r}")
    return regions


def _metric_fn(name: str):
    if name == "magnitude":
        return patch_flow_magnitude
    if name == "vector_sum":
        return patch_flow_vector_sum
    raise ValueError(f"unknown flow metric {name!r}")


def rank_patches(
    regions: list[PatchRegion], flow: FlowField, metric: str = "magnitude"
) -> list[tuple[PatchRegion, float]]:
    """All regions with their motion measure, most-moving first.

    Ties break toward the lower region index.
    """
    fn = _metric_fn(metric)
    scored = [(region, fn(flow, region)) for region in regions]
    scored.sort(key=lambda item: (-item[1], item[0].index))
    return scored


def select_patches(
    regions: list[PatchRegion],
    flow: FlowField,
    n: int,
    metric: str = "magnitude",
) -> list[PatchRegion]:
    """The N most-moving regions, in descending motion order.

    Raises:
        ValueError: N < 1 or N exceeds the region count.
    """
    if n < 1:
        raise ValueError("N must be >= 1")
    if n > len(regions):
        raise ValueError(f"N={n} exceeds region count {len(regions)}")
    return [region for region, _ in rank_patches(regions, flow, metric)[:n]]


# ---------------------------------------------------------------------------
# Motion kernel synthesis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MotionKernel:
    """An oriented streak filter with unit-sum non-negative weights."""

    size: int
    angle: float
    scale: float
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (self.size, self.size):
            raise ValueError(f"weights must be ({self.size}, {self.size}), got {w.shape}")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError("kernel weights must sum to 1")
        if float(w.min()) < 0.0:
            raise ValueError("kernel weights must be non-negative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def _snapped_trig(angle: float) -> tuple[float, float]:
    # Quarter-turn angles must produce exact 0/1 entries so the closed-form
    # line kernels come out bit-exact; values this close to an integer can
    # only arise from the trig evaluation itself.
    cos_w = math.cos(angle)
    sin_w = math.sin(angle)
    for exact in (-1.0, 0.0, 1.0):
        if abs(cos_w - exact) < 1e-12:
            cos_w = exact
        if abs(sin_w - exact) < 1e-12:
            sin_w = exact
    return cos_w, sin_w


def _affine_rows(
    k_s: int, angle: float, scale: float, uncentered: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Forward affine (A, t) mapping base-kernel coords to output coords."""
    c = float(k_s // 2)
    cos_w, sin_w = _snapped_trig(angle)
    a = np.array(
        [[cos_w * scale, -sin_w * scale], [sin_w * scale, cos_w * scale]],
        dtype=np.float64,
    )
    tx = c * (1.0 - cos_w * scale) + c * sin_w * scale
    if uncentered:
        # Compatibility variant: its second translation row uses cos where
        # the center-fixing map needs sin, so the streak is not re-centered.
        ty = c * (1.0 - cos_w * scale) - c * cos_w * scale
    else:
        ty = c * (1.0 - cos_w * scale) - c * sin_w * scale
    return a, np.array([tx, ty], dtype=np.float64)


def _bilinear_grid_sample(grid: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample a 2-D grid at float (x, y) points; outside the grid reads 0."""
    h, w = grid.shape
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    out = np.zeros(xs.shape, dtype=np.float64)
    for dy, dx, wgt in (
        (0, 0, (1 - fy) * (1 - fx)),
        (0, 1, (1 - fy) * fx),
        (1, 0, fy * (1 - fx)),
        (1, 1, fy * fx),
    ):
        yi = y0 + dy
        xi = x0 + dx
        valid = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        vals = np.where(
            valid, grid[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)], 0.0
        )
        out += wgt * vals
    return out


def build_motion_kernel(
    k_s: int, angle: float, scale: float, uncentered: bool = False
) -> MotionKernel:
    """Synthesize an oriented motion-blur kernel.

    The base kernel is a one-pixel-thick horizontal line of ones through
    row k_s // 2. It is transformed by the rotate-about-center affine map
    with the given angle and scale factor using bilinear resampling, then
    normalized to unit sum.

    Args:
        k_s: Kernel size; odd, >= 3.
        angle: Streak angle in radians.
        scale: Streak scale factor; positive.
        uncentered: Apply the alternative affine translation that skips
            the centering correction, for reproducing outputs of
            implementations built that way.

    Raises:
        ValueError: Even or sub-3 size, non-positive scale, or a transform
            that moves the whole streak outside the kernel support.
    """
    if k_s < 3 or k_s % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 3, got {k_s}")
    if scale <= 0:
        raise ValueError(f"scale factor must be positive, got {scale}")

    base = np.zeros((k_s, k_s), dtype=np.float64)
    base[k_s // 2, :] = 1.0

    a, t = _affine_rows(k_s, angle, scale, uncentered)
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    a_inv = np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]], dtype=np.float64) / det

    ys_out, xs_out = np.meshgrid(
        np.arange(k_s, dtype=np.float64), np.arange(k_s, dtype=np.float64), indexing="ij"
    )
    dx = xs_out - t[0]
    dy = ys_out - t[1]
    xs_in = a_inv[0, 0] * dx + a_inv[0, 1] * dy
    ys_in = a_inv[1, 0] * dx + a_inv[1, 1] * dy

    raw = _bilinear_grid_sample(base, xs_in, ys_in)
    total = float(raw.sum())
    if total < 1e-12:
        raise ValueError(
            f"degenerate kernel: transform (angle={angle}, scale={scale}) left "
            f"no streak mass inside the {k_s}x{k_s} support"
        )
    return MotionKernel(size=k_s, angle=angle, scale=scale, weights=raw / total)


# ---------------------------------------------------------------------------
# Patch effects
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MotionBlurEffect:
    kernel: MotionKernel


@dataclass(frozen=True)
class GaussianBlurEffect:
    sigma: float


@dataclass(frozen=True)
class BinaryMaskEffect:
    pass


@dataclass(frozen=True)
class NoEffect:
    pass


PatchEffect = MotionBlurEffect | GaussianBlurEffect | BinaryMaskEffect | NoEffect


def apply_patch_effect(frame: Frame, region: PatchRegion, effect: PatchEffect) -> Frame:
    """Apply an effect inside one region; all other pixels are bit-identical.

    Blur effects pad the region by edge replication for the kernel apron,
    filter each RGB channel independently in float64, and quantize once with
    round-half-up. A unit-sum kernel therefore leaves constant regions
    untouched and preserves the region mean to within rounding.
    """
    if (
        region.x < 0
        or region.y < 0
        or region.x + region.w > frame.width
        or region.y + region.h > frame.height
    ):
        raise ValueError(
            f"region {region.x},{region.y} {region.w}x{region.h} outside "
            f"{frame.width}x{frame.height} frame"
        )
    if isinstance(effect, NoEffect):
        return frame

    sub = frame.pixels[region.y : region.y + region.h, region.x : region.x + region.w]
    if isinstance(effect, MotionBlurEffect):
        filtered = filter_channels_u8(sub, effect.kernel.weights)
    elif isinstance(effect, GaussianBlurEffect):
        filtered = filter_channels_u8(sub, gaussian_kernel(effect.sigma))
    elif isinstance(effect, BinaryMaskEffect):
        filtered = np.zeros_like(sub)
    else:
        raise TypeError(f"unknown effect: {effect!r}")

    pixels = np.array(frame.pixels)
    pixels[region.y : region.y + region.h, region.x : region.x + region.w] = filtered
    return Frame(id=frame.id, pixels=pixels)


# ---------------------------------------------------------------------------
# Configuration and manifest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlurConfig:
    """Augmentation policy; the defaults follow the best-performing setup
    (motion blur, 2 filters, 30-pixel patches, 3 patches per frame)."""

    patch_mode: PatchMode = FixedMode(30)
    n_patches: int = 3
    n_filters: int = 2
    kernel_size_range: tuple[int, int] = (5, 15)
    angle_range: tuple[float, float] = (0.0, TWO_PI)
    scale_range: tuple[float, float] = (0.8, 1.2)
    sigma_range: tuple[float, float] = (1.0, 3.0)
    effect: str = "motion_blur"
    seed: int = 0
    flow_metric: str = "magnitude"
    uncentered_affine: bool = False

    def __post_init__(self) -> None:
        problems = self.problems()
        if problems:
            raise ValueError("invalid blur config: " + "; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if self.n_patches < 1:
            out.append("n_patches must be >= 1")
        if self.n_filters < 0:
            out.append("n_filters must be >= 0")
        kmin, kmax = self.kernel_size_range
        if kmin > kmax:
            out.append("kernel_size_range is empty")
        if kmin < 3 or kmin % 2 == 0 or kmax % 2 == 0:
            out.append("kernel_size_range endpoints must be odd and >= 3")
        if self.angle_range[0] > self.angle_range[1]:
            out.append("angle_range is empty")
        if self.scale_range[0] > self.scale_range[1] or self.scale_range[0] <= 0:
            out.append("scale_range must be non-empty and positive")
        if self.sigma_range[0] > self.sigma_range[1] or self.sigma_range[0] <= 0:
            out.append("sigma_range must be non-empty and positive")
        if self.effect not in EFFECT_NAMES:
            out.append(f"effect must be one of {EFFECT_NAMES}")
        if not 0 <= self.seed < 2**64:
            out.append("seed must fit in 64 bits")
        if self.flow_metric not in ("magnitude", "vector_sum"):
            out.append("flow_metric must be 'magnitude' or 'vector_sum'")
        return out

    def digest(self) -> str:
        """Stable content hash of the augmentation policy."""
        if isinstance(self.patch_mode, GridMode):
            mode = ["grid", self.patch_mode.rows, self.patch_mode.cols]
        else:
            mode = ["fixed", self.patch_mode.size]
        data = {
            "patch_mode": mode,
            "n_patches": self.n_patches,
            "n_filters": self.n_filters,
            "kernel_size_range": list(self.kernel_size_range),
            "angle_range": list(self.angle_range),
            "scale_range": list(self.scale_range),
            "sigma_range": list(self.sigma_range),
            "effect": self.effect,
            "seed": self.seed,
            "flow_metric": self.flow_metric,
            "uncentered_affine": self.uncentered_affine,
        }
        blob = json.dumps(data, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class RegionRecord:
    index: int
    x: int
    y: int
    w: int
    h: int
    magnitude: float
    params: dict


@dataclass(frozen=True)
class FrameRecord:
    frame_id: int
    effect: str
    regions: tuple[RegionRecord, ...]


@dataclass(frozen=True)
class AugmentationManifest:
    """Everything needed to reproduce an augmentation run bit-exactly."""

    seed: int
    config_digest: str
    uncentered_affine: bool
    records: tuple[FrameRecord, ...] = field(default_factory=tuple)

    def to_jsonl(self, path: str | Path) -> None:
        lines = [
            json.dumps(
                {
                    "seed": self.seed,
                    "config_digest": self.config_digest,
                    "uncentered_affine": self.uncentered_affine,
                },
                sort_keys=True,
            )
        ]
        for rec in self.records:
            lines.append(
                json.dumps(
                    {
                        "frame_id": rec.frame_id,
                        "effect": rec.effect,
                        "regions": [
                            {
                                "index": r.index,
                                "x": r.x,
                                "y": r.y,
                                "w": r.w,
                                "h": r.h,
                                "magnitude": r.magnitude,
                                "params": r.params,
                            }
                            for r in rec.regions
                        ],
                    },
                    sort_keys=True,
                )
            )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "AugmentationManifest":
        lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
        if not lines:
            raise ValueError(f"empty manifest: {path}")
        head = json.loads(lines[0])
        records = []
        for line in lines[1:]:
            data = json.loads(line)
            regions = tuple(
                RegionRecord(
                    index=r["index"],
                    x=r["x"],
                    y=r["y"],
                    w=r["w"],
                    h=r["h"],
                    magnitude=r["magnitude"],
                    params=r["params"],
                )
                for r in data["regions"]
            )
            records.append(
                FrameRecord(frame_id=data["frame_id"], effect=data["effect"], regions=regions)
            )
        return cls(
            seed=head["seed"],
            config_digest=head["config_digest"],
            uncentered_affine=head.get("uncentered_affine", False),
            records=tuple(records),
        )


# ---------------------------------------------------------------------------
# Sequence augmentation
# ---------------------------------------------------------------------------


def _draw_params(cfg: BlurConfig, rng: np.random.Generator, count: int) -> list[dict]:
    """Draw per-filter effect parameters; order per filter is pinned to
    (kernel_size, angle, scale) so manifests replay across versions."""
    params: list[dict] = []
    if cfg.effect == "motion_blur":
        kmin, kmax = cfg.kernel_size_range
        odd_sizes = np.arange(kmin, kmax + 1, 2)
        for _ in range(count):
            k_s = int(odd_sizes[rng.integers(len(odd_sizes))])
            angle = float(rng.uniform(cfg.angle_range[0], cfg.angle_range[1]))
            scale = float(rng.uniform(cfg.scale_range[0], cfg.scale_range[1]))
            params.append({"kernel_size": k_s, "angle": angle, "scale": scale})
    elif cfg.effect == "gaussian_blur":
        for _ in range(count):
            params.append({"sigma": float(rng.uniform(cfg.sigma_range[0], cfg.sigma_range[1]))})
    else:
        params = [{} for _ in range(count)]
    return params


def _build_effect(effect_name: str, params: dict, uncentered: bool) -> PatchEffect:
    if effect_name == "motion_blur":
        kernel = build_motion_kernel(
            params["kernel_size"], params["angle"], params["scale"], uncentered
        )
        return MotionBlurEffect(kernel=kernel)
    if effect_name == "gaussian_blur":
        return GaussianBlurEffect(sigma=params["sigma"])
    if effect_name == "binary_mask":
        return BinaryMaskEffect()
    if effect_name == "none":
        return NoEffect()
    raise ValueError(f"unknown effect {effect_name!r}")


def _augment_frame(
    frame: Frame,
    flow: FlowField,
    regions: list[PatchRegion],
    cfg: BlurConfig,
) -> tuple[Frame, FrameRecord]:
    ranked = rank_patches(regions, flow, cfg.flow_metric)
    selected = ranked[: cfg.n_patches]
    rng = np.random.default_rng([cfg.seed, frame.id])
    count = cfg.n_filters if cfg.n_filters >= 1 else cfg.n_patches
    params = _draw_params(cfg, rng, count)

    out = frame
    region_records = []
    for slot, (region, magnitude) in enumerate(selected):
        p = params[slot % len(params)] if params else {}
        out = apply_patch_effect(out, region, _build_effect(cfg.effect, p, cfg.uncentered_affine))
        region_records.append(
            RegionRecord(
                index=region.index,
                x=region.x,
                y=region.y,
                w=region.w,
                h=region.h,
                magnitude=magnitude,
                params=p,
            )
        )
    record = FrameRecord(frame_id=frame.id, effect=cfg.effect, regions=tuple(region_records))
    return out, record


def augment_sequence(
    seq: FrameSequence,
    flows: list[FlowField],
    cfg: BlurConfig,
    workers: int = 1,
) -> tuple[FrameSequence, AugmentationManifest]:
    """Augment every frame but the last with its forward-flow-chosen patches.

    flows[i] must be the flow between frames i and i+1. Each frame draws its
    effect parameters from a generator seeded by (cfg.seed, frame_id) and
    assigns them to the selected regions round-robin (n_filters=0 draws one
    fresh parameter set per patch). The final frame passes through
    unmodified.

    Args:
        workers: Frame-level thread parallelism; the output is identical for
            any worker count.

    Returns:
        (augmented sequence, manifest recording every choice).

    Raises:
        ValueError: Flow count != frame pairs, flow dims mismatching the
            frames, or n_patches exceeding the patch count.
    """
    n_pairs = max(len(seq) - 1, 0)
    if len(flows) != n_pairs:
        raise ValueError(f"expected {n_pairs} flow fields for {len(seq)} frames, got {len(flows)}")

    if n_pairs == 0:
        manifest = AugmentationManifest(
            seed=cfg.seed, config_digest=cfg.digest(), uncentered_affine=cfg.uncentered_affine
        )
        return seq, manifest

    width, height = seq.dims
    for i, fl in enumerate(flows):
        if (fl.width, fl.height) != (width, height):
            raise ValueError(f"flow {i} is {fl.width}x{fl.height}, frames are {width}x{height}")
    regions = init_patches((width, height), cfg.patch_mode)
    if cfg.n_patches > len(regions):
        raise ValueError(f"n_patches={cfg.n_patches} exceeds patch count {len(regions)}")

    def job(i: int) -> tuple[Frame, FrameRecord]:
        return _augment_frame(seq.frames[i], flows[i], regions, cfg)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(n_pairs)))
    else:
        results = [job(i) for i in range(n_pairs)]

    out_frames = [frame for frame, _ in results] + [seq.frames[-1]]
    records = tuple(record for _, record in results)
    manifest = AugmentationManifest(
        seed=cfg.seed,
        config_digest=cfg.digest(),
        uncentered_affine=cfg.uncentered_affine,
        records=records,
    )
    return FrameSequence(frames=tuple(out_frames), source_tag=seq.source_tag), manifest


def replay_manifest(seq: FrameSequence, manifest: AugmentationManifest) -> FrameSequence:
    """Re-apply a recorded augmentation to the same source sequence.

    Produces output bit-identical to the run that wrote the manifest.
    """
    by_id = {rec.frame_id: rec for rec in manifest.records}
    out_frames = []
    for frame in seq.frames:
        rec = by_id.get(frame.id)
        if rec is None:
            out_frames.append(frame)
            continue
        out = frame
        for r in rec.regions:
            region = PatchRegion(index=r.index, x=r.x, y=r.y, w=r.w, h=r.h)
            out = apply_patch_effect(
                out, region, _build_effect(rec.effect, r.params, manifest.uncentered_affine)
            )
        out_frames.append(out)
    return FrameSequence(frames=tuple(out_frames), source_tag=seq.source_tag)
