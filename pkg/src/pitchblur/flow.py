"""Dense motion flow between consecutive frames and per-patch aggregation.

The built-in estimator is classical coarse-to-fine block matching: frames
are reduced to luma, an image pyramid is built by 2x2 averaging, and at
each level the current flow estimate warps the second frame toward the
first before a sum-of-absolute-differences search over integer residual
displacements refines it. Block sampling at the image border is clamped.
The result is fully deterministic for fixed inputs and parameters; for
higher-fidelity flow, fields from an external estimator can be imported in
Middlebury convention instead.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .core import Frame
from .imageops import box_filter

if TYPE_CHECKING:  # pragma: no cover
    from .blur import PatchRegion

FLO_MAGIC = 202021.25


@dataclass(frozen=True)
class FlowField:
    """Per-pixel (dx, dy) displacements, stored as (H, W, 2) float32."""

    vectors: np.ndarray

    def __post_init__(self) -> None:
        vec = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if vec.ndim != 3 or vec.shape[2] != 2:
            raise ValueError(f"flow vectors must be (H, W, 2), got {vec.shape}")
        if not np.isfinite(vec).all():
            raise ValueError("non-finite flow component")
        vec.setflags(write=False)
        object.__setattr__(self, "vectors", vec)

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class FlowParams:
    """Block-matching estimator parameters.

    Attributes:
        pyramid_levels: Pyramid depth; level i is downsampled by 2**i.
        block_radius: Half-width of the SAD comparison block.
        search_radius: Integer residual search range per level, per axis.
        smoothing_passes: 3x3 box smoothing passes applied to the field
            after each level's update.
    """

    pyramid_levels: int = 3
    block_radius: int = 3
    search_radius: int = 4
    smoothing_passes: int = 1

    def __post_init__(self) -> None:
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if self.block_radius < 1:
            raise ValueError("block_radius must be >= 1")
        if self.search_radius < 1:
            raise ValueError("search_radius must be >= 1")
        if self.smoothing_passes < 0:
            raise ValueError("smoothing_passes must be >= 0")


def _to_luma(pixels: np.ndarray) -> np.ndarray:
    px = pixels.astype(np.float64)
    return 0.299 * px[:, :, 0] + 0.587 * px[:, :, 1] + 0.114 * px[:, :, 2]


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    img = img[: h - (h % 2), : w - (w % 2)]
    return 0.25 * (img[0::2, 0::2] + img[0::2, 1::2] + img[1::2, 0::2] + img[1::2, 1::2])


def _shift_clamped(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """out[y, x] = img[clamp(y + dy), clamp(x + dx)]."""
    h, w = img.shape
    ys = np.clip(np.arange(h) + dy, 0, h - 1)
    xs = np.clip(np.arange(w) + dx, 0, w - 1)
    return img[np.ix_(ys, xs)]


def _block_sums(diff: np.ndarray, radius: int) -> np.ndarray:
    """Sum |diff| over (2r+1)^2 blocks, clamped at the borders."""
    padded = np.pad(diff, radius, mode="edge")
    integral = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.float64)
    integral[1:, 1:] = np.cumsum(np.cumsum(padded, axis=0), axis=1)
    size = 2 * radius + 1
    h, w = diff.shape
    return (
        integral[size : size + h, size : size + w]
        - integral[size : size + h, 0:w]
        - integral[0:h, size : size + w]
        + integral[0:h, 0:w]
    )


def _warp_bilinear(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sample img at (x + u, y + v) with bilinear weights and clamped coords."""
    h, w = img.shape
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    xs = np.clip(xx + u, 0.0, w - 1.0)
    ys = np.clip(yy + v, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    return (
        img[y0, x0] * (1 - fy) * (1 - fx)
        + img[y0, x1] * (1 - fy) * fx
        + img[y1, x0] * fy * (1 - fx)
        + img[y1, x1] * fy * fx
    )


def _search_offsets(radius: int) -> list[tuple[int, int]]:
    # Ordered by deviation magnitude so SAD ties resolve toward the
    # propagated estimate rather than a scan-order corner.
    offsets = [
        (dy, dx)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
    ]
    offsets.sort(key=lambda o: (o[0] * o[0] + o[1] * o[1], o[0], o[1]))
    return offsets


def estimate_flow(frame_a: Frame, frame_b: Frame, params: FlowParams | None = None) -> FlowField:
    """Estimate dense flow such that frame_a(x, y) ~ frame_b(x + dx, y + dy).

    Args:
        frame_a: Reference frame.
        frame_b: Following frame; must share frame_a's dimensions.
        params: Estimator parameters (defaults are adequate for ranking
            patches by motion).

    Returns:
        A dense FlowField. Deterministic for fixed inputs and params.

    Raises:
        ValueError: Frames differ in dimensions.
    """
    if params is None:
        params = FlowParams()
    if (frame_a.width, frame_a.height) != (frame_b.width, frame_b.height):
        raise ValueError(
            f"dimension mismatch: {frame_a.width}x{frame_a.height} vs "
            f"{frame_b.width}x{frame_b.height}"
        )

    lum_a = _to_luma(frame_a.pixels)
    lum_b = _to_luma(frame_b.pixels)
    pyr_a = [lum_a]
    pyr_b = [lum_b]
    for _ in range(params.pyramid_levels - 1):
        if min(pyr_a[-1].shape) < 2 * (params.block_radius + 1):
            break
        pyr_a.append(_downsample2(pyr_a[-1]))
        pyr_b.append(_downsample2(pyr_b[-1]))

    offsets = _search_offsets(params.search_radius)
    u = np.zeros_like(pyr_a[-1])
    v = np.zeros_like(pyr_a[-1])

    for level in range(len(pyr_a) - 1, -1, -1):
        a = pyr_a[level]
        b = pyr_b[level]
        if u.shape != a.shape:
            u = 2.0 * np.repeat(np.repeat(u, 2, axis=0), 2, axis=1)[: a.shape[0], : a.shape[1]]
            v = 2.0 * np.repeat(np.repeat(v, 2, axis=0), 2, axis=1)[: a.shape[0], : a.shape[1]]
            # Odd parent dims lose a row/column when halved; replicate back.
            if u.shape != a.shape:
                pad_y = a.shape[0] - u.shape[0]
                pad_x = a.shape[1] - u.shape[1]
                u = np.pad(u, ((0, pad_y), (0, pad_x)), mode="edge")
                v = np.pad(v, ((0, pad_y), (0, pad_x)), mode="edge")

        warped = _warp_bilinear(b, u, v)
        best_dy = np.zeros(a.shape, dtype=np.float64)
        best_dx = np.zeros(a.shape, dtype=np.float64)
        best_sad = None
        for dy, dx in offsets:
            shifted = _shift_clamped(warped, dy, dx)
            sad = _block_sums(np.abs(a - shifted), params.block_radius)
            if best_sad is None:
                best_sad = sad
                continue
            better = sad < best_sad
            best_sad = np.where(better, sad, best_sad)
            best_dy = np.where(better, float(dy), best_dy)
            best_dx = np.where(better, float(dx), best_dx)
        u = u + best_dx
        v = v + best_dy
        for _ in range(params.smoothing_passes):
            u = box_filter(u, 1)
            v = box_filter(v, 1)

    return FlowField(vectors=np.stack([u, v], axis=-1).astype(np.float32))


# ---------------------------------------------------------------------------
# Middlebury flow files
# ---------------------------------------------------------------------------


def import_flow(path: str | Path, expected_dims: tuple[int, int] | None = None) -> FlowField:
    """Parse a Middlebury-convention flow file.

    Args:
        path: Flow file.
        expected_dims: Optional (width, height) the field must match.

    Raises:
        FileNotFoundError: Missing file.
        ValueError: Bad magic number, dimension mismatch, or truncated
            payload.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"flow file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 12:
        raise ValueError(f"truncated flow file: {path}")
    magic = struct.unpack("<f", raw[0:4])[0]
    if magic != FLO_MAGIC:
        raise ValueError(f"not a flow file (bad magic {magic!r}): {path}")
    width, height = struct.unpack("<ii", raw[4:12])
    if width <= 0 or height <= 0:
        raise ValueError(f"invalid flow dimensions {width}x{height}: {path}")
    if expected_dims is not None and (width, height) != tuple(expected_dims):
        raise ValueError(
            f"flow dimension mismatch: file is {width}x{height}, "
            f"expected {expected_dims[0]}x{expected_dims[1]}"
        )
    need = width * height * 2 * 4
    payload = raw[12:]
    if len(payload) < need:
        raise ValueError(f"truncated flow payload ({len(payload)} < {need} bytes): {path}")
    data = np.frombuffer(payload[:need], dtype="<f4").reshape(height, width, 2)
    return FlowField(vectors=data)


def export_flow(field: FlowField, path: str | Path) -> None:
    """Write a field in Middlebury convention; import_flow round-trips it bit-exactly."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(struct.pack("<f", FLO_MAGIC))
        fh.write(struct.pack("<ii", field.width, field.height))
        fh.write(np.ascontiguousarray(field.vectors, dtype="<f4").tobytes())


# ---------------------------------------------------------------------------
# Per-patch aggregation
# ---------------------------------------------------------------------------


def _region_view(flow: FlowField, region: "PatchRegion") -> np.ndarray:
    if (
        region.x < 0
        or region.y < 0
        or region.x + region.w > flow.width
        or region.y + region.h > flow.height
    ):
        raise ValueError(
            f"region {region.x},{region.y} {region.w}x{region.h} outside "
            f"{flow.width}x{flow.height} field"
        )
    return flow.vectors[region.y : region.y + region.h, region.x : region.x + region.w]


def patch_flow_magnitude(flow: FlowField, region: "PatchRegion") -> float:
    """Sum of per-pixel Euclidean flow magnitudes over a region.

    Summing magnitudes (rather than raw vectors) keeps fast but non-uniform
    motion ranked high; opposing displacements cannot cancel.
    """
    vec = _region_view(flow, region).astype(np.float64)
    return float(np.hypot(vec[:, :, 0], vec[:, :, 1]).sum())


def patch_flow_vector_sum(flow: FlowField, region: "PatchRegion") -> float:
    """Magnitude of the summed flow vector over a region.

    Fidelity variant in which opposing motions cancel; selectable through
    BlurConfig.flow_metric.
    """
    vec = _region_view(flow, region).astype(np.float64)
    total = vec.reshape(-1, 2).sum(axis=0)
    return float(np.hypot(total[0], total[1]))
