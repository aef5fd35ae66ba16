"""Subject-region preparation: bounding-box crops and contrast
enhancement on the luminosity channel.

Frames are converted to CIELAB so that contrast-limited adaptive histogram
equalization can act on L alone, brightening and amplifying local
intensity differences while the two color channels pass through
bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BoundingBox, Frame
from .imageops import quantize_u8

# sRGB D65 linear-RGB -> XYZ. The white point is taken as the row sums of
# this exact matrix so that pure white maps to L=100, a=b=0 without
# rounding residue.
RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ],
    dtype=np.float64,
)
XYZ_TO_RGB = np.linalg.inv(RGB_TO_XYZ)
WHITE_POINT = RGB_TO_XYZ @ np.ones(3)

_DELTA = 6.0 / 29.0
_HIST_BINS = 256
_L_RANGE = 100.0


@dataclass(frozen=True)
class EnhanceConfig:
    """Crop margin and equalization strength.

    tile_grid = (1, 1) degenerates to a global histogram stretch.
    """

    margin: float = 0.0
    clip_limit: float = 2.0
    tile_grid: tuple[int, int] = (8, 8)

    def __post_init__(self) -> None:
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        if self.clip_limit <= 0:
            raise ValueError("clip_limit must be positive")
        if self.tile_grid[0] < 1 or self.tile_grid[1] < 1:
            raise ValueError("tile grid dims must be >= 1")


def crop(frame: Frame, box: BoundingBox, margin: float = 0.0) -> Frame:
    """Cut out the box, padded by margin * box size, clipped to the frame.

    Raises:
        ValueError: Padded box does not intersect the frame.
    """
    if margin < 0:
        raise ValueError("margin must be non-negative")
    pad_w = margin * box.w
    pad_h = margin * box.h
    x0 = max(0, int(math.floor(box.x - pad_w)))
    y0 = max(0, int(math.floor(box.y - pad_h)))
    x1 = min(frame.width, int(math.ceil(box.x + box.w + pad_w)))
    y1 = min(frame.height, int(math.ceil(box.y + box.h + pad_h)))
    if x1 <= x0 or y1 <= y0:
        raise ValueError(
            f"box {box.x},{box.y} {box.w}x{box.h} (margin {margin}) does not "
            f"intersect {frame.width}x{frame.height} frame"
        )
    return Frame(id=frame.id, pixels=np.array(frame.pixels[y0:y1, x0:x1]))


def rgb_to_lab(pixels: np.ndarray) -> np.ndarray:
    """8-bit sRGB raster (H, W, 3) to CIELAB float64 (H, W, 3)."""
    srgb = np.asarray(pixels, dtype=np.float64) / 255.0
    linear = np.where(
        srgb <= 0.04045, srgb / 12.92, ((srgb + 0.055) / 1.055) ** 2.4
    )
    xyz = linear @ RGB_TO_XYZ.T
    ratios = xyz / WHITE_POINT
    f = np.where(
        ratios > _DELTA**3, np.cbrt(ratios), ratios / (3.0 * _DELTA**2) + 4.0 / 29.0
    )
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def lab_to_rgb(lab: np.ndarray) -> np.ndarray:
    """CIELAB float64 raster back to 8-bit sRGB."""
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    ratios = np.where(f > _DELTA, f**3, 3.0 * _DELTA**2 * (f - 4.0 / 29.0))
    xyz = ratios * WHITE_POINT
    linear = xyz @ XYZ_TO_RGB.T
    linear = np.clip(linear, 0.0, 1.0)
    srgb = np.where(
        linear <= 0.0031308, 12.92 * linear, 1.055 * linear ** (1.0 / 2.4) - 0.055
    )
    return quantize_u8(srgb * 255.0)


def _tile_edges(length: int, tiles: int) -> list[tuple[int, int]]:
    return [(t * length // tiles, (t + 1) * length // tiles) for t in range(tiles)]


def _tile_lut(values: np.ndarray, clip_limit: float) -> np.ndarray:
    """Equalization lookup table (bin index -> L value) for one tile."""
    n = values.size
    bins = np.clip(
        (values * (_HIST_BINS / _L_RANGE)).astype(np.int64), 0, _HIST_BINS - 1
    )
    hist = np.bincount(bins.ravel(), minlength=_HIST_BINS).astype(np.float64)
    threshold = clip_limit * n / _HIST_BINS
    excess = float(np.maximum(hist - threshold, 0.0).sum())
    if excess > 0.0:
        hist = np.minimum(hist, threshold) + excess / _HIST_BINS
    cdf = np.cumsum(hist)
    occupied = np.nonzero(hist)[0]
    cdf_min = cdf[occupied[0]]
    denom = n - cdf_min
    if denom <= 0.0:
        # All mass in one bin: equalization is undefined, keep values put.
        return (np.arange(_HIST_BINS, dtype=np.float64) + 0.5) * (_L_RANGE / _HIST_BINS)
    return (cdf - cdf_min) / denom * _L_RANGE


def _blend_coords(length: int, tiles: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-pixel (lower tile, upper tile, upper weight) along one axis."""
    centers = np.array([(lo + hi - 1) / 2.0 for lo, hi in _tile_edges(length, tiles)])
    pos = np.arange(length, dtype=np.float64)
    lower = np.clip(np.searchsorted(centers, pos, side="right") - 1, 0, tiles - 1)
    upper = np.clip(lower + 1, 0, tiles - 1)
    span = centers[upper] - centers[lower]
    with np.errstate(invalid="ignore"):
        weight = np.where(span > 0, (pos - centers[lower]) / np.where(span > 0, span, 1.0), 0.0)
    weight = np.clip(weight, 0.0, 1.0)
    return lower, upper, weight


def enhance_luminosity(lab: np.ndarray, cfg: EnhanceConfig = EnhanceConfig()) -> np.ndarray:
    """Contrast-limited adaptive equalization of the L channel.

    Per-tile histograms (256 bins over [0, 100]) are clipped at
    clip_limit * n_tile / 256 with the excess redistributed equally, turned
    into equalization lookup tables, and blended bilinearly between tile
    centers. a and b pass through bit-identical; a constant-L raster
    returns unchanged.
    """
    lab = np.asarray(lab, dtype=np.float64)
    lum = lab[..., 0]
    if float(lum.max()) == float(lum.min()):
        return lab.copy()

    rows, cols = cfg.tile_grid
    height, width = lum.shape
    rows = min(rows, height)
    cols = min(cols, width)
    row_edges = _tile_edges(height, rows)
    col_edges = _tile_edges(width, cols)
    luts = np.empty((rows, cols, _HIST_BINS), dtype=np.float64)
    for r, (y0, y1) in enumerate(row_edges):
        for c, (x0, x1) in enumerate(col_edges):
            luts[r, c] = _tile_lut(lum[y0:y1, x0:x1], cfg.clip_limit)

    bins = np.clip((lum * (_HIST_BINS / _L_RANGE)).astype(np.int64), 0, _HIST_BINS - 1)
    r0, r1, wy = _blend_coords(height, rows)
    c0, c1, wx = _blend_coords(width, cols)
    r0 = r0[:, None]
    r1 = r1[:, None]
    wy = wy[:, None]
    c0 = c0[None, :]
    c1 = c1[None, :]
    wx = wx[None, :]

    top = (1.0 - wx) * luts[r0, c0, bins] + wx * luts[r0, c1, bins]
    bottom = (1.0 - wx) * luts[r1, c0, bins] + wx * luts[r1, c1, bins]
    new_lum = (1.0 - wy) * top + wy * bottom

    out = lab.copy()
    out[..., 0] = new_lum
    return out


def enhance_frame(frame: Frame, cfg: EnhanceConfig = EnhanceConfig()) -> Frame:
    """Round-trip a frame through LAB with the L channel equalized."""
    lab = rgb_to_lab(frame.pixels)
    return Frame(id=frame.id, pixels=lab_to_rgb(enhance_luminosity(lab, cfg)))
