"""Low-level raster filtering primitives shared by the blur and flow modules.

The convolution here is deliberately written as a shift-and-add over kernel
taps: for every output pixel the products are accumulated in float64 in
row-major tap order, which makes the result bit-identical to a naive
per-pixel scalar loop that accumulates in the same order. Quantization to
8 bits is a single round-half-up at the end. Both conventions are load
bearing for reproducibility; do not "optimize" them away.
"""

from __future__ import annotations

import numpy as np


def replicate_pad(channel: np.ndarray, radius: int) -> np.ndarray:
    """Pad a 2-D array by `radius` on each side, replicating edge samples."""
    if radius < 0:
        raise ValueError(f"pad radius must be >= 0, got {radius}")
    if radius == 0:
        return channel.copy()
    return np.pad(channel, radius, mode="edge")


def convolve2d_f64(padded: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Correlate a padded 2-D float64 channel with a square kernel.

    Args:
        padded: Channel of shape (H + 2a, W + 2a) where a = k // 2, already
            padded for the kernel apron.
        kernel: Square (k, k) float64 tap weights, k odd.

    Returns:
        (H, W) float64 response: out[y, x] = sum over (ky, kx) of
        kernel[ky, kx] * padded[y + ky, x + kx].

    Accumulation happens one tap at a time in row-major tap order so the
    floating-point rounding matches a scalar reference loop exactly. Zero
    taps are skipped; adding 0.0 to a non-negative accumulator is a no-op
    in IEEE-754, so skipping preserves bit-exactness while keeping the cost
    proportional to the occupied streak of a motion kernel.
    """
    k = kernel.shape[0]
    if kernel.shape != (k, k):
        raise ValueError(f"kernel must be square, got {kernel.shape}")
    a = k // 2
    h = padded.shape[0] - 2 * a
    w = padded.shape[1] - 2 * a
    if h <= 0 or w <= 0:
        raise ValueError("padded input smaller than kernel apron")
    out = np.zeros((h, w), dtype=np.float64)
    for ky in range(k):
        for kx in range(k):
            tap = kernel[ky, kx]
            if tap == 0.0:
                continue
            out += tap * padded[ky : ky + h, kx : kx + w]
    return out


def quantize_u8(values: np.ndarray) -> np.ndarray:
    """Round half away from zero to 8-bit samples (inputs are non-negative)."""
    return np.clip(np.floor(values + 0.5), 0.0, 255.0).astype(np.uint8)


def filter_channels_u8(pixels: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Filter an (H, W, 3) uint8 raster channel-by-channel with one kernel.

    Each channel is padded by edge replication for the kernel apron,
    correlated in float64, then quantized once at the end.
    """
    radius = kernel.shape[0] // 2
    out = np.empty_like(pixels)
    for c in range(pixels.shape[2]):
        padded = replicate_pad(pixels[:, :, c].astype(np.float64), radius)
        out[:, :, c] = quantize_u8(convolve2d_f64(padded, kernel))
    return out


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Build a normalized isotropic 2-D Gaussian kernel.

    The support radius is ceil(3 * sigma), clamped to at least 1, giving an
    odd kernel size of 2r + 1.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = max(1, int(np.ceil(3.0 * sigma)))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    yy, xx = np.meshgrid(ax, ax, indexing="ij")
    kern = np.exp(-(xx * xx + yy * yy) / (2.0 * sigma * sigma))
    return kern / kern.sum()


def box_filter(field: np.ndarray, radius: int = 1) -> np.ndarray:
    """Box-average a 2-D float array with edge-replicated borders."""
    if radius <= 0:
        return field.copy()
    size = 2 * radius + 1
    padded = np.pad(field, radius, mode="edge")
    integral = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.float64)
    integral[1:, 1:] = np.cumsum(np.cumsum(padded, axis=0), axis=1)
    h, w = field.shape
    total = (
        integral[size : size + h, size : size + w]
        - integral[size : size + h, 0:w]
        - integral[0:h, size : size + w]
        + integral[0:h, 0:w]
    )
    return total / float(size * size)
