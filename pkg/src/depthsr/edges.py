"""Sobel edge magnitudes and percentile-binarized edge maps.

The binary maps gate the false-edge loss and serve as the cycle-loss
target; the continuous magnitude doubles as a differentiable edge field
on the depth side. Borders use replicate padding so responses stay
bit-stable and testable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GuidanceImage, DepthMap

# Standard 3x3 Sobel kernels, correlation convention.
SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()


@dataclass
class EdgeMap:
    """Binary per-pixel edge indicator plus the threshold that produced it."""

    mask: np.ndarray
    threshold: float

    @property
    def fraction(self) -> float:
        return float(self.mask.mean())

    def as_float(self) -> np.ndarray:
        return self.mask.astype(np.float64)


def _correlate3(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """3x3 correlation with replicate border padding.

    The kernels sum to zero, so accumulating differences against the
    center pixel is algebraically identical and makes constant inputs
    cancel exactly instead of leaving float residue.
    """
    p = np.pad(plane, 1, mode="edge")
    out = np.zeros_like(plane, dtype=np.float64)
    for di in range(3):
        for dj in range(3):
            k = kernel[di, dj]
            if k != 0.0:
                out += k * (p[di : di + plane.shape[0], dj : dj + plane.shape[1]] - plane)
    return out


def _single_plane(gray) -> np.ndarray:
    if isinstance(gray, GuidanceImage):
        if gray.channels != 1:
            raise ValueError(f"expected a single-channel image, got {gray.channels} channels")
        return gray.plane(0)
    if isinstance(gray, DepthMap):
        return gray.values
    a = np.asarray(gray, dtype=np.float64)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D field, got shape {a.shape}")
    return a


def sobel_magnitude(gray) -> np.ndarray:
    """sqrt(Gx^2 + Gy^2) of a single-channel field."""
    plane = _single_plane(gray)
    gx = _correlate3(plane, SOBEL_X)
    gy = _correlate3(plane, SOBEL_Y)
    return np.sqrt(gx * gx + gy * gy)


def binary_edges(gray, p: float = 50.0) -> EdgeMap:
    """Threshold the Sobel magnitude at its p-th percentile (strictly above).

    A flat image therefore yields an empty map, and p=100 always does.
    Percentiles interpolate linearly between order statistics.
    """
    if not 0.0 <= p <= 100.0:
        raise ValueError(f"percentile must be in [0, 100], got {p}")
    mag = sobel_magnitude(gray)
    threshold = float(np.percentile(mag, p))
    return EdgeMap(mag > threshold, threshold)


def soft_depth_edges(d: DepthMap) -> np.ndarray:
    """Continuous Sobel magnitude of the depth values (no binarization)."""
    return sobel_magnitude(d.values)


def guidance_stack(img: GuidanceImage, p: float = 50.0) -> GuidanceImage:
    """Two-channel network guidance: [grayscale, binary edge map]."""
    gray = to_gray_plane(img)
    em = binary_edges(gray, p)
    return GuidanceImage(np.stack([gray, em.as_float()], axis=2))


def to_gray_plane(img: GuidanceImage) -> np.ndarray:
    """Grayscale 2-D plane of an RGB or grayscale guidance image."""
    from .core import to_grayscale

    return to_grayscale(img).plane(0)
