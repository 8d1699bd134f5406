"""Domain types and resampling primitives shared by the whole package.

Conventions used everywhere:

* Depth maps are single-channel ``float64`` grids in meters. A depth of 0
  encodes "no sensor return"; the validity mask is derived from that at
  ingestion and propagated explicitly through every resampling op.
* Guidance images are ``(H, W, C)`` float arrays with intensities in
  ``[0, 1]``, ``C`` in ``{1, 2, 3}`` (grayscale, gray+edges, RGB).
* All functions here are pure: inputs are never modified.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: ITU-R BT.601 luma weights, the conventional RGB -> gray default.
BT601_WEIGHTS = (0.299, 0.587, 0.114)


class DimensionError(ValueError):
    """Raised when array shapes violate an operation's contract."""


@dataclass
class DepthMap:
    """Single-channel metric depth grid with an explicit validity mask.

    ``values`` holds nonnegative depths in meters; ``valid`` marks pixels
    that carry a real measurement. Invalid pixels keep value 0.
    """

    values: np.ndarray
    valid: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DimensionError(f"depth must be 2-D, got shape {self.values.shape}")
        if np.any(self.values < 0):
            raise ValueError("depth values must be nonnegative")
        if self.valid is None:
            self.valid = self.values > 0
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != self.values.shape:
                raise DimensionError("valid mask shape must match depth shape")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "DepthMap":
        return DepthMap(self.values.copy(), self.valid.copy())


@dataclass
class GuidanceImage:
    """Intensity image registered to a depth grid, values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3 or v.shape[2] not in (1, 2, 3):
            raise DimensionError(f"guidance must be (H, W, C) with C in 1..3, got {v.shape}")
        if v.min() < -1e-9 or v.max() > 1 + 1e-9:
            raise ValueError("guidance intensities must lie in [0, 1]")
        self.values = np.clip(v, 0.0, 1.0)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    def plane(self, c: int = 0) -> np.ndarray:
        """2-D view of one channel."""
        return self.values[:, :, c]

    def copy(self) -> "GuidanceImage":
        return GuidanceImage(self.values.copy())


@dataclass
class Pyramid:
    """Guidance images ordered finest first, each level half the previous."""

    levels: list

    def __post_init__(self):
        for k in range(1, len(self.levels)):
            prev, cur = self.levels[k - 1], self.levels[k]
            if prev.height != 2 * cur.height or prev.width != 2 * cur.width:
                raise DimensionError("pyramid levels must halve height and width")

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, k: int) -> GuidanceImage:
        return self.levels[k]


def to_grayscale(img: GuidanceImage) -> GuidanceImage:
    """Collapse RGB to a single luma channel (BT.601); identity on grayscale."""
    if img.channels == 1:
        return img
    if img.channels != 3:
        raise ValueError(f"expected 1 or 3 channels, got {img.channels}")
    r, g, b = BT601_WEIGHTS
    luma = r * img.values[:, :, 0] + g * img.values[:, :, 1] + b * img.values[:, :, 2]
    return GuidanceImage(np.clip(luma, 0.0, 1.0)[:, :, None])


def downsample_depth_nn(d: DepthMap, factor: int) -> DepthMap:
    """Nearest-neighbor decimation: output[i, j] = input[i*factor, j*factor].

    This is the degradation used to manufacture LR network inputs; the mask
    is subsampled identically so holes survive decimation.
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if d.height % factor or d.width % factor:
        raise DimensionError(
            f"dimensions {d.height}x{d.width} not divisible by factor {factor}"
        )
    return DepthMap(d.values[::factor, ::factor].copy(), d.valid[::factor, ::factor].copy())


def upsample_nn(d: DepthMap, factor: int) -> DepthMap:
    """Nearest-neighbor replication to ``factor`` times the size."""
    factor = int(factor)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    values = np.repeat(np.repeat(d.values, factor, axis=0), factor, axis=1)
    valid = np.repeat(np.repeat(d.valid, factor, axis=0), factor, axis=1)
    return DepthMap(values, valid)


def upsample_bilinear(d: DepthMap, factor: int) -> DepthMap:
    """Mask-aware bilinear upsampling with half-pixel-center alignment.

    Invalid pixels carry zero interpolation weight; an output pixel is
    invalid only when every contributing input pixel is invalid. factor=1
    returns an identical copy.
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return d.copy()

    h, w = d.height, d.width
    oh, ow = h * factor, w * factor
    # Half-pixel-center source coordinates (matches area-downsample geometry).
    ys = (np.arange(oh) + 0.5) / factor - 0.5
    xs = (np.arange(ow) + 0.5) / factor - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :]

    vals = d.values
    mask = d.valid.astype(np.float64)

    def gather(a, yi, xi):
        return a[np.ix_(yi, xi)]

    out = np.zeros((oh, ow))
    wsum = np.zeros((oh, ow))
    for yi, wy_ in ((y0, 1.0 - wy), (y1, wy)):
        for xi, wx_ in ((x0, 1.0 - wx), (x1, wx)):
            wgt = wy_ * wx_ * gather(mask, yi, xi)
            out += wgt * gather(vals, yi, xi)
            wsum += wgt
    valid = wsum > 0
    out = np.where(valid, out / np.where(wsum > 0, wsum, 1.0), 0.0)
    return DepthMap(out, valid)


def fill_invalid_nearest(d: DepthMap) -> DepthMap:
    """Dense copy with every hole taking its nearest valid pixel's value.

    Used to build the network's input from sparse sensor maps so holes do
    not read as zero-depth structure; supervision keeps the real mask.
    """
    if d.valid.all():
        return d.copy()
    if not d.valid.any():
        raise ValueError("cannot fill a map with no valid pixel")
    from scipy.ndimage import distance_transform_edt

    idx = distance_transform_edt(~d.valid, return_distances=False, return_indices=True)
    filled = d.values[tuple(idx)]
    return DepthMap(filled, np.ones_like(d.valid))


def area_downsample2(img: GuidanceImage) -> GuidanceImage:
    """Anti-aliased 2x2 block-mean downsampling, the guidance-side reducer."""
    if img.height % 2 or img.width % 2:
        raise DimensionError("height and width must be even for 2x area averaging")
    v = img.values
    out = 0.25 * (v[0::2, 0::2] + v[0::2, 1::2] + v[1::2, 0::2] + v[1::2, 1::2])
    return GuidanceImage(out)


def build_pyramid(img: GuidanceImage, n_levels: int) -> Pyramid:
    """Area-average pyramid, finest first; one level per DSR stage."""
    n_levels = int(n_levels)
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    div = 2 ** (n_levels - 1)
    if img.height % div or img.width % div:
        raise DimensionError(
            f"dimensions {img.height}x{img.width} not divisible by 2^{n_levels - 1}"
        )
    levels = [img]
    for _ in range(n_levels - 1):
        levels.append(area_downsample2(levels[-1]))
    return Pyramid(levels)
