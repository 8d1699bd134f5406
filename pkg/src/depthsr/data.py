"""Dataset ingestion, manifest handling, splitting, and the degradation
protocol that manufactures LR inputs from HR depth.

File conventions:

* depth: 16-bit single-channel PNG in millimeters (value / 1000 is
  meters, 0 means no return)
* images: 8-bit PNG or JPEG, intensities mapped to [0, 1]
* manifest: JSON lines with keys id, image, depth and optionally
  intrinsics {fx, fy, cx, cy}

Datasets are plain directory pairs with matching stems; anything
(NYUv2, Matterport3D, ETH3D exports) can be converted to this layout
with a one-line recipe, which keeps the loaders dataset-agnostic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .core import DepthMap, GuidanceImage, DimensionError, downsample_depth_nn
from . import synthbench

MM_PER_M = 1000.0


class FileIOError(OSError):
    """A required file is missing or unreadable."""


class InvalidDepthError(ValueError):
    """Loaded depth carries no valid pixel at all."""


@dataclass
class RGBDSample:
    sample_id: str
    image: GuidanceImage
    depth_hr: DepthMap | None = None
    depth_lr: DepthMap | None = None
    meta: dict = field(default_factory=dict)


@dataclass
class SplitSpec:
    seed: int = 0
    train_fraction: float = 0.7

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")


def read_depth_png(path) -> DepthMap:
    """16-bit millimeter PNG to meters; 0 stays invalid."""
    path = Path(path)
    if not path.exists():
        raise FileIOError(f"depth file not found: {path}")
    try:
        raw = np.asarray(Image.open(path))
    except Exception as exc:
        raise FileIOError(f"unreadable depth file {path}: {exc}") from exc
    if raw.ndim != 2:
        raise DimensionError(f"depth PNG must be single-channel, got shape {raw.shape}")
    return DepthMap(raw.astype(np.float64) / MM_PER_M)


def write_depth_png(d: DepthMap, path) -> None:
    """Meters to 16-bit millimeter PNG; invalid pixels write as 0."""
    mm = np.round(np.where(d.valid, d.values, 0.0) * MM_PER_M)
    mm = np.clip(mm, 0, np.iinfo(np.uint16).max).astype(np.uint16)
    Image.fromarray(mm).save(Path(path))


def read_image(path) -> GuidanceImage:
    """8-bit PNG/JPEG to [0, 1] guidance (RGB or grayscale)."""
    path = Path(path)
    if not path.exists():
        raise FileIOError(f"image file not found: {path}")
    try:
        img = Image.open(path)
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB")
        arr = np.asarray(img).astype(np.float64) / 255.0
    except FileIOError:
        raise
    except Exception as exc:
        raise FileIOError(f"unreadable image file {path}: {exc}") from exc
    return GuidanceImage(arr)


def write_image_png(img: GuidanceImage, path) -> None:
    arr = np.clip(np.round(img.values * 255.0), 0, 255).astype(np.uint8)
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr).save(Path(path))


def load_sample(image_path, depth_path, sample_id: str | None = None) -> RGBDSample:
    """Load a registered image/depth pair; depth_lr stays unset."""
    image = read_image(image_path)
    depth = read_depth_png(depth_path)
    if not depth.valid.any():
        raise InvalidDepthError(f"depth map {depth_path} has no valid pixel")
    sid = sample_id or Path(depth_path).stem
    return RGBDSample(sid, image, depth_hr=depth,
                      meta={"image_path": str(image_path), "depth_path": str(depth_path)})


def degrade(depth_hr: DepthMap, factor: int = 8, crop_policy: str = "center",
            quantize_step: float | None = None) -> DepthMap:
    """NN x``factor`` decimation after a center crop to divisibility.

    ``quantize_step`` optionally applies synthetic sensor binning before
    decimation (used when manufacturing quantized LR inputs from clean
    ground truth).
    """
    if factor < 1 or factor & (factor - 1):
        raise ValueError(f"factor must be a power of two, got {factor}")
    if crop_policy not in ("center", "none"):
        raise ValueError(f"unknown crop policy {crop_policy!r}")
    d = depth_hr
    if crop_policy == "center":
        h = (d.height // factor) * factor
        w = (d.width // factor) * factor
        r = (d.height - h) // 2
        c = (d.width - w) // 2
        d = DepthMap(d.values[r : r + h, c : c + w].copy(), d.valid[r : r + h, c : c + w].copy())
    if d.height < 8 * factor or d.width < 8 * factor:
        raise DimensionError(
            f"{depth_hr.height}x{depth_hr.width} degrades below the 8x8 minimum at factor {factor}"
        )
    if quantize_step is not None:
        d = synthbench.quantize(d, quantize_step)
    return downsample_depth_nn(d, factor)


def split(ids: list[str], spec: SplitSpec) -> tuple[list[str], list[str]]:
    """Deterministic shuffled partition with |train| = round(f * N)."""
    if len(ids) < 2:
        raise ValueError("need at least 2 ids to split")
    rng = np.random.default_rng(spec.seed)
    order = list(rng.permutation(len(ids)))
    n_train = int(round(spec.train_fraction * len(ids)))
    train = [ids[i] for i in order[:n_train]]
    test = [ids[i] for i in order[n_train:]]
    return train, test


def read_manifest(path) -> list[dict]:
    """JSON-lines manifest: one record per sample."""
    path = Path(path)
    if not path.exists():
        raise FileIOError(f"manifest not found: {path}")
    records = []
    with open(path) as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FileIOError(f"bad manifest line {line_no} in {path}: {exc}") from exc
            for key in ("id", "image", "depth"):
                if key not in rec:
                    raise FileIOError(f"manifest line {line_no} missing key {key!r}")
            records.append(rec)
    return records


def write_manifest(records: list[dict], path) -> None:
    with open(Path(path), "w") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")


def load_manifest_samples(path, base_dir=None) -> list[RGBDSample]:
    """Materialize every manifest record relative to ``base_dir``."""
    base = Path(base_dir) if base_dir is not None else Path(path).parent
    samples = []
    for rec in read_manifest(path):
        s = load_sample(base / rec["image"], base / rec["depth"], rec["id"])
        if "intrinsics" in rec:
            s.meta["intrinsics"] = rec["intrinsics"]
        samples.append(s)
    return samples
