"""Synthetic scenes with exact ground truth plus the sensor-binning
degradation that manufactures the stairs artifact.

Depth fields are analytic (ramp, box on a plane, curved patch) and the
guidance image is a Lambertian shading of the depth-derived normals under
an oblique light. Planar ramps therefore shade uniformly (no image
edges) while box rims shade differently from their surroundings, so true
object boundaries appear in both modalities and quantization steps appear
only in depth. That makes the false-edge premise exactly true here and
lets every training claim be verified against a known unquantized truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DepthMap, GuidanceImage, downsample_depth_nn
from . import core

SCENE_KINDS = ("ramp", "box_on_plane", "curved")

#: Default sensor bin width in meters.
DEFAULT_STEP = 0.1
#: Default ramp slope (m per HR pixel): 8-pixel stairs at a 0.1 m step.
DEFAULT_RAMP_SLOPE = 0.0125


@dataclass
class SceneSpec:
    """Analytic scene description.

    ``slope`` is meters per pixel along +x (and ``slope_y`` along +y);
    boxes are (row0, col0, height_px, width_px, depth_offset_m) tuples
    with negative offsets bringing the box closer to the camera.
    """

    kind: str = "ramp"
    height: int = 512
    width: int = 512
    z0: float = 2.0
    slope: float = DEFAULT_RAMP_SLOPE
    slope_y: float = 0.0
    boxes: list = field(default_factory=list)
    curvature: float = 4e-6
    light: tuple = (0.45, 0.25, 0.86)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise ValueError(f"unknown scene kind {self.kind!r}")
        if self.height < 2 or self.width < 2:
            raise ValueError("scene must be at least 2x2")


def _depth_field(spec: SceneSpec) -> np.ndarray:
    i = np.arange(spec.height, dtype=np.float64)[:, None]
    j = np.arange(spec.width, dtype=np.float64)[None, :]
    z = spec.z0 + spec.slope * j + spec.slope_y * i
    if spec.kind == "curved":
        ci, cj = (spec.height - 1) / 2.0, (spec.width - 1) / 2.0
        z = z + spec.curvature * ((i - ci) ** 2 + (j - cj) ** 2)
    if spec.kind == "box_on_plane":
        boxes = spec.boxes or [default_box(spec)]
        for (r0, c0, bh, bw, dz) in boxes:
            z[r0 : r0 + bh, c0 : c0 + bw] += dz
    if z.min() <= 0:
        raise ValueError("scene geometry produced nonpositive depth")
    return z


def default_box(spec: SceneSpec) -> tuple:
    """Centered box covering ~1/9 of the scene, 0.3 m closer than the floor."""
    bh, bw = spec.height // 3, spec.width // 3
    return (spec.height // 3, spec.width // 3, bh, bw, -0.3)


def box_boundary_mask(spec: SceneSpec) -> np.ndarray:
    """Analytic edge set: pixels adjacent to a box rim (both sides)."""
    z = _depth_field(spec)
    edge = np.zeros(z.shape, dtype=bool)
    edge[:-1, :] |= z[1:, :] != z[:-1, :]
    edge[1:, :] |= z[1:, :] != z[:-1, :]
    edge[:, :-1] |= z[:, 1:] != z[:, :-1]
    edge[:, 1:] |= z[:, 1:] != z[:, :-1]
    if spec.kind == "ramp" or spec.kind == "curved":
        edge[:] = False
    return edge


def lambertian_shading(z: np.ndarray, light: tuple) -> np.ndarray:
    """Grayscale from depth-derived normals, normalized to [0, 1]."""
    gy, gx = np.gradient(z)
    l = np.asarray(light, dtype=np.float64)
    l = l / np.linalg.norm(l)
    # Surface normal of the height field (-dz/dx, -dz/dy, 1), normalized.
    norm = np.sqrt(gx * gx + gy * gy + 1.0)
    shade = np.clip((-gx * l[0] - gy * l[1] + l[2]) / norm, 0.0, None)
    peak = shade.max()
    return shade / peak if peak > 0 else np.ones_like(shade)


def render_scene(spec: SceneSpec) -> tuple[DepthMap, GuidanceImage]:
    """Analytic depth plus its Lambertian grayscale rendering."""
    z = _depth_field(spec)
    gray = lambertian_shading(z, spec.light)
    return DepthMap(z), GuidanceImage(gray[:, :, None])


def quantize(d: DepthMap, step: float) -> DepthMap:
    """Sensor binning: round(d / step) * step on valid pixels.

    Rounds half away from zero (floor(x + 0.5)) so ramps bin into even
    plateaus; numpy's half-to-even would alternate plateau widths.
    Idempotent; the error is bounded by step / 2.
    """
    if step <= 0:
        raise ValueError("quantization step must be positive")
    q = np.where(d.valid, np.floor(d.values / step + 0.5) * step, 0.0)
    return DepthMap(q, d.valid.copy())


def sparsify(d: DepthMap, keep_fraction: float, seed: int = 0) -> DepthMap:
    """Randomly invalidate pixels, keeping the given fraction (seeded).

    Mimics sparse ground-truth sensors where most of the grid carries no
    return; values at dropped pixels are zeroed like any other hole.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must be in (0, 1]")
    if keep_fraction == 1.0:
        return d.copy()
    rng = np.random.default_rng(seed)
    keep = rng.random(d.values.shape) < keep_fraction
    valid = d.valid & keep
    return DepthMap(np.where(valid, d.values, 0.0), valid)


@dataclass
class BenchmarkCase:
    """A degraded observation with the unquantized truth retained."""

    case_id: str
    image: GuidanceImage
    depth_lr: DepthMap
    true_depth: DepthMap
    spec: SceneSpec
    step: float
    factor: int


def make_benchmark_case(spec: SceneSpec, step: float = DEFAULT_STEP, factor: int = 8,
                        keep_fraction: float = 1.0, case_id: str = "case") -> BenchmarkCase:
    """Quantize the true depth, decimate it x``factor`` with NN, and keep
    the clean analytic truth for evaluation.

    ``keep_fraction`` < 1 additionally drops LR pixels (seeded by the
    scene seed), mimicking sparse sensor returns.
    """
    if spec.height % factor or spec.width % factor:
        raise core.DimensionError("scene dims must be divisible by the decimation factor")
    true_depth, image = render_scene(spec)
    lr = downsample_depth_nn(quantize(true_depth, step), factor)
    if keep_fraction < 1.0:
        lr = sparsify(lr, keep_fraction, seed=spec.seed)
    return BenchmarkCase(case_id, image, lr, true_depth, spec, step, factor)


def baseline_suite(n_cases: int = 20, size: int = 128, factor: int = 8,
                   step: float = DEFAULT_STEP, seed: int = 0) -> list[BenchmarkCase]:
    """Varied small scenes for interpolation-baseline comparisons.

    Slopes are drawn so quantization plateaus stay wider than the
    decimation stride (stairs survive into the LR input).
    """
    rng = np.random.default_rng(seed)
    cases = []
    kinds = ["ramp", "box_on_plane", "curved"]
    for i in range(n_cases):
        kind = kinds[i % len(kinds)]
        slope = float(rng.uniform(0.0015, 0.004))
        spec = SceneSpec(
            kind=kind, height=size, width=size,
            z0=float(rng.uniform(1.5, 3.0)), slope=slope,
            slope_y=float(rng.uniform(-0.3, 0.3)) * slope,
            curvature=float(rng.uniform(2e-6, 8e-6)),
            seed=int(rng.integers(0, 2**31)),
        )
        if kind == "box_on_plane":
            spec.boxes = [
                (size // 4, size // 4, size // 3, size // 3, -float(rng.uniform(0.2, 0.4)))
            ]
        cases.append(make_benchmark_case(spec, step, factor, case_id=f"{kind}_{i:02d}"))
    return cases


def drop_box_returns(case: BenchmarkCase, keep_floor: float = 0.6,
                     core_px: int = 1, margin_lr: int = 1) -> BenchmarkCase:
    """Invalidate the LR returns over every box except a small center core.

    Models objects the sensor fails on (dark or specular surfaces): the
    image still shows the full object outline while the depth map carries
    only a seed of its level. The dropout extends ``margin_lr`` LR pixels
    past each box so the rim band carries no depth returns at all (sensors
    blur out at boundaries); reconstructing the object's extent then
    requires carrying the image edges back into the geometry.
    """
    spec = case.spec
    factor = case.factor
    lr = case.depth_lr
    rng = np.random.default_rng(spec.seed + 1)
    keep = rng.random(lr.values.shape) < keep_floor
    h, w = lr.values.shape
    for (r0, c0, bh, bw, _dz) in spec.boxes or [default_box(spec)]:
        rl = max(r0 // factor - margin_lr, 0)
        cl = max(c0 // factor - margin_lr, 0)
        rh = min((r0 + bh) // factor + margin_lr, h)
        ch = min((c0 + bw) // factor + margin_lr, w)
        keep[rl:rh, cl:ch] = False
        mr, mc = (rl + rh) // 2, (cl + ch) // 2
        keep[mr : mr + core_px, mc : mc + core_px] = True
    valid = lr.valid & keep
    lr_sparse = DepthMap(np.where(valid, lr.values, 0.0), valid)
    return BenchmarkCase(case.case_id, case.image, lr_sparse, case.true_depth,
                         spec, case.step, factor)


def ablation_suite(size: int = 96, factor: int = 8, step: float = 0.3,
                   seed: int = 7) -> list[BenchmarkCase]:
    """Coarse-binned box scenes whose LR depth misses the boxes (center
    seed excepted), used by the ablation study.

    The design isolates what each loss term uniquely contributes:

    * floors are exactly flat and all levels are bin-exact, so the
      percentile threshold picks out true box rims and the sleeve
      reference is error-free wherever it is valid;
    * each box (plus a margin past its rim, where sensors blur out) has
      no depth returns beyond a small center seed, so the object's extent
      exists only in the image;
    * the coarse bin width makes the default sleeve (half a bin) wide,
      leaving the prediction free to detach wherever the image-to-
      geometry cycle does not hold it in place.
    """
    rng = np.random.default_rng(seed)
    cases = []
    for i, (b, dz) in enumerate(((size // 3, -0.6), (size // 3 + 4, -0.6))):
        spec = SceneSpec(
            kind="box_on_plane", height=size, width=size, z0=2.1,
            slope=0.0, slope_y=0.0,
            boxes=[((size - b) // 2, (size - b) // 2, b, b, dz)],
            seed=int(rng.integers(0, 2**31)),
        )
        case = make_benchmark_case(spec, step, factor, case_id=f"ablation_boxes_{i}")
        cases.append(drop_box_returns(case, keep_floor=1.0, core_px=1, margin_lr=2))
    return cases
