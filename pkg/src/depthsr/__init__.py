"""Self-supervised, edge-guided depth map super-resolution.

Cascaded x2 depth super-resolution modules guided by image edges, trained
with sleeve / cycle / false-edge / total-variation objectives. Supports
dataset training and zero-shot refinement of a single RGBD pair, plus a
synthetic quantized-depth benchmark with exact ground truth.
"""

from .core import DepthMap, GuidanceImage, Pyramid
from .estimators import GuidedDepthUpscaler, ZeroShotDepthRefiner
from .losses import LossWeights
from .metrics import MetricReport, evaluate
from .trainer import TrainConfig, zero_shot_refine

__version__ = "0.1.0"

__all__ = [
    "DepthMap",
    "GuidanceImage",
    "Pyramid",
    "LossWeights",
    "MetricReport",
    "TrainConfig",
    "GuidedDepthUpscaler",
    "ZeroShotDepthRefiner",
    "evaluate",
    "zero_shot_refine",
    "__version__",
]
