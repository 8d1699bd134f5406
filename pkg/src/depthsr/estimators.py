"""Scikit-learn style estimators wrapping the refinement machinery.

Two entry points:

* :class:`ZeroShotDepthRefiner` fits a fresh network on a single
  image/LR-depth pair at call time (test-time optimization) and predicts
  the refined HR depth.
* :class:`GuidedDepthUpscaler` trains once on a dataset of pairs and
  then refines unseen pairs with the trained weights.

Both follow the estimator contract: constructor stores hyperparameters
verbatim, ``fit`` returns self and sets trailing-underscore attributes,
``get_params``/``set_params`` come from ``BaseEstimator``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .core import DepthMap, GuidanceImage
from .losses import LossWeights
from .trainer import TrainConfig, TrainSample, network_prediction, train, zero_shot_refine


def _as_guidance(image) -> GuidanceImage:
    if isinstance(image, GuidanceImage):
        return image
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim not in (2, 3):
        raise ValueError(f"image must be 2-D or 3-D, got shape {arr.shape}")
    if arr.max() > 1.0 + 1e-9:
        arr = arr / 255.0
    return GuidanceImage(arr)


def _as_depth(depth) -> DepthMap:
    if isinstance(depth, DepthMap):
        return depth
    arr = np.asarray(depth, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"depth must be 2-D, got shape {arr.shape}")
    return DepthMap(arr)


class _ConfigMixin:
    def _config(self, mode: str) -> TrainConfig:
        weights = LossWeights(w_sleeve=self.w_sleeve, w_cycle=self.w_cycle,
                              w_fe=self.w_fe, w_tv=self.w_tv, s=self.sleeve_s)
        return TrainConfig(
            lr=self.lr, epochs=self.epochs, batch_size=self.batch_size,
            seed=self.seed, n_stages=self.n_stages, k=self.k, weights=weights,
            edge_percentile=self.edge_percentile, mode=mode,
            zero_shot_iters=self.iterations,
        )


class ZeroShotDepthRefiner(BaseEstimator, _ConfigMixin):
    """Single-pair test-time refiner: ``fit(image, depth_lr)`` optimizes a
    freshly seeded network on that pair alone; ``predict()`` returns the
    refined HR depth as a 2-D array.
    """

    def __init__(self, n_stages=3, k=16, iterations=500, lr=1e-4, seed=0,
                 w_sleeve=1.0, w_cycle=1.0, w_fe=0.1, w_tv=0.1, sleeve_s=0.05,
                 edge_percentile=50.0, epochs=1, batch_size=1):
        self.n_stages = n_stages
        self.k = k
        self.iterations = iterations
        self.lr = lr
        self.seed = seed
        self.w_sleeve = w_sleeve
        self.w_cycle = w_cycle
        self.w_fe = w_fe
        self.w_tv = w_tv
        self.sleeve_s = sleeve_s
        self.edge_percentile = edge_percentile
        self.epochs = epochs
        self.batch_size = batch_size

    def fit(self, image, depth_lr):
        config = self._config("zero_shot")
        refined, log = zero_shot_refine(_as_guidance(image), _as_depth(depth_lr), config)
        self.depth_refined_ = refined
        self.log_ = log
        return self

    def predict(self, image=None, depth_lr=None):
        """Refined depth of the fitted pair; pass a new pair to refit."""
        if image is not None or depth_lr is not None:
            self.fit(image, depth_lr)
        if not hasattr(self, "depth_refined_"):
            raise NotFittedError("call fit(image, depth_lr) first")
        return self.depth_refined_.values

    def fit_predict(self, image, depth_lr):
        return self.fit(image, depth_lr).predict()


class GuidedDepthUpscaler(BaseEstimator, _ConfigMixin):
    """Dataset-trained upscaler: ``fit`` runs self-supervised training over
    (image, depth_lr) pairs; ``predict(image, depth_lr)`` applies the
    trained network to a new pair.
    """

    def __init__(self, n_stages=3, k=16, epochs=60, batch_size=4, lr=1e-4, seed=0,
                 w_sleeve=1.0, w_cycle=1.0, w_fe=0.1, w_tv=0.1, sleeve_s=0.05,
                 edge_percentile=50.0, iterations=500):
        self.n_stages = n_stages
        self.k = k
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed
        self.w_sleeve = w_sleeve
        self.w_cycle = w_cycle
        self.w_fe = w_fe
        self.w_tv = w_tv
        self.sleeve_s = sleeve_s
        self.edge_percentile = edge_percentile
        self.iterations = iterations

    def fit(self, pairs, y=None):
        """``pairs``: iterable of (image, depth_lr) tuples or TrainSamples."""
        samples = []
        for idx, item in enumerate(pairs):
            if isinstance(item, TrainSample):
                samples.append(item)
            else:
                image, depth_lr = item
                samples.append(TrainSample(str(idx), _as_guidance(image), _as_depth(depth_lr)))
        config = self._config("train")
        self.network_, self.log_ = train(config, samples)
        self.config_ = config
        return self

    def predict(self, image, depth_lr):
        if not hasattr(self, "network_"):
            raise NotFittedError("call fit(pairs) first")
        refined = network_prediction(self.network_, _as_depth(depth_lr),
                                     _as_guidance(image), self.config_)
        return refined.values
