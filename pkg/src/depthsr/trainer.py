"""Self-supervised optimization: dataset training and zero-shot
single-image refinement.

Both modes share the optimizer settings (Adam, beta1=0.9, beta2=0.99,
eps=1e-8, initial lr 1e-4) and the per-scale loss combination. Dataset
training halves the learning rate every 10 epochs; zero-shot refinement
keeps it constant for its (default 500) iterations because on a single
pair one epoch is one iteration and the epoch schedule would freeze the
run almost immediately.

The high-resolution ground truth is unreachable from every loss path:
training consumes :class:`TrainSample`, which simply has no HR depth
field.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, asdict, replace

import numpy as np
import torch

from .core import (
    DepthMap,
    GuidanceImage,
    build_pyramid,
    fill_invalid_nearest,
    to_grayscale,
    upsample_bilinear,
)
from .edges import binary_edges
from .losses import LossWeights, StageTargets, total_loss
from .metrics import MetricReport, evaluate, aggregate
from .model import DepthSRNetwork, build_network

ABLATABLE = ("sleeve", "cycle", "false_edge", "tv")


class DivergenceError(RuntimeError):
    """Total loss became non-finite during dataset training."""


@dataclass
class TrainConfig:
    lr: float = 1e-4
    betas: tuple = (0.9, 0.99)
    epsilon: float = 1e-8
    epochs: int = 60
    batch_size: int = 4
    crop: int = 256
    seed: int = 0
    n_stages: int = 3
    k: int = 16
    weights: LossWeights = field(default_factory=LossWeights)
    edge_percentile: float = 50.0
    mode: str = "train"
    zero_shot_iters: int = 500
    precision: str = "float32"
    device: str = "cpu"
    residual_skip: bool = True

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.mode not in ("train", "zero_shot"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"unknown precision {self.precision!r}")
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if isinstance(self.betas, list):
            self.betas = tuple(self.betas)

    @property
    def dtype(self) -> torch.dtype:
        return torch.float64 if self.precision == "float64" else torch.float32

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def lr_at_epoch(lr0: float, epoch: int) -> float:
    """The published schedule: lr0 * 0.5 ** floor(epoch / 10)."""
    return lr0 * 0.5 ** (epoch // 10)


@dataclass
class TrainSample:
    """What the optimizer is allowed to see: guidance plus LR depth only."""

    sample_id: str
    image: GuidanceImage
    depth_lr: DepthMap

    @classmethod
    def from_pair(cls, sample_id: str, image: GuidanceImage, depth_lr: DepthMap) -> "TrainSample":
        return cls(sample_id, image, depth_lr)


@dataclass
class GuidanceLevel:
    """Per-stage fixed guidance arrays, coarse to fine."""

    stack: np.ndarray  # (H, W, 2) grayscale + binary edges
    gray: np.ndarray  # (H, W)
    edges01: np.ndarray  # (H, W) float {0, 1}


def prepare_guidance(image: GuidanceImage, n_stages: int, p: float) -> list[GuidanceLevel]:
    """Grayscale pyramid with per-level binary edges, ordered coarse to fine
    to match the stage order of the network."""
    pyramid = build_pyramid(to_grayscale(image), n_stages)
    levels = []
    for idx in range(n_stages - 1, -1, -1):
        gray = pyramid[idx].plane(0)
        e = binary_edges(gray, p).as_float()
        levels.append(GuidanceLevel(np.stack([gray, e], axis=2), gray, e))
    return levels


def build_targets(depth_lr: DepthMap, levels: list[GuidanceLevel],
                  dtype: torch.dtype, device: str) -> list[StageTargets]:
    """Sleeve references and edge targets for every stage scale."""
    targets = []
    for i, lvl in enumerate(levels):
        ref = upsample_bilinear(depth_lr, 2 ** (i + 1))
        t = lambda a: torch.as_tensor(a, dtype=dtype, device=device).view(1, 1, *a.shape)
        targets.append(StageTargets(
            ref=t(ref.values),
            ref_mask=t(ref.valid.astype(np.float64)),
            gs_edges=t(lvl.edges01),
            gate=t(1.0 - lvl.edges01),
        ))
    return targets


def guidance_tensors(levels: list[GuidanceLevel], dtype: torch.dtype, device: str) -> list[torch.Tensor]:
    return [
        torch.as_tensor(lvl.stack.transpose(2, 0, 1)[None], dtype=dtype, device=device)
        for lvl in levels
    ]


def _depth_tensors(depth_lr: DepthMap, dtype: torch.dtype, device: str):
    """Network input: holes filled with their nearest valid value so they
    do not read as zero-depth structure. Supervision keeps the real mask
    (the sleeve references are built from the unfilled map)."""
    filled = fill_invalid_nearest(depth_lr)
    d = torch.as_tensor(filled.values, dtype=dtype, device=device).view(1, 1, *filled.values.shape)
    return d, None


def _check_registration(image: GuidanceImage, depth_lr: DepthMap, n_stages: int):
    scale = 2 ** n_stages
    if image.height != scale * depth_lr.height or image.width != scale * depth_lr.width:
        raise ValueError(
            f"image {image.height}x{image.width} must be 2^{n_stages} x "
            f"depth {depth_lr.height}x{depth_lr.width}"
        )


def network_prediction(net: DepthSRNetwork, depth_lr: DepthMap, image: GuidanceImage,
                       config: TrainConfig) -> DepthMap:
    """One forward pass wrapped back into a DepthMap (clamped at 0)."""
    levels = prepare_guidance(image, config.n_stages, config.edge_percentile)
    g = guidance_tensors(levels, config.dtype, config.device)
    d, m = _depth_tensors(depth_lr, config.dtype, config.device)
    with torch.no_grad():
        _, final = net(d, g, m)
    values = final.squeeze(0).squeeze(0).double().cpu().numpy()
    return DepthMap(np.clip(values, 0.0, None), np.ones_like(values, dtype=bool))


def zero_shot_refine(image: GuidanceImage, depth_lr: DepthMap, config: TrainConfig,
                     log: list | None = None) -> tuple[DepthMap, list]:
    """Optimize a freshly initialized network on a single RGBD pair.

    Returns the refined depth and the per-iteration loss log. If the loss
    goes non-finite the loop stops before stepping, so the returned
    prediction comes from the last finite state.
    """
    _check_registration(image, depth_lr, config.n_stages)
    if log is None:
        log = []
    torch.manual_seed(config.seed)
    net = build_network(config.n_stages, config.k, config.seed, config.dtype,
                        residual=config.residual_skip)
    levels = prepare_guidance(image, config.n_stages, config.edge_percentile)
    g = guidance_tensors(levels, config.dtype, config.device)
    targets = build_targets(depth_lr, levels, config.dtype, config.device)
    d, m = _depth_tensors(depth_lr, config.dtype, config.device)

    opt = torch.optim.Adam(net.parameters(), lr=config.lr, betas=config.betas,
                           eps=config.epsilon)
    log.append({"event": "config", "config": config.to_dict()})
    last_finite = None
    for it in range(config.zero_shot_iters):
        stages, final = net(d, g, m)
        loss, breakdown = total_loss(stages, final, targets, config.weights)
        if not torch.isfinite(loss):
            if last_finite is not None:
                net.load_state_dict(last_finite)
            log.append({"event": "abort", "iteration": it,
                        "reason": "non-finite loss; restored last finite parameters"})
            break
        if loss.requires_grad:  # all-zero weights leave nothing to optimize
            last_finite = {k: v.detach().clone() for k, v in net.state_dict().items()}
            opt.zero_grad()
            loss.backward()
            opt.step()
        rec = {"event": "iter", "iteration": it, "lr": config.lr}
        rec.update(breakdown.record())
        log.append(rec)
    return network_prediction(net, depth_lr, image, config), log


def _crop_positions(rng: np.random.Generator, sample: TrainSample, crop_hr: int, factor: int):
    h, w = sample.image.height, sample.image.width
    if h < crop_hr or w < crop_hr:
        return None
    r = int(rng.integers(0, (h - crop_hr) // factor + 1)) * factor
    c = int(rng.integers(0, (w - crop_hr) // factor + 1)) * factor
    return r, c


def _crop_sample(sample: TrainSample, r: int, c: int, crop_hr: int, factor: int) -> TrainSample:
    img = GuidanceImage(sample.image.values[r : r + crop_hr, c : c + crop_hr].copy())
    lr = DepthMap(
        sample.depth_lr.values[r // factor : (r + crop_hr) // factor,
                               c // factor : (c + crop_hr) // factor].copy(),
        sample.depth_lr.valid[r // factor : (r + crop_hr) // factor,
                              c // factor : (c + crop_hr) // factor].copy(),
    )
    return TrainSample(sample.sample_id, img, lr)


def train(config: TrainConfig, dataset: list[TrainSample], checkpoint_dir=None,
          log: list | None = None) -> tuple[DepthSRNetwork, list]:
    """Batch self-supervised training over a dataset of guidance/LR pairs.

    Each epoch visits every sample once (seeded order) in crop batches;
    the learning rate follows lr * 0.5 ** floor(epoch / 10). Checkpoints
    are written per epoch when ``checkpoint_dir`` is given.
    """
    if not dataset:
        raise ValueError("training needs at least one sample")
    for s in dataset:
        _check_registration(s.image, s.depth_lr, config.n_stages)
    if log is None:
        log = []
    torch.manual_seed(config.seed)
    net = build_network(config.n_stages, config.k, config.seed, config.dtype,
                        residual=config.residual_skip)
    opt = torch.optim.Adam(net.parameters(), lr=config.lr, betas=config.betas,
                           eps=config.epsilon)
    factor = 2 ** config.n_stages
    rng = np.random.default_rng(config.seed)
    log.append({"event": "config", "config": config.to_dict()})

    it = 0
    for epoch in range(config.epochs):
        lr = lr_at_epoch(config.lr, epoch)
        for group in opt.param_groups:
            group["lr"] = lr
        log.append({"event": "epoch", "epoch": epoch, "lr": lr})
        order = rng.permutation(len(dataset))
        for start in range(0, len(order), config.batch_size):
            batch = []
            for idx in order[start : start + config.batch_size]:
                s = dataset[int(idx)]
                pos = _crop_positions(rng, s, config.crop, factor)
                batch.append(s if pos is None else _crop_sample(s, *pos, config.crop, factor))
            loss, breakdown = _batch_loss(net, batch, config)
            if not torch.isfinite(loss):
                raise DivergenceError(
                    f"non-finite total loss at epoch {epoch}, iteration {it}"
                )
            if loss.requires_grad:
                opt.zero_grad()
                loss.backward()
                opt.step()
            rec = {"event": "iter", "epoch": epoch, "iteration": it, "lr": lr}
            rec.update(breakdown.record())
            log.append(rec)
            it += 1
        if checkpoint_dir is not None:
            save_checkpoint(net, config, f"{checkpoint_dir}/checkpoint_epoch_{epoch:04d}.pt")
    return net, log


def _batch_loss(net: DepthSRNetwork, batch: list[TrainSample], config: TrainConfig):
    """Mean of per-sample totals; crops may differ in size across samples,
    so samples run through the graph individually."""
    total = None
    merged = None
    for s in batch:
        levels = prepare_guidance(s.image, config.n_stages, config.edge_percentile)
        g = guidance_tensors(levels, config.dtype, config.device)
        targets = build_targets(s.depth_lr, levels, config.dtype, config.device)
        d, m = _depth_tensors(s.depth_lr, config.dtype, config.device)
        stages, final = net(d, g, m)
        loss, breakdown = total_loss(stages, final, targets, config.weights)
        total = loss if total is None else total + loss
        if merged is None:
            merged = breakdown
        else:
            for key, v in breakdown.terms.items():
                merged.terms[key] = merged.terms.get(key, 0.0) + v
            merged.total += breakdown.total
    n = len(batch)
    for key in merged.terms:
        merged.terms[key] /= n
    merged.total /= n
    return total / n, merged


def save_checkpoint(net: DepthSRNetwork, config: TrainConfig, path) -> None:
    """Single-archive checkpoint: tensor map plus a manifest."""
    torch.save({
        "format_version": 1,
        "state_dict": net.state_dict(),
        "manifest": {
            "n_stages": net.n_stages,
            "k": net.k,
            "residual": net.residual,
            "seed": config.seed,
            "config_hash": config.hash(),
            "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        },
    }, path)


def load_checkpoint(path, device: str = "cpu") -> tuple[DepthSRNetwork, dict]:
    blob = torch.load(path, map_location=device, weights_only=True)
    manifest = blob["manifest"]
    net = DepthSRNetwork(n_stages=manifest["n_stages"], k=manifest["k"],
                         residual=manifest.get("residual", True))
    sample = next(iter(blob["state_dict"].values()))
    net.to(dtype=sample.dtype)
    net.load_state_dict(blob["state_dict"])
    return net, manifest


def run_ablation(config: TrainConfig, cases, leave_out: str | None,
                 log: list | None = None) -> tuple[MetricReport, dict]:
    """Zero-shot the benchmark cases with one loss term removed.

    ``leave_out`` of None runs the full configuration; "sleeve" swaps the
    hinge for plain L1 (s = 0) instead of removing the term. Returns the
    macro-aggregated report plus the effective config that was run.
    """
    if leave_out is not None and leave_out not in ABLATABLE:
        raise ValueError(f"unknown loss name {leave_out!r}; expected one of {ABLATABLE}")
    weights = config.weights if leave_out is None else config.weights.ablated(leave_out)
    effective = replace(config, weights=weights)
    if log is not None:
        log.append({"event": "ablation_config", "leave_out": leave_out,
                    "config": effective.to_dict()})
    reports = []
    for case in cases:
        refined, _ = zero_shot_refine(case.image, case.depth_lr, effective)
        reports.append(evaluate(refined, case.true_depth))
    return aggregate(reports), effective.to_dict()


def ablation_study(config: TrainConfig, cases, log: list | None = None) -> dict:
    """Full model plus each single-term ablation, as a name -> report map."""
    results = {"full": run_ablation(config, cases, None, log)[0]}
    for name in ABLATABLE:
        results[name] = run_ablation(config, cases, name, log)[0]
    return results
