"""The four self-supervised objectives and their per-stage combination.

* sleeve: hinge fidelity to the upsampled sensor depth, free within +-s
* cycle: L1 between the cycled edge prediction and the image's binary edges
* false-edge: depth edge energy on pixels where the image shows no edge
* tv: epsilon-smoothed isotropic total variation

All reductions are means so the weights are resolution independent.
Every function takes torch tensors shaped (B, 1, H, W) and returns a
scalar tensor; each is differentiable and nonnegative.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import torch

from . import edges as edges_mod
from .model import edge_energy

TV_EPS = 1e-6


class EmptyMaskError(ValueError):
    """Sleeve loss evaluated with no valid reference pixels."""


@dataclass
class LossWeights:
    """Combination weights, the sleeve half-width s (meters), and per-term
    enable flags used by the ablation study. Disabled terms contribute 0.
    """

    w_sleeve: float = 1.0
    w_cycle: float = 1.0
    w_fe: float = 0.1
    w_tv: float = 0.1
    s: float = 0.05
    sleeve_enabled: bool = True
    cycle_enabled: bool = True
    fe_enabled: bool = True
    tv_enabled: bool = True

    def __post_init__(self):
        if min(self.w_sleeve, self.w_cycle, self.w_fe, self.w_tv) < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.s < 0:
            raise ValueError("sleeve half-width s must be nonnegative")

    def ablated(self, leave_out: str) -> "LossWeights":
        """Effective weights with one term removed.

        ``sleeve`` is never switched off entirely; its ablation replaces
        the hinge with plain L1 by forcing s = 0.
        """
        if leave_out == "sleeve":
            return replace(self, s=0.0)
        if leave_out == "cycle":
            return replace(self, w_cycle=0.0, cycle_enabled=False)
        if leave_out == "false_edge":
            return replace(self, w_fe=0.0, fe_enabled=False)
        if leave_out == "tv":
            return replace(self, w_tv=0.0, tv_enabled=False)
        raise ValueError(f"unknown loss name {leave_out!r}")


@dataclass
class LossBreakdown:
    """Per-stage scalar values of each term plus the weighted total."""

    terms: dict = field(default_factory=dict)
    total: float = 0.0

    def record(self) -> dict:
        out = dict(self.terms)
        out["total"] = self.total
        return out


def sleeve_loss(pred: torch.Tensor, ref: torch.Tensor, s: float,
                mask: torch.Tensor | None = None) -> torch.Tensor:
    """mean over valid pixels of max(|ref - pred| - s, 0).

    Inside the sleeve (|ref - pred| < s) both the value and the gradient
    are exactly zero; with s = 0 this is the masked mean absolute error.
    """
    err = (ref - pred).abs() - s
    hinge = err.clamp(min=0.0)
    if mask is None:
        return hinge.mean()
    m = mask.to(pred.dtype)
    n = m.sum()
    if n.item() == 0:
        raise EmptyMaskError("sleeve loss needs at least one valid reference pixel")
    return (hinge * m).sum() / n


def cycle_loss(cycled: torch.Tensor, gs_edges: torch.Tensor) -> torch.Tensor:
    """Plain L1 between the cycled edge field and the binary image edges."""
    return (cycled - gs_edges).abs().mean()


def false_edge_energy(pred: torch.Tensor, gate: torch.Tensor) -> torch.Tensor:
    """mean of squared depth-edge magnitude where the image has no edge.

    ``gate`` is (1 - E_gs): 1 on image-smooth pixels, 0 on image edges, so
    true object boundaries are never punished while quantization steps on
    smooth surfaces are. The squared magnitude concentrates the penalty on
    sharp steps; a smooth slope of equal total rise costs far less.
    """
    return (edge_energy(pred) * gate).mean()


def false_edge_loss(pred: torch.Tensor, gs: np.ndarray, p: float = 50.0) -> torch.Tensor:
    """Convenience wrapper that binarizes the grayscale guidance itself."""
    em = edges_mod.binary_edges(gs, p)
    gate = torch.as_tensor(1.0 - em.as_float(), dtype=pred.dtype, device=pred.device)
    return false_edge_energy(pred, gate.view(1, 1, *gate.shape))


def tv_reg(pred: torch.Tensor, eps: float = TV_EPS) -> torch.Tensor:
    """Epsilon-smoothed isotropic TV, mean-reduced.

    Forward differences with zero padding at the last row/column; the
    eps under the sqrt keeps the gradient defined on flat regions and is
    subtracted back out so constants map to exactly 0.
    """
    if pred.shape[-2] < 2 or pred.shape[-1] < 2:
        raise ValueError("tv_reg needs at least a 2x2 field")
    dv = torch.zeros_like(pred)
    dh = torch.zeros_like(pred)
    dv[..., :-1, :] = pred[..., 1:, :] - pred[..., :-1, :]
    dh[..., :, :-1] = pred[..., :, 1:] - pred[..., :, :-1]
    return (torch.sqrt(dv * dv + dh * dh + eps * eps) - eps).mean()


@dataclass
class StageTargets:
    """Per-stage fixed tensors the losses compare against.

    ``ref``/``ref_mask``: bilinear-upsampled sensor depth at stage scale;
    ``gs_edges``: the binary image edges as {0,1}; ``gate``: 1 - gs_edges.
    """

    ref: torch.Tensor
    ref_mask: torch.Tensor
    gs_edges: torch.Tensor
    gate: torch.Tensor


def total_loss(stages, final: torch.Tensor, targets: list[StageTargets],
               weights: LossWeights) -> tuple[torch.Tensor, LossBreakdown]:
    """Weighted sum of every enabled term over all stages plus the final
    output (which has no cycle transformer attached).

    ``targets`` holds one entry per stage, coarse to fine; the final
    output reuses the finest entry.
    """
    if len(targets) != len(stages):
        raise ValueError(f"expected {len(stages)} stage targets, got {len(targets)}")
    breakdown = LossBreakdown()
    total = final.new_zeros(())
    w = weights

    def add(name: str, stage_key: str, value: torch.Tensor, weight: float):
        nonlocal total
        breakdown.terms[f"{name}/{stage_key}"] = float(value.detach())
        total = total + weight * value

    items = [(str(i), s.depth, s.cycled_edges, t) for i, (s, t) in enumerate(zip(stages, targets))]
    items.append(("final", final, None, targets[-1]))
    for key, depth, cycled, t in items:
        if depth.shape[-2:] != t.ref.shape[-2:]:
            raise ValueError(
                f"stage {key}: prediction {tuple(depth.shape[-2:])} does not "
                f"match target scale {tuple(t.ref.shape[-2:])}"
            )
        if w.sleeve_enabled:
            add("sleeve", key, sleeve_loss(depth, t.ref, w.s, t.ref_mask), w.w_sleeve)
        if w.cycle_enabled and cycled is not None:
            add("cycle", key, cycle_loss(cycled, t.gs_edges), w.w_cycle)
        if w.fe_enabled:
            add("fe", key, false_edge_energy(depth, t.gate), w.w_fe)
        if w.tv_enabled:
            add("tv", key, tv_reg(depth), w.w_tv)
    breakdown.total = float(total.detach())
    return total, breakdown
