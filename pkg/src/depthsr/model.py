"""Learnable graphs: the x2 DSR module, refinement block, full cascade,
and the geometry-to-image cycle transformer.

Every block follows the same channel plan [8, 8, ..., 8, k, 1]: all inner
convolutions output 8 channels, the second-to-last outputs k (k >= 8) and
the last is a linear 1x1 projection to one channel. ReLU follows every
other conv/deconv.

Each depth-producing block is residual on top of a bilinear upsample of
its input and its final 1x1 projection is zero-initialized, so a freshly
seeded network starts out as a plain bilinear upsampler. Zero-shot
optimization then only has to learn corrections, which is what makes the
short test-time schedules converge.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

BASE_WIDTH = 8
DILATION_RATES = (1, 2, 4, 8)
#: Smoothing added under the sqrt of edge magnitudes so the gradient is
#: defined (and zero) on flat regions; subtracted back out so constants
#: map to exactly zero.
EDGE_EPS = 1e-6

_SOBEL_X = torch.tensor([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.t().contiguous()


def sobel_components(x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-pixel Sobel responses (Gx, Gy) of a (B, 1, H, W) field.

    Replicate border padding, matching :mod:`depthsr.edges`.
    """
    kx = _SOBEL_X.to(dtype=x.dtype, device=x.device).view(1, 1, 3, 3)
    ky = _SOBEL_Y.to(dtype=x.dtype, device=x.device).view(1, 1, 3, 3)
    xp = F.pad(x, (1, 1, 1, 1), mode="replicate")
    return F.conv2d(xp, kx), F.conv2d(xp, ky)


def soft_edges(x: torch.Tensor, eps: float = EDGE_EPS) -> torch.Tensor:
    """Smoothed Sobel magnitude sqrt(Gx^2 + Gy^2 + eps^2) - eps.

    Differentiable everywhere (gradient 0 on flat regions), within eps of
    the exact magnitude, and exactly 0 on constants.
    """
    gx, gy = sobel_components(x)
    return torch.sqrt(gx * gx + gy * gy + eps * eps) - eps


def edge_energy(x: torch.Tensor) -> torch.Tensor:
    """Squared Sobel magnitude Gx^2 + Gy^2 (smooth, no eps needed)."""
    gx, gy = sobel_components(x)
    return gx * gx + gy * gy


def masked_bilinear_up2(x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
    """x2 bilinear upsample where invalid pixels carry zero weight.

    With a full mask (or ``mask=None``) this is plain half-pixel-center
    bilinear interpolation.
    """
    if mask is None:
        return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
    num = F.interpolate(x * mask, scale_factor=2, mode="bilinear", align_corners=False)
    den = F.interpolate(mask, scale_factor=2, mode="bilinear", align_corners=False)
    return torch.where(den > 0, num / den.clamp(min=1e-12), torch.zeros_like(num))


def _conv3(in_ch: int, out_ch: int, dilation: int = 1) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, 3, padding=dilation, dilation=dilation)


class UpsamplePath(nn.Module):
    """Depth branch of a DSR module: 2 convs, stride-2 deconv, 3 convs.

    Takes the (B, 1, H, W) depth and returns 8-channel features at
    (2H, 2W).
    """

    def __init__(self, width: int = BASE_WIDTH):
        super().__init__()
        self.pre = nn.Sequential(
            _conv3(1, width), nn.ReLU(inplace=True),
            _conv3(width, width), nn.ReLU(inplace=True),
        )
        self.deconv = nn.ConvTranspose2d(width, width, 3, stride=2, padding=1, output_padding=1)
        self.post = nn.Sequential(
            nn.ReLU(inplace=True),
            _conv3(width, width), nn.ReLU(inplace=True),
            _conv3(width, width), nn.ReLU(inplace=True),
            _conv3(width, width), nn.ReLU(inplace=True),
        )

    def forward(self, depth: torch.Tensor) -> torch.Tensor:
        return self.post(self.deconv(self.pre(depth)))


class DilatedInception(nn.Module):
    """Four parallel 3x3 convs at dilations 1/2/4/8, concatenated and fused."""

    def __init__(self, in_ch: int, width: int = BASE_WIDTH):
        super().__init__()
        self.branches = nn.ModuleList(_conv3(in_ch, width, d) for d in DILATION_RATES)
        self.fuse = nn.Conv2d(width * len(DILATION_RATES), width, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = [F.relu(b(x)) for b in self.branches]
        return F.relu(self.fuse(torch.cat(feats, dim=1)))


class RefinementBlock(nn.Module):
    """Dilated inception followed by ten convs ending in a linear 1x1.

    The conv stack runs [8]*8 -> k -> 1; the final 1x1 is the block head
    and is zero-initialized by :func:`init_network`.
    """

    def __init__(self, in_ch: int, k: int = 16, width: int = BASE_WIDTH):
        super().__init__()
        self.inception = DilatedInception(in_ch, width)
        body = []
        for _ in range(8):
            body += [_conv3(width, width), nn.ReLU(inplace=True)]
        body += [_conv3(width, k), nn.ReLU(inplace=True)]
        self.body = nn.Sequential(*body)
        self.head = nn.Conv2d(k, 1, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.body(self.inception(x)))


class DSRModule(nn.Module):
    """One x2 depth super-resolution stage.

    Consumes (B, 1, H, W) depth plus (B, 2, 2H, 2W) guidance and produces
    (B, 1, 2H, 2W) depth. With ``residual=True`` (default) the refinement
    adds onto a bilinear upsample of the input, so a zero-headed stage is
    an identity upsampler; ``residual=False`` is the plain cascade that
    must build its output from scratch.
    """

    def __init__(self, k: int = 16, width: int = BASE_WIDTH, residual: bool = True):
        super().__init__()
        self.residual = residual
        self.up = UpsamplePath(width)
        self.refine = RefinementBlock(width + 2, k, width)

    def forward(
        self,
        depth: torch.Tensor,
        guidance: torch.Tensor,
        mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        if guidance.shape[-2] != 2 * depth.shape[-2] or guidance.shape[-1] != 2 * depth.shape[-1]:
            raise ValueError(
                f"guidance {tuple(guidance.shape[-2:])} must be exactly 2x "
                f"depth {tuple(depth.shape[-2:])}"
            )
        feats = self.up(depth)
        out = self.refine(torch.cat([feats, guidance], dim=1))
        if self.residual:
            out = out + masked_bilinear_up2(depth, mask)
        return out


class CycleModule(nn.Module):
    """Geometry-to-image transformer predicting the image edge field.

    Input is the predicted depth concatenated with its soft edges; the
    body is 15 consecutive 3x3 convs ending with a single linear 1x1.
    """

    def __init__(self, k: int = 16, width: int = BASE_WIDTH):
        super().__init__()
        body = [_conv3(2, width), nn.ReLU(inplace=True)]
        for _ in range(13):
            body += [_conv3(width, width), nn.ReLU(inplace=True)]
        body += [_conv3(width, k), nn.ReLU(inplace=True)]
        self.body = nn.Sequential(*body)
        self.head = nn.Conv2d(k, 1, 1)

    def forward(self, depth: torch.Tensor) -> torch.Tensor:
        x = torch.cat([depth, soft_edges(depth)], dim=1)
        return self.head(self.body(x))


@dataclass
class StageOutput:
    """Per-stage prediction: depth and the cycled image-edge field."""

    depth: torch.Tensor
    cycled_edges: torch.Tensor


class DepthSRNetwork(nn.Module):
    """n_stages cascaded DSR modules, a final refinement block, and one
    cycle transformer per stage (parameters not shared across scales).

    ``forward`` consumes LR depth plus per-stage guidance stacks ordered
    coarse to fine (stage i guidance at 2^(i+1) times the LR grid) and
    returns the per-stage outputs together with the final depth.
    """

    def __init__(self, n_stages: int = 3, k: int = 16, width: int = BASE_WIDTH,
                 residual: bool = True):
        super().__init__()
        if n_stages < 1:
            raise ValueError("n_stages must be >= 1")
        if k < 8:
            raise ValueError(f"channel plan requires k >= 8, got k={k}")
        self.n_stages = n_stages
        self.k = k
        self.residual = residual
        self.dsr = nn.ModuleList(DSRModule(k, width, residual) for _ in range(n_stages))
        self.final_refine = RefinementBlock(3, k, width)
        self.cycle = nn.ModuleList(CycleModule(k, width) for _ in range(n_stages))

    def forward(
        self,
        depth_lr: torch.Tensor,
        guidance: list[torch.Tensor],
        mask: torch.Tensor | None = None,
    ) -> tuple[list[StageOutput], torch.Tensor]:
        if len(guidance) != self.n_stages:
            raise ValueError(f"expected {self.n_stages} guidance levels, got {len(guidance)}")
        scale = 2 ** self.n_stages
        if guidance[-1].shape[-2] != scale * depth_lr.shape[-2] or (
            guidance[-1].shape[-1] != scale * depth_lr.shape[-1]
        ):
            raise ValueError(
                f"finest guidance {tuple(guidance[-1].shape[-2:])} must be "
                f"2^{self.n_stages} x LR depth {tuple(depth_lr.shape[-2:])}"
            )
        stages = []
        depth = depth_lr
        stage_mask = mask
        for i in range(self.n_stages):
            depth = self.dsr[i](depth, guidance[i], stage_mask)
            stage_mask = None  # stage outputs are dense
            stages.append(StageOutput(depth=depth, cycled_edges=self.cycle[i](depth)))
        final = self.final_refine(torch.cat([depth, guidance[-1]], dim=1))
        if self.residual:
            final = final + depth
        return stages, final


def init_network(net: DepthSRNetwork, seed: int) -> DepthSRNetwork:
    """Deterministic in-place initialization.

    He fan-in normal for conv/deconv weights, zero biases, and zero
    weights for every depth-producing head (the refinement blocks' final
    1x1 projections), so the freshly seeded cascade acts as a bilinear
    upsampler. Cycle-module heads keep He init: their output feeds only
    the cycle loss, and a live head lets that loss shape the depth from
    the first iteration.
    """
    gen = torch.Generator().manual_seed(int(seed))
    heads = {id(m.head.weight) for m in net.modules() if isinstance(m, RefinementBlock)}
    for name, p in sorted(net.named_parameters(), key=lambda kv: kv[0]):
        with torch.no_grad():
            if p.ndim == 1 or id(p) in heads:  # biases and heads
                p.zero_()
            else:
                fan_in = p.shape[1] * p.shape[2] * p.shape[3]
                if isinstance(_owner_of(net, name), nn.ConvTranspose2d):
                    fan_in = p.shape[0] * p.shape[2] * p.shape[3]
                std = (2.0 / fan_in) ** 0.5
                vals = torch.empty(p.shape, dtype=torch.float64)
                vals.normal_(0.0, std, generator=gen)
                p.copy_(vals.to(p.dtype))
    return net


def _owner_of(net: nn.Module, param_name: str) -> nn.Module:
    mod_path = param_name.rsplit(".", 1)[0]
    return net.get_submodule(mod_path)


def build_network(n_stages: int = 3, k: int = 16, seed: int = 0,
                  dtype: torch.dtype = torch.float32,
                  residual: bool = True) -> DepthSRNetwork:
    """Construct and deterministically initialize a network."""
    net = DepthSRNetwork(n_stages=n_stages, k=k, residual=residual)
    net.to(dtype=dtype)
    init_network(net, seed)
    return net


def parameter_count(n_stages: int, k: int, width: int = BASE_WIDTH) -> int:
    """Closed-form total parameter count of the full cascade.

    Per-layer inventory (conv params = out*in*kh*kw + out):

    * upsample path: conv 1->8, conv 8->8, deconv 8->8, 3x conv 8->8
    * refinement(in_ch): 4 dilated convs in_ch->8, 1x1 fuse 32->8,
      8x conv 8->8, conv 8->k, 1x1 conv k->1
    * cycle: conv 2->8, 13x conv 8->8, conv 8->k, 1x1 conv k->1

    and the network holds n_stages DSR modules (upsample path +
    refinement over 10 input channels), one final refinement over 3
    input channels, and n_stages cycle modules.
    """
    w = width
    conv = lambda cin, cout, ksq: cout * cin * ksq + cout
    up_path = conv(1, w, 9) + conv(w, w, 9) * 5
    refine = lambda cin: (4 * conv(cin, w, 9) + conv(4 * w, w, 1)
                          + 8 * conv(w, w, 9) + conv(w, k, 9) + conv(k, 1, 1))
    cycle = conv(2, w, 9) + 13 * conv(w, w, 9) + conv(w, k, 9) + conv(k, 1, 1)
    return n_stages * (up_path + refine(w + 2) + cycle) + refine(3)
