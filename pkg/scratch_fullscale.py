import json
import time

import numpy as np
import torch

from depthsr import synthbench as sb
from depthsr.trainer import TrainConfig, zero_shot_refine
from depthsr.metrics import evaluate
from depthsr.core import upsample_bilinear
from depthsr.losses import false_edge_loss
from depthsr.edges import binary_edges, sobel_magnitude

t0 = time.time()
spec = sb.SceneSpec(kind="ramp", height=512, width=512, slope=0.0025, z0=2.0)
case = sb.make_benchmark_case(spec, 0.1, 8)
up = upsample_bilinear(case.depth_lr, 8)
gray = case.image.plane(0)

def fe_of(d):
    t = torch.as_tensor(d.values, dtype=torch.float64).view(1, 1, *d.values.shape)
    return float(false_edge_loss(t, gray, 50.0))

base_mae = evaluate(up, case.true_depth).mae
base_fe = fe_of(up)
true_fe = fe_of(case.true_depth)
print("baseline MAE", base_mae, "baseline FE", base_fe, "true FE", true_fe, flush=True)

cfg = TrainConfig(zero_shot_iters=500, n_stages=3)
refined, log = zero_shot_refine(case.image, case.depth_lr, cfg)
rep = evaluate(refined, case.true_depth)
ref_fe = fe_of(refined)
print("refined MAE", rep.mae, "rmse", rep.rmse, "FE", ref_fe, flush=True)
print("MAE ratio", rep.mae / base_mae, "FE ratio", ref_fe / base_fe, flush=True)
print("minutes", (time.time() - t0) / 60, flush=True)

# box scene: rim preservation
bspec = sb.SceneSpec(kind="box_on_plane", height=512, width=512, slope=0.0, z0=2.0,
                     boxes=[(170, 170, 170, 170, -0.3)])
bcase = sb.make_benchmark_case(bspec, 0.1, 8)
brefined, _ = zero_shot_refine(bcase.image, bcase.depth_lr, cfg)
bup = upsample_bilinear(bcase.depth_lr, 8)
band = sb.box_boundary_mask(bspec)
hbox = 0.3

def rim_recall(d, tol=4):
    mag = sobel_magnitude(d.values)
    det = mag > 0.5 * hbox
    from scipy.ndimage import binary_dilation
    det_d = binary_dilation(det, iterations=tol)
    return float((band & det_d).sum() / band.sum())

print("box: recall(refined)", rim_recall(brefined), "recall(bilinear)", rim_recall(bup), flush=True)
print("box MAE refined", evaluate(brefined, bcase.true_depth).mae,
      "baseline", evaluate(bup, bcase.true_depth).mae, flush=True)
print("total minutes", (time.time() - t0) / 60, flush=True)
