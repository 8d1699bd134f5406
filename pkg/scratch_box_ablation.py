import time

import numpy as np
from scipy.ndimage import binary_dilation

from depthsr.synthbench import SceneSpec, ablation_suite, box_boundary_mask, make_benchmark_case
from depthsr.trainer import TrainConfig, ablation_study, zero_shot_refine
from depthsr.metrics import evaluate
from depthsr.core import upsample_bilinear
from depthsr.edges import sobel_magnitude

t0 = time.time()
# Acceptance criterion 3(c) box scene, exact shape.
bspec = SceneSpec(kind="box_on_plane", height=256, width=256, slope=0.0, z0=2.0,
                  boxes=[(96, 96, 64, 64, -0.3)])
bcase = make_benchmark_case(bspec, step=0.1, factor=8)
config = TrainConfig()
brefined, _ = zero_shot_refine(bcase.image, bcase.depth_lr, config)
band = box_boundary_mask(bspec)


def recall_of(d, tol=4, thr=0.15):
    det = sobel_magnitude(d.values) > thr
    return float((band & binary_dilation(det, iterations=tol)).sum() / band.sum())


bup = upsample_bilinear(bcase.depth_lr, 8)
print("box recall refined", recall_of(brefined), "baseline", recall_of(bup), flush=True)
print("box MAE refined", evaluate(brefined, bcase.true_depth).mae,
      "baseline", evaluate(bup, bcase.true_depth).mae, flush=True)
print("box minutes", (time.time() - t0) / 60, flush=True)

# Criterion 5 probe: sparse ablation suite, 200 iterations.
t1 = time.time()
cases = ablation_suite(size=96)
cfg = TrainConfig(zero_shot_iters=200)
results = ablation_study(cfg, cases)
full = results["full"].rmse
for name, rep in results.items():
    print(f"{name:12s} rmse {rep.rmse:.4f}  mae {rep.mae:.4f}  factor {rep.rmse/full:.2f}",
          flush=True)
print("ablation minutes", (time.time() - t1) / 60, flush=True)
