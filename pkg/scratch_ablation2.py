import time

import numpy as np

from depthsr.synthbench import ablation_suite
from depthsr.trainer import TrainConfig, ablation_study
from depthsr.metrics import evaluate, aggregate
from depthsr.core import upsample_bilinear, fill_invalid_nearest

t0 = time.time()
cases = ablation_suite(size=96)
base_reports = []
for c in cases:
    up = upsample_bilinear(fill_invalid_nearest(c.depth_lr), c.factor)
    base_reports.append(evaluate(up, c.true_depth))
base = aggregate(base_reports)
print(f"baseline     rmse {base.rmse:.4f}  mae {base.mae:.4f}", flush=True)

cfg = TrainConfig(zero_shot_iters=200)
results = ablation_study(cfg, cases)
full = results["full"].rmse
for name, rep in results.items():
    print(f"{name:12s} rmse {rep.rmse:.4f}  mae {rep.mae:.4f}  factor {rep.rmse/full:.2f}",
          flush=True)
print("minutes", (time.time() - t0) / 60, flush=True)
