"""Evaluation metrics: MSE, rMSE, MAE, ARE, PSNR, and median error.

Evaluation is restricted to the ground truth's valid mask intersected
with gt > 0 (ARE needs positive denominators). PSNR uses the per-image
peak valid ground-truth depth; a perfect prediction reports +inf.
Dataset-level numbers are macro averages (mean of per-image metrics).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DepthMap, DimensionError


class EmptyEvalMaskError(ValueError):
    """No pixel is jointly valid in prediction target and ground truth."""


@dataclass
class MetricReport:
    mse: float
    rmse: float
    mae: float
    are: float
    psnr: float
    median_err: float
    n_valid: int
    peak_used: float

    FIELDS = ("mse", "rmse", "mae", "are", "psnr", "median_err")

    def as_dict(self) -> dict:
        return {
            "mse": self.mse, "rmse": self.rmse, "mae": self.mae, "are": self.are,
            "psnr": self.psnr, "median_err": self.median_err,
            "n_valid": self.n_valid, "peak_used": self.peak_used,
        }

    def row(self, label: str) -> str:
        cells = [f"{getattr(self, f):10.4f}" for f in self.FIELDS]
        return f"{label:<16s} " + " ".join(cells)


def table_header() -> str:
    names = ["MSE", "rMSE", "MAE", "ARE", "PSNR", "MedianErr"]
    return f"{'method':<16s} " + " ".join(f"{n:>10s}" for n in names)


def evaluate(pred: DepthMap, gt: DepthMap) -> MetricReport:
    """Masked metric battery of a prediction against ground truth."""
    if pred.values.shape != gt.values.shape:
        raise DimensionError(
            f"prediction {pred.values.shape} and ground truth {gt.values.shape} differ"
        )
    mask = gt.valid & (gt.values > 0)
    n = int(mask.sum())
    if n == 0:
        raise EmptyEvalMaskError("ground truth has no valid positive pixels")
    e = pred.values[mask] - gt.values[mask]
    g = gt.values[mask]
    mse = float(np.mean(e * e))
    peak = float(g.max())
    psnr = math.inf if mse == 0.0 else 10.0 * math.log10(peak * peak / mse)
    return MetricReport(
        mse=mse,
        rmse=math.sqrt(mse),
        mae=float(np.mean(np.abs(e))),
        are=float(np.mean(np.abs(e) / g)),
        psnr=psnr,
        median_err=float(np.median(np.abs(e))),
        n_valid=n,
        peak_used=peak,
    )


def aggregate(reports: list[MetricReport]) -> MetricReport:
    """Macro average: unweighted mean of per-image metrics, pixel counts summed."""
    if not reports:
        raise ValueError("cannot aggregate an empty report list")
    mean = lambda f: float(np.mean([getattr(r, f) for r in reports]))
    return MetricReport(
        mse=mean("mse"), rmse=mean("rmse"), mae=mean("mae"), are=mean("are"),
        psnr=mean("psnr"), median_err=mean("median_err"),
        n_valid=int(sum(r.n_valid for r in reports)),
        peak_used=mean("peak_used"),
    )
