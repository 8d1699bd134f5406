import numpy as np
import pytest
import torch

from depthsr.core import DepthMap, GuidanceImage


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_depth(rng):
    return DepthMap(rng.uniform(0.5, 5.0, size=(16, 16)))


@pytest.fixture
def random_gray(rng):
    return GuidanceImage(rng.uniform(0.0, 1.0, size=(16, 16, 1)))


@pytest.fixture
def random_rgb(rng):
    return GuidanceImage(rng.uniform(0.0, 1.0, size=(16, 16, 3)))


def to_t(a: np.ndarray, dtype=torch.float64) -> torch.Tensor:
    """(H, W) array -> (1, 1, H, W) tensor."""
    a = np.asarray(a, dtype=np.float64)
    return torch.as_tensor(a, dtype=dtype).view(1, 1, *a.shape)


def central_diff(f, x: torch.Tensor, coords, h: float = 1e-6) -> list:
    """Central finite differences of a scalar-valued f at selected flat
    coordinates of x, everything in float64."""
    out = []
    flat = x.detach().clone().view(-1)
    for c in coords:
        orig = flat[c].item()
        flat[c] = orig + h
        fp = float(f(flat.view(x.shape)))
        flat[c] = orig - h
        fm = float(f(flat.view(x.shape)))
        flat[c] = orig
        out.append((fp - fm) / (2.0 * h))
    return out


def relative_errors(analytic, numeric, atol: float = 1e-9) -> list:
    """Per-coordinate relative error with an absolute floor.

    Central differences carry cancellation noise of roughly
    eps * |f| / h ~ 1e-11, so coordinates whose true derivative sits
    below that floor cannot be compared relatively; ``atol`` absorbs
    them. Any genuine gradient defect shows up orders of magnitude
    above it.
    """
    errs = []
    for a, n in zip(analytic, numeric):
        if abs(a - n) <= atol:
            errs.append(0.0)
            continue
        scale = max(abs(a), abs(n))
        errs.append(0.0 if scale < 1e-12 else abs(a - n) / scale)
    return errs
