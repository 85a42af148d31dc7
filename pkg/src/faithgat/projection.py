"""Euclidean projection onto the L1 ball, plus exact uniform sampling in it."""

import numpy as np

from .errors import StructuralError


def project_l1_ball(v, radius: float):
    """Euclidean projection of v onto {x : ||x||_1 <= radius}.

    Sort-and-threshold soft-thresholding; interior points are returned
    unchanged (same object), so the projection is exactly idempotent.
    """
    if radius <= 0:
        raise StructuralError("radius must be positive")
    v = np.asarray(v, dtype=np.float64)
    mag = np.abs(v)
    if mag.sum() <= radius:
        return v
    flat = mag.ravel()
    u = np.sort(flat)[::-1]
    cssv = np.cumsum(u) - radius
    ranks = np.arange(1, flat.shape[0] + 1)
    rho = np.nonzero(u > cssv / ranks)[0][-1]
    theta = cssv[rho] / (rho + 1.0)
    return np.sign(v) * np.maximum(mag - theta, 0.0)


def sample_l1_ball(rng: np.random.Generator, size: int, radius: float) -> np.ndarray:
    """Uniform draw from the L1 ball of the given radius.

    Signed exponential spacings give a uniform point on the L1 sphere; scaling
    by U^(1/d) makes the radius distribution uniform over the ball's volume.
    """
    if radius <= 0:
        raise StructuralError("radius must be positive")
    g = rng.standard_exponential(size)
    signs = rng.integers(0, 2, size=size) * 2 - 1
    direction = signs * g / g.sum()
    scale = rng.random() ** (1.0 / size)
    return radius * scale * direction
