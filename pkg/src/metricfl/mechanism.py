"""Additive Laplace noise under the Euclidean metric in R^n.

The mechanism draws a perturbation whose density at distance r from the
center is proportional to exp(-epsilon * r).  Writing K for the normalization
constant, the density of a released point x around center x0 is

    K * exp(-epsilon * ||x - x0||_2),
    K = epsilon^n * Gamma(n/2) / (2 * pi^(n/2) * Gamma(n)).

Sampling exploits radial symmetry: the norm of the noise follows a gamma law
with shape n and scale 1/epsilon, and the direction is uniform on the unit
sphere.  All densities are computed in log space; epsilon^n and Gamma(n)
overflow already at modest n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NoiseScale",
    "NoiseVector",
    "log_normalization_constant",
    "normalization_constant",
    "log_density",
    "density",
    "sample_radius",
    "sample_direction",
    "sample_noise",
    "sample_noise_batch",
    "sanitize",
    "moment_report",
]

# Squared norms below this trigger a direction resample (measure-zero event).
_MIN_DIRECTION_NORM = 1e-300


@dataclass(frozen=True)
class NoiseScale:
    """Privacy parameter epsilon and ambient dimension n of the mechanism.

    Degenerate values are rejected here, at construction, rather than at
    sampling time.
    """

    epsilon: float
    dimension: int

    def __post_init__(self) -> None:
        if not isinstance(self.dimension, (int, np.integer)) or self.dimension < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.dimension!r}")
        if not math.isfinite(self.epsilon) or self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive and finite, got {self.epsilon!r}")


@dataclass(frozen=True)
class NoiseVector:
    """A drawn perturbation together with its Euclidean norm."""

    components: np.ndarray
    radius: float


def log_normalization_constant(scale: NoiseScale) -> float:
    """log K for the density K * exp(-epsilon * r) to integrate to one."""
    n = scale.dimension
    eps = scale.epsilon
    return (
        n * math.log(eps)
        + math.lgamma(n / 2.0)
        - math.log(2.0)
        - (n / 2.0) * math.log(math.pi)
        - math.lgamma(n)
    )


def normalization_constant(scale: NoiseScale) -> float:
    """K in linear space; underflows to 0.0 for very large n (use the log form)."""
    return math.exp(log_normalization_constant(scale))


def _check_dimension(arr: np.ndarray, scale: NoiseScale, name: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if arr.shape[-1] != scale.dimension:
        raise ValueError(
            f"{name} has dimension {arr.shape[-1]}, mechanism expects {scale.dimension}"
        )
    return arr


def log_density(point: np.ndarray, center: np.ndarray, scale: NoiseScale) -> np.ndarray | float:
    """log density of releasing ``point`` when the true value is ``center``.

    Accepts stacked inputs: leading axes broadcast, the last axis must match
    the mechanism dimension.
    """
    point = _check_dimension(point, scale, "point")
    center = _check_dimension(center, scale, "center")
    dist = np.linalg.norm(point - center, axis=-1)
    out = log_normalization_constant(scale) - scale.epsilon * dist
    return float(out) if np.ndim(out) == 0 else out


def density(point: np.ndarray, center: np.ndarray, scale: NoiseScale) -> np.ndarray | float:
    return np.exp(log_density(point, center, scale))


def sample_radius(
    scale: NoiseScale, rng: np.random.Generator, size: int | None = None
) -> float | np.ndarray:
    """Draw the noise norm: gamma with shape n and scale 1/epsilon.

    The dimension is always an integer here, so the draw is the sum of n
    independent exponentials — exact and identical across platforms.
    """
    n = scale.dimension
    if size is None:
        return float(rng.standard_exponential(n).sum() / scale.epsilon)
    return rng.standard_exponential((size, n)).sum(axis=1) / scale.epsilon


def sample_direction(
    dimension: int, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Uniform unit vector(s) on the sphere in R^n: normalized standard normals."""
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    if size is None:
        return sample_direction(dimension, rng, size=1)[0]
    v = rng.standard_normal((size, dimension))
    norms = np.linalg.norm(v, axis=1)
    while np.any(norms < _MIN_DIRECTION_NORM):
        bad = norms < _MIN_DIRECTION_NORM
        v[bad] = rng.standard_normal((int(bad.sum()), dimension))
        norms = np.linalg.norm(v, axis=1)
    return v / norms[:, None]


def sample_noise(scale: NoiseScale, rng: np.random.Generator) -> NoiseVector:
    """One perturbation: radius first, then direction, from the same stream."""
    radius = sample_radius(scale, rng)
    direction = sample_direction(scale.dimension, rng)
    return NoiseVector(components=radius * direction, radius=radius)


def sample_noise_batch(scale: NoiseScale, rng: np.random.Generator, size: int) -> np.ndarray:
    """(size, n) array of independent perturbations; used by diagnostics."""
    radii = sample_radius(scale, rng, size=size)
    directions = sample_direction(scale.dimension, rng, size=size)
    return radii[:, None] * directions


def sanitize(vector: np.ndarray, scale: NoiseScale, rng: np.random.Generator) -> np.ndarray:
    """Return ``vector`` plus one noise draw."""
    vector = _check_dimension(vector, scale, "vector")
    if vector.ndim != 1:
        raise ValueError("sanitize expects a single flat vector")
    return vector + sample_noise(scale, rng).components


def moment_report(
    scale: NoiseScale, samples: int, rng: np.random.Generator
) -> list[tuple[str, float, float]]:
    """Empirical vs. theoretical moments as (statistic, empirical, theoretical).

    Statistics: mean noise norm (n/eps), variance of the norm (n/eps^2) and
    per-component variance ((n+1)/eps^2, averaged over components).
    """
    n, eps = scale.dimension, scale.epsilon
    noise = sample_noise_batch(scale, rng, samples)
    radii = np.linalg.norm(noise, axis=1)
    component_var = float(np.mean(np.var(noise, axis=0, ddof=1)))
    return [
        ("mean_radius", float(radii.mean()), n / eps),
        ("radius_variance", float(radii.var(ddof=1)), n / eps**2),
        ("component_variance", component_var, (n + 1) / eps**2),
    ]
