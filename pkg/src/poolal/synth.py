"""Deterministic synthetic datasets at desk scale.

Three shapes:

- ``two-moons``: two interleaved half-circles with Gaussian noise, mapped
  through a smooth random cosine feature map z = cos(Omega u + beta) with
  Omega ~ N(0, 1/bandwidth^2). Under this map the cosine similarity of two
  feature vectors approximates a radial kernel exp(-|u-v|^2 / (2 bandwidth^2))
  in moon space, so direction-based graph affinities see the moon geometry
  rather than the angle from the origin. The map is drawn from a fixed
  internal stream, not from ``seed``, so every generated two-moons dataset
  lives in the same feature space and train/test pairs are compatible;
  ``seed`` controls only the point and noise draws. ``feature_dim=0`` skips
  the map and returns the raw centered planar coordinates.

- ``blobs``: c isotropic Gaussians around unit-norm random centers (centers
  come from the same kind of fixed stream, noise from ``seed``).

- ``chain``: a pinned 3-point fixture whose reciprocal-2NN graph is the path
  0-1-2 with equal edge weights and one dropped zero-similarity edge; its
  normalized operator equals that of the unit-weight path exactly.
"""

from __future__ import annotations

import math

import numpy as np

from .dataset import Dataset
from .errors import EngineError

# Fixed-geometry streams: shared across data seeds so independently generated
# datasets of one shape are mutually compatible.
_MOONS_MAP_STREAM = 705226770
_BLOBS_CENTER_STREAM = 705226771

MOONS_DEFAULT_FEATURE_DIM = 32
MOONS_DEFAULT_BANDWIDTH = 0.4
MOONS_ARC = math.pi
MOONS_OFFSET = (1.0, 0.35)
BLOBS_DEFAULT_DIM = 8
BLOBS_DEFAULT_NOISE = 0.45

CHAIN_FEATURES = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
CHAIN_LABELS = np.array([0, 1, 1])


def moons_feature_map(feature_dim: int, bandwidth: float) -> tuple[np.ndarray, np.ndarray]:
    """The fixed random cosine feature map (frequencies, phases) for two-moons."""
    rng = np.random.default_rng(_MOONS_MAP_STREAM)
    omega = rng.normal(0.0, 1.0 / bandwidth, (feature_dim, 2))
    beta = rng.uniform(0.0, 2.0 * math.pi, feature_dim)
    return omega, beta


def make_two_moons(n: int, noise: float, seed, feature_dim: int = MOONS_DEFAULT_FEATURE_DIM,
                   bandwidth: float = MOONS_DEFAULT_BANDWIDTH) -> Dataset:
    """Two interleaved half-circles; first ceil half is class 0."""
    if n < 4:
        raise EngineError("two-moons needs n >= 4")
    if noise < 0:
        raise EngineError("noise must be nonnegative")
    rng = np.random.default_rng(seed)
    n1 = n // 2
    n2 = n - n1
    t1 = rng.uniform(0.0, MOONS_ARC, n1)
    t2 = rng.uniform(0.0, MOONS_ARC, n2)
    upper = np.stack([np.cos(t1), np.sin(t1)], axis=1)
    lower = np.stack([MOONS_OFFSET[0] - np.cos(t2), MOONS_OFFSET[1] - np.sin(t2)], axis=1)
    planar = np.concatenate([upper, lower], axis=0)
    planar += rng.normal(0.0, noise, planar.shape)
    planar -= planar.mean(axis=0)
    labels = np.concatenate([np.zeros(n1, dtype=np.int64), np.ones(n2, dtype=np.int64)])
    if feature_dim == 0:
        return Dataset(planar, 2, labels)
    if feature_dim < 0:
        raise EngineError("feature_dim must be nonnegative")
    omega, beta = moons_feature_map(feature_dim, bandwidth)
    features = np.cos(planar @ omega.T + beta)
    return Dataset(features, 2, labels)


def make_blobs(n: int, c: int, seed, dim: int = BLOBS_DEFAULT_DIM,
               noise: float = BLOBS_DEFAULT_NOISE) -> Dataset:
    """c isotropic Gaussians; class sizes differ by at most one, grouped
    in ascending class order. Centers are unit vectors from a fixed stream."""
    if c < 2:
        raise EngineError("blobs need at least 2 classes")
    if n < 2 * c:
        raise EngineError("blobs need n >= 2c")
    center_rng = np.random.default_rng(_BLOBS_CENTER_STREAM)
    centers = center_rng.normal(0.0, 1.0, (c, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    base, extra = divmod(n, c)
    counts = [base + (1 if k < extra else 0) for k in range(c)]
    labels = np.repeat(np.arange(c, dtype=np.int64), counts)
    rng = np.random.default_rng(seed)
    features = centers[labels] + rng.normal(0.0, noise, (n, dim))
    return Dataset(features, c, labels)


def make_chain() -> Dataset:
    """The pinned 3-node propagation fixture (see module docstring)."""
    return Dataset(CHAIN_FEATURES.copy(), 2, CHAIN_LABELS.copy())


def gen_synthetic(shape: str, n: int = 500, noise: float | None = None,
                  c: int = 10, seed=0, feature_dim: int | None = None,
                  bandwidth: float | None = None, dim: int | None = None) -> Dataset:
    """Dispatch over the three shapes with per-shape defaults."""
    if shape == "two-moons":
        return make_two_moons(
            n,
            noise if noise is not None else 0.1,
            seed,
            feature_dim if feature_dim is not None else MOONS_DEFAULT_FEATURE_DIM,
            bandwidth if bandwidth is not None else MOONS_DEFAULT_BANDWIDTH,
        )
    if shape == "blobs":
        return make_blobs(
            n, c, seed,
            dim if dim is not None else BLOBS_DEFAULT_DIM,
            noise if noise is not None else BLOBS_DEFAULT_NOISE,
        )
    if shape == "chain":
        return make_chain()
    raise EngineError(f"unknown shape {shape!r}; expected two-moons, blobs, or chain")
