"""Concrete Hadamard spaces: Euclidean balls and finite star trees.

Points are numpy arrays with a fixed trailing shape; every operation is
vectorised over leading axes.  Star-tree points are (branch, r) pairs, with
r = 0 the center regardless of the branch label.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .._exact import RationalLike, as_fraction


@dataclass(frozen=True, eq=False)
class SpaceInstance:
    name: str
    point_shape: tuple[int, ...]
    base: np.ndarray
    d_bound: Fraction
    _distance: Callable[[np.ndarray, np.ndarray], np.ndarray]
    _geodesic: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    _sample: Callable[[np.random.Generator, int], np.ndarray]

    def distance(self, x, y) -> np.ndarray:
        return self._distance(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    def geodesic(self, x, y, t) -> np.ndarray:
        """The point (1 - t) x + t y on the geodesic from x to y."""
        t = np.asarray(t, dtype=float)
        if np.any((t < 0) | (t > 1)):
            raise ValueError("geodesic parameter must lie in [0, 1]")
        return self._geodesic(np.asarray(x, dtype=float), np.asarray(y, dtype=float), t)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self._sample(rng, count)

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[x.ndim - len(self.point_shape):] != self.point_shape:
            raise ValueError(f"point shape {x.shape} does not belong to {self.name}")
        return x

    def __repr__(self) -> str:
        return f"SpaceInstance({self.name})"


def euclidean_ball_space(dim: int, radius: RationalLike = 1, center=None) -> SpaceInstance:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    radius = as_fraction(radius)
    if radius <= 0:
        raise ValueError("radius must be positive")
    centre = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    r = float(radius)

    def distance(x, y):
        return np.linalg.norm(x - y, axis=-1)

    def geodesic(x, y, t):
        t = t[..., None] if t.ndim else t
        return (1 - t) * x + t * y

    def sample(rng, count):
        direction = rng.standard_normal((count, dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        scale = r * rng.random(count) ** (1 / dim)
        return centre + direction * scale[:, None]

    return SpaceInstance(f"euclidean(dim={dim}, radius={radius})", (dim,), centre, radius,
                         distance, geodesic, sample)


def star_tree_space(branch_count: int, branch_lengths=None) -> SpaceInstance:
    """Star tree of ``branch_count`` segments glued at a common center."""
    if branch_count < 1:
        raise ValueError("need at least one branch")
    lengths = [as_fraction(x) for x in (branch_lengths or [1] * branch_count)]
    if len(lengths) != branch_count or any(x <= 0 for x in lengths):
        raise ValueError("one positive length per branch required")
    length_arr = np.array([float(x) for x in lengths])

    def distance(x, y):
        same = x[..., 0] == y[..., 0]
        return np.where(same, np.abs(x[..., 1] - y[..., 1]), x[..., 1] + y[..., 1])

    def geodesic(x, y, t):
        x, y = np.broadcast_arrays(x, y)
        t = np.broadcast_to(t, x.shape[:-1])
        same = x[..., 0] == y[..., 0]
        travelled = t * distance(x, y)
        out = np.empty(np.broadcast_shapes(x.shape, y.shape))
        on_first = travelled <= x[..., 1]
        out[..., 0] = np.where(same | on_first, x[..., 0], y[..., 0])
        out[..., 1] = np.where(same, (1 - t) * x[..., 1] + t * y[..., 1],
                               np.where(on_first, x[..., 1] - travelled, travelled - x[..., 1]))
        return out

    def sample(rng, count):
        branch = rng.integers(0, branch_count, count)
        return np.stack([branch.astype(float), rng.random(count) * length_arr[branch]], axis=-1)

    return SpaceInstance(f"star_tree({branch_count})", (2,), np.zeros(2), max(lengths),
                         distance, geodesic, sample)
