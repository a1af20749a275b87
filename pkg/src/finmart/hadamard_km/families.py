"""Finite families of nonexpansive maps with known weights."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .._exact import as_fraction
from .spaces import SpaceInstance, euclidean_ball_space, star_tree_space


@dataclass(frozen=True, eq=False)
class NonexpansiveFamily:
    """Maps T_v indexed by v in {0, ..., size-1} drawn with the given weights.

    ``apply(v, x)`` is vectorised: v has shape (P,), x has shape (P, *point).
    ``mean_sq_displacement`` returns the exact E[d^2(T_v z, z)] for one point.
    """

    name: str
    space: SpaceInstance
    weights: tuple[Fraction, ...]
    apply: Callable[[np.ndarray, np.ndarray], np.ndarray]
    mean_sq_displacement: Callable[[Sequence], Fraction] | None = None

    def __post_init__(self) -> None:
        weights = tuple(as_fraction(w) for w in self.weights)
        if not weights or any(w < 0 for w in weights) or sum(weights) != 1:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return len(self.weights)

    def apply_all(self, x: np.ndarray) -> np.ndarray:
        """T_v x for every v: shape (size, P, *point)."""
        x = np.asarray(x, dtype=float)
        return np.stack([self.apply(np.full(x.shape[0], v), x) for v in range(self.size)])

    def draw(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms in [0, 1) to indices by inverse CDF."""
        cumulative = np.cumsum([float(w) for w in self.weights])
        return np.minimum(np.searchsorted(cumulative, u, side="right"), self.size - 1)

    def mean_sq_displacement_float(self, x: np.ndarray) -> np.ndarray:
        """Vectorised E_v[d^2(T_v x, x)] for points x of shape (P, *point)."""
        x = np.asarray(x, dtype=float)
        images = self.apply_all(x)
        d2 = self.space.distance(images, x[None]) ** 2
        return np.tensordot(np.array([float(w) for w in self.weights]), d2, axes=1)


def projection_family(dim: int, radius=1) -> NonexpansiveFamily:
    """T_i keeps coordinate i and zeroes the rest; uniform weights; common fixed point 0."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    space = euclidean_ball_space(dim, radius)

    def apply(v, x):
        out = np.zeros_like(x)
        rows = np.arange(x.shape[0])
        out[rows, v] = x[rows, v]
        return out

    def exact(z):
        z = [as_fraction(c) for c in z]
        if len(z) != dim:
            raise ValueError("point has the wrong dimension")
        norm2 = sum(c * c for c in z)
        return sum(norm2 - c * c for c in z) / dim

    return NonexpansiveFamily(f"projections(dim={dim})", space, (Fraction(1, dim),) * dim,
                              apply, exact)


def branch_projection_family(branch_count: int) -> NonexpansiveFamily:
    """Metric projections of a star tree onto its branches; common fixed point the center."""
    space = star_tree_space(branch_count)

    def apply(v, x):
        out = x.copy()
        off = x[:, 0] != v
        out[off, 1] = 0.0
        out[:, 0] = np.where(off, v, x[:, 0])
        return out

    def exact(z):
        branch, r = z
        r = as_fraction(r)
        if r == 0:
            return Fraction(0)
        return Fraction(branch_count - 1, branch_count) * r * r

    return NonexpansiveFamily(f"branch_projections({branch_count})", space,
                              (Fraction(1, branch_count),) * branch_count, apply, exact)


def nonexpansive_check(family: NonexpansiveFamily, trials: int = 10_000, seed: int = 0) -> float:
    """Largest d(T_v x, T_v y) - d(x, y) over random pairs and indices."""
    rng = np.random.default_rng(seed)
    x = family.space.sample(rng, trials)
    y = family.space.sample(rng, trials)
    v = rng.integers(0, family.size, trials)
    d = family.space.distance
    return float((d(family.apply(v, x), family.apply(v, y)) - d(x, y)).max())
