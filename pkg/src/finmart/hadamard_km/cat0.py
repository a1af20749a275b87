"""Pointwise CAT(0) inequality residuals.

Inequality residuals are right side minus left side, so a valid instance
gives residual >= 0 up to rounding. Identity residuals should vanish.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spaces import SpaceInstance


def quasi_inner(space: SpaceInstance, x, y, u, v) -> np.ndarray:
    """<xy, uv> = (d^2(x,v) + d^2(y,u) - d^2(x,u) - d^2(y,v)) / 2."""
    d = space.distance
    return 0.5 * (d(x, v) ** 2 + d(y, u) ** 2 - d(x, u) ** 2 - d(y, v) ** 2)


def check_cn(space: SpaceInstance, x, y, z, t) -> np.ndarray:
    d = space.distance
    t = np.asarray(t, dtype=float)
    m = space.geodesic(x, y, t)
    rhs = (1 - t) * d(x, z) ** 2 + t * d(y, z) ** 2 - t * (1 - t) * d(x, y) ** 2
    return rhs - d(m, z) ** 2


def check_cs(space: SpaceInstance, x, y, u, v) -> np.ndarray:
    return space.distance(x, y) * space.distance(u, v) - quasi_inner(space, x, y, u, v)


def check_quadratic_identity(space: SpaceInstance, x, y, z) -> np.ndarray:
    d = space.distance
    return d(x, z) ** 2 - d(x, y) ** 2 - d(y, z) ** 2 - 2 * quasi_inner(space, x, y, y, z)


def check_convexity(space: SpaceInstance, x, y, z, t) -> np.ndarray:
    d = space.distance
    t = np.asarray(t, dtype=float)
    return (1 - t) * d(x, z) + t * d(y, z) - d(space.geodesic(x, y, t), z)


@dataclass(frozen=True)
class CertificationResult:
    space: str
    trials: int
    worst: dict
    passed: bool

    def to_dict(self) -> dict:
        return {"space": self.space, "trials": self.trials, "worst": self.worst, "pass": self.passed}


def certify(space: SpaceInstance, trials: int = 10_000, seed: int = 0,
            tolerance: float = 1e-9) -> CertificationResult:
    """Random (CN), (CS), quadratic-identity and convexity checks, plus geodesic sanity."""
    rng = np.random.default_rng(seed)
    x, y, u, v = (space.sample(rng, trials) for _ in range(4))
    t = rng.random(trials)
    d = space.distance
    geo = space.geodesic(x, y, t)
    worst = {
        "cn": float(check_cn(space, x, y, u, t).min()),
        "cs": float(check_cs(space, x, y, u, v).min()),
        "quadratic_identity": float(np.abs(check_quadratic_identity(space, x, y, u)).max()),
        "convexity": float(check_convexity(space, x, y, u, t).min()),
        "geodesic": float(np.max(np.abs(d(x, geo) - t * d(x, y))
                                 + np.abs(d(y, geo) - (1 - t) * d(x, y)))),
        "triangle": float((d(x, u) + d(u, y) - d(x, y)).min()),
    }
    passed = (worst["cn"] >= -tolerance and worst["cs"] >= -tolerance
              and worst["convexity"] >= -tolerance and worst["triangle"] >= -tolerance
              and worst["quadratic_identity"] <= tolerance and worst["geodesic"] <= tolerance)
    return CertificationResult(space.name, trials, worst, bool(passed))
