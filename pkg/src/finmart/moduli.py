"""Quantitative witnesses for the metastability analysis.

Total boundedness moduli, divergence rates for step schedules, continuity
packs for the Fejer function G, liminf moduli and their strengthening, and
the boundedness, Fejer and closedness moduli.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable

import numpy as np

from ._exact import RationalLike, as_fraction, ceil_fraction, ceil_sqrt


@dataclass(frozen=True)
class TotalBoundednessModulus:
    gamma: Callable[[int], int]
    name: str

    def __call__(self, k: int) -> int:
        if k < 0:
            raise ValueError("k must be a natural number")
        value = int(self.gamma(k))
        if value < 1:
            raise ValueError("a total boundedness modulus is always >= 1")
        return value


def gamma_euclidean_ball(dim: int, radius: RationalLike) -> TotalBoundednessModulus:
    """gamma(k) = ceil(2 (k+1) sqrt(dim) b)^dim, with the ceiling computed exactly.

    ceil(sqrt(q)) for the rational q = 4 (k+1)^2 b^2 dim is the least integer s
    with s^2 >= q, i.e. the integer ceil-sqrt of ceil(q).
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    b = as_fraction(radius)
    if b <= 0:
        raise ValueError("radius must be positive")

    def gamma(k: int) -> int:
        q = 4 * (k + 1) ** 2 * b * b * dim
        return ceil_sqrt(ceil_fraction(q)) ** dim

    return TotalBoundednessModulus(gamma, f"euclidean_ball(dim={dim}, b={b})")


def gamma_finite(m: int) -> TotalBoundednessModulus:
    if m < 1:
        raise ValueError("set size must be >= 1")
    return TotalBoundednessModulus(lambda k: m, f"finite({m})")


@dataclass(frozen=True)
class DivergenceRate:
    """theta(N, b): an index with sum_{n=N}^{theta} lambda_n (1 - lambda_n) >= b."""

    theta: Callable[[int, Fraction], int]
    name: str

    def __call__(self, N: int, b: RationalLike) -> int:
        b = as_fraction(b)
        if b <= 0:
            raise ValueError("b must be positive")
        value = int(self.theta(int(N), b))
        if value < N:
            raise ValueError("divergence rate must satisfy theta(N, b) >= N")
        return value


def theta_constant(step: RationalLike) -> DivergenceRate:
    """Constant steps lambda_n = step: theta(N, b) = N + ceil(b / (step (1 - step))) - 1."""
    step = as_fraction(step)
    if not 0 < step < 1:
        raise ValueError("constant step must lie in (0, 1)")
    weight = step * (1 - step)
    return DivergenceRate(lambda N, b: N + ceil_fraction(b / weight) - 1, f"constant({step})")


@dataclass(frozen=True)
class GPack:
    """G with moduli: iota_b witnesses uniform continuity on [0, b], nu inverse continuity at 0."""

    G: Callable[[Any], Any]
    iota: Callable[[Fraction, int], int]
    nu: Callable[[int], int]
    name: str


def _square(a):
    return a * a


def gpack_identity() -> GPack:
    return GPack(lambda a: a, lambda b, k: int(k), lambda k: int(k), "identity")


def gpack_square() -> GPack:
    """G(a) = a^2 with iota_b(k) = ceil(2b(k+1)) and nu(k) = (k+1)^2."""
    return GPack(_square, lambda b, k: ceil_fraction(2 * as_fraction(b) * (k + 1)),
                 lambda k: (k + 1) ** 2, "square")


class LiminfModulus:
    """phi(lambda, k, N) >= N.

    ``shift`` marks the lambda-independent form phi = N + shift(k).
    ``monotone`` marks phi nondecreasing in N and nonincreasing in lambda.
    """

    def __init__(self, phi: Callable[[Fraction, int, int], int], name: str, *,
                 monotone: bool = False, shift: Callable[[int], int] | None = None):
        self._phi = phi
        self.name = name
        self.monotone = monotone or shift is not None
        self.shift = shift

    @classmethod
    def shifted(cls, shift: Callable[[int], int], name: str = "shift") -> LiminfModulus:
        return cls(lambda lam, k, N: N + int(shift(k)), name, shift=shift)

    def __call__(self, lam: RationalLike, k: int, N: int) -> int:
        if self.shift is not None:
            return int(N) + int(self.shift(k))
        lam = as_fraction(lam)
        if lam <= 0:
            raise ValueError("lambda must be positive")
        value = int(self._phi(lam, int(k), int(N)))
        if value < N:
            raise ValueError("liminf modulus must satisfy phi(lambda, k, N) >= N")
        return value

    def __repr__(self) -> str:
        return f"LiminfModulus({self.name})"


def strengthen_liminf(phi: LiminfModulus) -> LiminfModulus:
    """Psi(lambda, k, N) = phi(lambda 2^-(k+N+2), k, N)."""
    if phi.shift is not None:
        return LiminfModulus.shifted(phi.shift, f"strong({phi.name})")
    return LiminfModulus(lambda lam, k, N: phi(lam / 2 ** (k + N + 2), k, N),
                         f"strong({phi.name})", monotone=phi.monotone)


@dataclass(frozen=True)
class BoundednessModulus:
    b: Callable[[Fraction], Fraction]
    b0: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "b0", as_fraction(self.b0))
        if self.b0 <= 0:
            raise ValueError("b0 must be positive")

    def __call__(self, lam: RationalLike) -> Fraction:
        return as_fraction(self.b(as_fraction(lam)))

    @classmethod
    def constant(cls, bound: RationalLike, b0: RationalLike) -> BoundednessModulus:
        bound = as_fraction(bound)
        return cls(lambda lam: bound, as_fraction(b0))


@dataclass(frozen=True)
class FejerModulus:
    zeta: Callable[[Fraction, int, int], int]
    name: str

    def __call__(self, lam: RationalLike, r: int, n: int) -> int:
        value = int(self.zeta(as_fraction(lam), int(r), int(n)))
        if value < 0:
            raise ValueError("Fejer modulus must be nonnegative")
        return value


@dataclass(frozen=True)
class SolutionTarget:
    """AF_k membership (True/False, or None when undecided) plus closedness moduli."""

    af_membership: Callable[[Any, int], bool | None]
    closedness: Callable[[int], tuple[int, int]]


def monotone_fluctuation_rate(f: Callable[[Fraction], int], eps: RationalLike,
                              lam: RationalLike) -> int:
    eps = as_fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    return ceil_fraction(Fraction(2 * int(f(as_fraction(lam)))) / eps)


def km_closedness(k: int) -> tuple[int, int]:
    return 12 * k + 11, 12 * k + 11


def gpack_certificate(pack: GPack, b: RationalLike, k: int, samples: int = 10_000,
                      seed: int = 0) -> tuple[bool, bool]:
    """Grid check of the iota and nu implications on [0, b]."""
    rng = np.random.default_rng(seed)
    b_f = float(as_fraction(b))
    gap = 1.0 / (pack.iota(as_fraction(b), k) + 1)
    x = rng.uniform(0, b_f, samples)
    y = np.clip(x + rng.uniform(-gap, gap, samples), 0, b_f)
    close = np.abs(x - y) <= gap
    iota_ok = bool(np.all(np.abs(pack.G(x[close]) - pack.G(y[close])) <= 1.0 / (k + 1) + 1e-12))
    grid = np.linspace(0, b_f, samples)
    small = pack.G(grid) <= 1.0 / (pack.nu(k) + 1)
    nu_ok = bool(np.all(grid[small] <= 1.0 / (k + 1) + 1e-12))
    return iota_ok, nu_ok
