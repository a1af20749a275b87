"""The stochastic Krasnoselskii-Mann iteration and its explicit moduli.

x_{n+1} = (1 - s_n) x_n (+) s_n T_{v_n} x_n with i.i.d. indices v_n. For finite
families the conditional expectation E[d^2(x_{m+1}, z) | F_m] is a finite sum
and is recorded exactly (in floating point) alongside the paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .._exact import RationalLike, as_fraction, fraction_text
from ..bounds import AbsContModulus, ModulusFamily, RSParams, StepFunction
from ..ensemble import EmpiricalVerdict, PathEnsemble, RandomSource, probability_verdict
from ..metastability import ModuliBundle
from ..moduli import (BoundednessModulus, DivergenceRate, FejerModulus, LiminfModulus,
                      TotalBoundednessModulus, gpack_square)
from ..processes import ContractError
from .families import NonexpansiveFamily

FIXED_POINT_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class KMConfig:
    x0: np.ndarray
    steps: Callable[[int], Fraction]
    theta: DivergenceRate
    family: NonexpansiveFamily
    fixed_point: np.ndarray
    c: Fraction

    def __post_init__(self) -> None:
        space = self.family.space
        x0 = space.check_point(self.x0)
        p = space.check_point(self.fixed_point)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "fixed_point", p)
        object.__setattr__(self, "c", as_fraction(self.c))
        if self.c < 1:
            raise ValueError("c must be >= 1")
        if float(space.distance(x0, p)) > float(self.c):
            raise ValueError("need d(x0, p) <= c")
        images = self.family.apply_all(p[None])
        if float(np.max(space.distance(images, p[None]))) > FIXED_POINT_TOLERANCE:
            raise ValueError("fixed_point is not fixed by every map of the family")

    @classmethod
    def constant_steps(cls, x0, step: RationalLike, family: NonexpansiveFamily, fixed_point,
                       c: RationalLike, theta: DivergenceRate | None = None) -> KMConfig:
        from ..moduli import theta_constant

        step = as_fraction(step)
        if not 0 < step <= 1:
            raise ValueError("steps must lie in (0, 1]")
        return cls(np.asarray(x0, dtype=float), lambda n: step, theta or theta_constant(step),
                   family, np.asarray(fixed_point, dtype=float), as_fraction(c))

    def step(self, n: int) -> float:
        s = as_fraction(self.steps(n))
        if not 0 < s <= 1:
            raise ValueError(f"step {n} = {s} outside (0, 1]")
        return float(s)


@dataclass(frozen=True, eq=False)
class KMRun:
    ensemble: PathEnsemble
    indices: np.ndarray
    fejer: dict = field(default_factory=dict)
    anchors: dict = field(default_factory=dict)


def _anchor_key(z) -> tuple:
    return tuple(float(c) for c in np.asarray(z, dtype=float).ravel())


def run_skm(config: KMConfig, M: int, N: int, src: RandomSource,
            anchors: Sequence = ()) -> KMRun:
    """M paths of N steps; ``fejer[z][p, m]`` = E[d^2(x_{m+1}, z) | F_m] on path p."""
    if M < 1 or N < 1:
        raise ValueError("need M >= 1 and N >= 1")
    family = config.family
    space = family.space
    weights = np.array([float(w) for w in family.weights])
    indices = family.draw(src.uniforms(0, M, (N,)))
    values = np.empty((M, N + 1, *space.point_shape))
    values[:, 0] = config.x0
    keys = [_anchor_key(z) for z in anchors]
    points = {key: space.check_point(z) for key, z in zip(keys, anchors)}
    fejer = {key: np.empty((M, N)) for key in keys}
    x = values[:, 0]
    for n in range(N):
        s = config.step(n)
        images = family.apply_all(x)
        moved = space.geodesic(x[None], images, s)
        for key in keys:
            d2 = space.distance(moved, points[key]) ** 2
            fejer[key][:, n] = weights @ d2
        x = moved[indices[:, n], np.arange(M)]
        if not np.all(np.isfinite(x)):
            raise ContractError(f"non-finite iterate at step {n + 1}")
        values[:, n + 1] = x
    ens = PathEnsemble(values, space=space)
    return KMRun(ens, indices, {k: _readonly(v) for k, v in fejer.items()}, points)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def af_membership(family: NonexpansiveFamily, z, k: int, *, samples: int = 10_000,
                  seed: int = 0, confidence: float = 0.95) -> bool | None:
    """z in AF_k, i.e. E[d^2(T_v z, z)] <= 1/(k+1).

    Exact for families with a closed-form mean. Otherwise a Monte Carlo
    estimate over v with a normal interval, and None when it straddles the level.
    """
    level = Fraction(1, k + 1)
    if family.mean_sq_displacement is not None:
        return family.mean_sq_displacement(z) <= level
    from statistics import NormalDist

    rng = np.random.default_rng(seed)
    point = np.asarray(z, dtype=float)[None].repeat(samples, axis=0)
    v = family.draw(rng.random(samples))
    d2 = family.space.distance(family.apply(v, point), point) ** 2
    half = NormalDist().inv_cdf(0.5 + confidence / 2) * d2.std(ddof=1) / np.sqrt(samples)
    if d2.mean() + half <= float(level):
        return True
    if d2.mean() - half > float(level):
        return False
    return None


@dataclass(frozen=True)
class KMModuli:
    c: Fraction
    zeta: FejerModulus
    phi: LiminfModulus
    psi: Callable[[Fraction, int], int]
    b: BoundednessModulus
    mu: AbsContModulus
    f: StepFunction
    h: StepFunction


def km_moduli(c: RationalLike, theta: DivergenceRate) -> KMModuli:
    c = as_fraction(c)
    if c < 1:
        raise ValueError("c must be >= 1")
    c2 = c * c
    zeta = FejerModulus(lambda lam, r, n: int(64 * c2 * (r + 1) ** 2), f"km_zeta(c={c})")
    phi = LiminfModulus(lambda lam, k, N: theta(N, (c2 + 1) * (k + 1) / lam),
                        f"km_phi(c={c}, {theta.name})", monotone=True)

    def psi(mu: Fraction, N: int) -> int:
        return theta(N, (c2 + 1) / as_fraction(mu))

    return KMModuli(c, zeta, phi, psi, BoundednessModulus.constant(c, 4 * c2 + 1),
                    AbsContModulus.linear(1 / (4 * c2)), StepFunction.constant(1),
                    StepFunction.constant(2))


def km_bundle(c: RationalLike, theta: DivergenceRate, gamma: TotalBoundednessModulus,
              phi: LiminfModulus | None = None, d_bound: RationalLike | None = None) -> ModuliBundle:
    """The full bundle with the square G pack; ``phi`` overrides the liminf modulus."""
    m = km_moduli(c, theta)
    rs = RSParams(m.f, m.h, m.b.b0, ModulusFamily.uniform(m.mu))
    return ModuliBundle(gpack_square(), gamma, m.c if d_bound is None else as_fraction(d_bound),
                        m.zeta, phi or m.phi, m.b, rs)


def fejer_gate(c: RationalLike, r: int) -> int:
    """Index of the approximation set AF the Fejer step guarantee requires."""
    return int(64 * as_fraction(c) ** 2 * (r + 1) ** 2)


def verify_fejer_step(run: KMRun, family: NonexpansiveFamily, z, r: int, n: int,
                      c: RationalLike) -> list[EmpiricalVerdict]:
    """Per m <= n: frequency of paths with E[d^2(x_{m+1}, z) | F_m] > d^2(x_m, z) + 1/(r+1)."""
    key = _anchor_key(z)
    if key not in run.fejer:
        raise ContractError("anchor was not traced in this run")
    trace = run.fejer[key]
    if n >= trace.shape[1]:
        raise ValueError(f"need n < {trace.shape[1]}")
    space = run.ensemble.space
    member = af_membership(family, z, fejer_gate(c, r))
    status = "verified" if member else ("not-applicable" if member is False else "undecided")
    slack = 1.0 / (r + 1)
    d2 = space.distance(run.ensemble.values[:, : n + 1], run.anchors[key]) ** 2
    out = []
    for m in range(n + 1):
        violations = int(np.count_nonzero(trace[:, m] > d2[:, m] + slack))
        verdict = probability_verdict(f"fejer[m={m}]", violations, run.ensemble.path_count,
                                      Fraction(0), rule="point", strict=False)
        verdict.extra.update({"r": r, "m": m})
        if status != "verified":
            verdict = EmpiricalVerdict(verdict.label, verdict.estimate, verdict.ci_low,
                                       verdict.ci_high, verdict.bound, True, verdict.rule,
                                       verdict.trials, status, dict(verdict.extra))
        else:
            verdict = verdict.with_premise(status)
        out.append(verdict)
    return out


def boundedness_check(run: KMRun, p, c: RationalLike) -> tuple[bool, float]:
    """d(x_n, p) <= c on every path and step, with no tolerance."""
    dist = run.ensemble.space.distance(run.ensemble.values, np.asarray(p, dtype=float))
    worst = float(dist.max())
    return worst <= float(as_fraction(c)), worst


def displacement_series(run: KMRun, family: NonexpansiveFamily) -> np.ndarray:
    """E_v[d^2(T_v x_n, x_n)] per path and n."""
    values = run.ensemble.values
    flat = values.reshape(-1, *values.shape[2:])
    return family.mean_sq_displacement_float(flat).reshape(values.shape[:2])


def liminf_simple_check(run: KMRun, family: NonexpansiveFamily, moduli: KMModuli,
                        mu: RationalLike, N: int) -> dict:
    """Some n in [N; Psi(mu, N)] with empirical E[d^2(T_v x_n, x_n)] < mu.

    The window is cut at the horizon; a hit inside it is conclusive, a miss is not.
    """
    mu = as_fraction(mu)
    upper = moduli.psi(mu, N)
    top = min(upper, run.ensemble.horizon)
    if N > top:
        raise ValueError("N beyond horizon")
    means = displacement_series(run, family)[:, N: top + 1].mean(axis=0)
    hits = np.flatnonzero(means < float(mu))
    found = hits.size > 0
    return {"mu": fraction_text(mu), "N": N, "psi": upper, "checked_through": top,
            "truncated": top < upper, "first_hit": int(N + hits[0]) if found else None,
            "min_mean": float(means.min()),
            "status": "pass" if found else ("inconclusive" if top < upper else "fail")}


def liminf_check(run: KMRun, family: NonexpansiveFamily, moduli: KMModuli,
                 lam: RationalLike, k: int, N: int) -> EmpiricalVerdict:
    """Empirical P(x_n not in AF_k for every n in [N; Phi(lam, k, N)]) < lam.

    A window cut at the horizon gives a larger event, so a pass stays valid.
    """
    lam = as_fraction(lam)
    upper = moduli.phi(lam, k, N)
    top = min(upper, run.ensemble.horizon)
    if N > top:
        raise ValueError("N beyond horizon")
    disp = displacement_series(run, family)[:, N: top + 1]
    never = ~np.any(disp <= 1.0 / (k + 1), axis=1)
    verdict = probability_verdict("km-liminf", int(never.sum()), run.ensemble.path_count, lam,
                                  rule="point", strict=True)
    verdict.extra.update({"k": k, "N": N, "phi": upper, "checked_through": top,
                          "truncated": top < upper})
    return verdict
