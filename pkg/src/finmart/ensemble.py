"""Seeded path ensembles, empirical probabilities and verification verdicts.

Every path draws its randomness from its own substream, derived from the
master seed by a counter-based split (``SeedSequence`` spawn keys).  Block
sizes and worker counts therefore never change the simulated values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from statistics import NormalDist
from typing import Any, Callable

import numpy as np

from ._exact import fraction_text

SEED_LIMIT = 2**64


class HorizonError(IndexError):
    """An event or functional read an index beyond the ensemble horizon."""


class RandomSource:
    def __init__(self, master_seed: int):
        if not isinstance(master_seed, (int, np.integer)) or not 0 <= master_seed < SEED_LIMIT:
            raise ValueError("master_seed must be an integer in [0, 2**64)")
        self.master_seed = int(master_seed)

    def substream(self, path_index: int) -> np.random.Generator:
        if path_index < 0:
            raise ValueError("path_index must be nonnegative")
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(int(path_index),))
        return np.random.Generator(np.random.PCG64(seq))

    def uniforms(self, start: int, stop: int, shape: tuple[int, ...]) -> np.ndarray:
        """Uniform draws of the given per-path shape for paths start..stop-1."""
        out = np.empty((stop - start, *shape))
        for row, index in enumerate(range(start, stop)):
            out[row] = self.substream(index).random(shape)
        return out

    def __repr__(self) -> str:
        return f"RandomSource({self.master_seed})"


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Sample paths, shape (M, N+1) for scalar processes or (M, N+1, dim) for points."""

    values: np.ndarray
    nonnegative: bool = False
    space: Any = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim not in (2, 3) or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"bad ensemble shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("ensemble contains non-finite entries")
        if self.nonnegative and np.any(values < 0):
            raise ValueError("nonnegative ensemble contains negative entries")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def path_count(self) -> int:
        return self.values.shape[0]

    @property
    def horizon(self) -> int:
        return self.values.shape[1] - 1

    @property
    def is_scalar(self) -> bool:
        return self.values.ndim == 2


@dataclass(frozen=True)
class Event:
    """A vectorised event reading path indices 0..reads_through only."""

    predicate: Callable[[np.ndarray], np.ndarray]
    reads_through: int

    def evaluate(self, ens: PathEnsemble) -> np.ndarray:
        if self.reads_through > ens.horizon:
            raise HorizonError(
                f"event reads index {self.reads_through} beyond horizon {ens.horizon}")
        mask = np.asarray(self.predicate(ens.values[:, : self.reads_through + 1]), dtype=bool)
        if mask.shape != (ens.path_count,):
            raise ValueError("event predicate must return one boolean per path")
        return mask

    def __invert__(self) -> Event:
        return Event(lambda prefix: ~np.asarray(self.predicate(prefix), dtype=bool), self.reads_through)

    def __and__(self, other: Event) -> Event:
        top = max(self.reads_through, other.reads_through)
        return Event(lambda prefix: self.predicate(prefix[:, : self.reads_through + 1])
                     & other.predicate(prefix[:, : other.reads_through + 1]), top)

    def __or__(self, other: Event) -> Event:
        top = max(self.reads_through, other.reads_through)
        return Event(lambda prefix: self.predicate(prefix[:, : self.reads_through + 1])
                     | other.predicate(prefix[:, : other.reads_through + 1]), top)


def exceeds_somewhere(level: float, through: int) -> Event:
    """The event "some X_n with n <= through is >= level"."""
    return Event(lambda prefix: np.any(prefix >= level, axis=1), through)


def above_somewhere(level: float, through: int) -> Event:
    return Event(lambda prefix: np.any(prefix > level, axis=1), through)


def _event_mask(ens: PathEnsemble, event: Event | Callable[[np.ndarray], bool]) -> np.ndarray:
    if isinstance(event, Event):
        return event.evaluate(ens)
    mask = np.empty(ens.path_count, dtype=bool)
    for p in range(ens.path_count):
        try:
            mask[p] = bool(event(ens.values[p]))
        except IndexError as exc:
            raise HorizonError(f"event read past horizon {ens.horizon} on path {p}") from exc
    return mask


def empirical_prob(ens: PathEnsemble, event: Event | Callable[[np.ndarray], bool]) -> Fraction:
    """Exact empirical frequency of ``event`` over the ensemble's paths.

    ``event`` is either an :class:`Event` or a per-path predicate.
    """
    mask = _event_mask(ens, event)
    return Fraction(int(mask.sum()), ens.path_count)


def empirical_mean(ens: PathEnsemble, functional: Callable[[np.ndarray], float], *,
                   vectorized: bool = False) -> float:
    """Mean of a path functional.  With ``vectorized`` it maps the value matrix to M reals."""
    return float(np.mean(_functional_samples(ens, functional, vectorized)))


def _functional_samples(ens: PathEnsemble, functional: Callable, vectorized: bool) -> np.ndarray:
    if vectorized:
        samples = np.asarray(functional(ens.values), dtype=float)
        if samples.shape != (ens.path_count,):
            raise ValueError("vectorized functional must return one value per path")
        return samples
    return np.array([float(functional(ens.values[p])) for p in range(ens.path_count)])


def mean_and_se(samples: np.ndarray) -> tuple[float, float]:
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n == 0:
        raise ValueError("no samples")
    mean = float(samples.mean())
    se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    n = trials
    phat = successes / n
    denom = 1 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z / denom * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n))
    low = 0.0 if successes == 0 else min(max(centre - half, 0.0), phat)
    high = 1.0 if successes == trials else max(min(centre + half, 1.0), phat)
    return low, high


def _number(x: Any) -> Any:
    if isinstance(x, Fraction):
        return fraction_text(x)
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


@dataclass(frozen=True)
class EmpiricalVerdict:
    """Outcome of one empirical domination check.

    ``rule`` is "point" (estimate below bound), "wilson" (upper Wilson limit
    below bound) or "mean+3se" (expectation checks).
    """

    label: str
    estimate: float
    ci_low: float
    ci_high: float
    bound: Fraction | float
    passed: bool
    rule: str
    trials: int
    premise: str | None = None
    extra: dict = field(default_factory=dict)

    def with_premise(self, status: str) -> EmpiricalVerdict:
        passed = self.passed and status != "failed"
        return EmpiricalVerdict(self.label, self.estimate, self.ci_low, self.ci_high, self.bound,
                                passed, self.rule, self.trials, status, dict(self.extra))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "estimate": self.estimate,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "bound": _number(self.bound),
            "bound_float": float(self.bound),
            "pass": self.passed,
            "rule": self.rule,
            "trials": self.trials,
            "premise": self.premise,
            **{k: _number(v) for k, v in sorted(self.extra.items())},
        }


def probability_verdict(label: str, successes: int, trials: int, bound: Fraction | float, *,
                        rule: str = "point", strict: bool = True,
                        confidence: float = 0.95) -> EmpiricalVerdict:
    """Compare an empirical frequency with ``bound`` exactly.

    ``strict`` selects ``<`` (for P(.) < lambda claims) or ``<=``.
    """
    low, high = wilson_interval(successes, trials, confidence)
    exact_bound = Fraction(bound)
    if rule == "point":
        tested = Fraction(successes, trials)
    elif rule == "wilson":
        tested = Fraction(high)
    else:
        raise ValueError(f"unknown rule {rule!r}")
    passed = tested < exact_bound if strict else tested <= exact_bound
    return EmpiricalVerdict(label, successes / trials, low, high, bound, bool(passed), rule, trials,
                            extra={"successes": successes})


def mean_verdict(label: str, samples: np.ndarray, bound: Fraction | float,
                 se_multiplier: float = 3.0) -> EmpiricalVerdict:
    mean, se = mean_and_se(samples)
    high = mean + se_multiplier * se
    passed = Fraction(high) <= Fraction(bound)
    return EmpiricalVerdict(label, mean, mean - se_multiplier * se, high, bound, bool(passed),
                            f"mean+{se_multiplier:g}se", int(np.asarray(samples).size),
                            extra={"se": se})
