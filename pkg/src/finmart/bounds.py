"""Exact evaluation of the explicit bounds for finitary supermartingales.

All arithmetic is on ``Fraction``/``int``; nothing here touches floats.
Premise calculators return the (lambda*, eps*) grade under which a process
must be a lambda*-eps*-N-supermartingale for the corresponding bound to apply.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from ._exact import RationalLike, as_fraction, ceil_fraction, fraction_text, int_text

# below this horizon the lambda_0 minima are evaluated by explicit enumeration
EXPLICIT_MIN_LIMIT = 256


class AbsContModulus:
    """A modulus of absolute continuity eps -> delta on positive rationals."""

    def __init__(self, fn: Callable[[Fraction], Fraction], name: str = "custom"):
        self._fn = fn
        self.name = name

    @classmethod
    def linear(cls, scale: RationalLike) -> AbsContModulus:
        """eps -> scale * eps."""
        scale = as_fraction(scale)
        if scale <= 0:
            raise ValueError("scale must be positive")
        return cls(lambda eps: scale * eps, f"linear({fraction_text(scale)})")

    @classmethod
    def identity(cls) -> AbsContModulus:
        return cls.linear(1)

    def __call__(self, eps: RationalLike) -> Fraction:
        eps = as_fraction(eps)
        if eps <= 0:
            raise ValueError("moduli are evaluated at positive arguments only")
        out = Fraction(self._fn(eps))
        if out <= 0:
            raise ValueError(f"modulus {self.name} returned nonpositive value at {fraction_text(eps)}")
        return out

    def __repr__(self) -> str:
        return f"AbsContModulus({self.name})"


class ModulusFamily:
    """Moduli (mu_n): explicit entries for small n, then an optional tail for all later n."""

    def __init__(self, moduli: Sequence[AbsContModulus] = (), tail: AbsContModulus | None = None):
        self.moduli = tuple(moduli)
        self.tail = tail
        if not self.moduli and tail is None:
            raise ValueError("empty modulus family")

    @classmethod
    def uniform(cls, mu: AbsContModulus) -> ModulusFamily:
        return cls((), tail=mu)

    def at(self, n: int) -> AbsContModulus:
        if n < len(self.moduli):
            return self.moduli[n]
        if self.tail is None:
            raise ValueError(f"no modulus for index {int_text(n)} (family has {len(self.moduli)})")
        return self.tail

    def min_upto(self, N: int) -> AbsContModulus:
        """mu^M_N, the pointwise minimum over n <= N."""
        if N < 0:
            raise ValueError("N must be nonnegative")
        members = list(self.moduli[: N + 1])
        if N >= len(self.moduli):
            members.append(self.at(N))

        def evaluate(eps: Fraction) -> Fraction:
            return min(m(eps) for m in members)

        return AbsContModulus(evaluate, f"min_{int_text(N)}")

    def __repr__(self) -> str:
        return f"ModulusFamily({len(self.moduli)} explicit, tail={self.tail})"


def _family(moduli: ModulusFamily | Sequence[AbsContModulus] | AbsContModulus) -> ModulusFamily:
    if isinstance(moduli, ModulusFamily):
        return moduli
    if isinstance(moduli, AbsContModulus):
        return ModulusFamily.uniform(moduli)
    return ModulusFamily(list(moduli))


def min_modulus(moduli, N: int) -> AbsContModulus:
    return _family(moduli).min_upto(N)


def _positive(name: str, value: RationalLike) -> Fraction:
    value = as_fraction(value)
    if value <= 0:
        raise ValueError(f"{name} must be positive")
    return value


def _nonnegative(name: str, value: RationalLike) -> Fraction:
    value = as_fraction(value)
    if value < 0:
        raise ValueError(f"{name} must be nonnegative")
    return value


def _horizon(N: int) -> int:
    if N < 1:
        raise ValueError("N must be >= 1")
    return int(N)


def stopped_modulus(moduli, N: int) -> AbsContModulus:
    N = _horizon(N)
    base = min_modulus(moduli, N)
    return AbsContModulus(lambda eps: base(eps / N), f"stopped({N})")


def integral_modulus(moduli, K_C: RationalLike, N: int) -> AbsContModulus:
    N = _horizon(N)
    K_C = _positive("K_C", K_C)
    base = min_modulus(moduli, N)
    return AbsContModulus(lambda eps: base(eps / (K_C * N)), f"integral({K_C},{N})")


def descent_premise(moduli, N: int, eps: RationalLike) -> tuple[Fraction, Fraction]:
    N = _horizon(N)
    eps = _positive("eps", eps)
    return min_modulus(moduli, N)(eps / (4 * N)), eps / (2 * N)


@dataclass(frozen=True)
class CondCharThresholds:
    forward: Fraction
    backward: tuple[Fraction, Fraction]


def cond_char_thresholds(mu: AbsContModulus, eps: RationalLike, lam: RationalLike) -> CondCharThresholds:
    eps = _positive("eps", eps)
    lam = _positive("lambda", lam)
    return CondCharThresholds(eps * lam, (eps / 2, mu(eps / 2)))


def ville_bound(mean0: RationalLike, alpha: RationalLike, eps: RationalLike) -> Fraction:
    alpha = as_fraction(alpha)
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    value = (as_fraction(mean0) + as_fraction(eps)) / alpha
    return min(max(value, Fraction(0)), Fraction(1))


def ville_premise(moduli, N: int, eps: RationalLike) -> tuple[Fraction, Fraction]:
    N = _horizon(N)
    eps = _positive("eps", eps)
    return min_modulus(moduli, N)(eps / (8 * N * N)), eps / (2 * N)


def downcrossing_bound(K: RationalLike, alpha: RationalLike, beta: RationalLike,
                       tail_mean: RationalLike, eps: RationalLike) -> Fraction:
    alpha, beta = as_fraction(alpha), as_fraction(beta)
    if alpha >= beta:
        raise ValueError("need alpha < beta")
    return (as_fraction(K) + as_fraction(tail_mean)) / (beta - alpha) + as_fraction(eps)


def downcrossing_premise(moduli, N: int, eps: RationalLike,
                         delta: RationalLike) -> tuple[Fraction, Fraction]:
    N = _horizon(N)
    eps = _positive("eps", eps)
    delta = _positive("delta", delta)
    return min_modulus(moduli, N)(eps * delta / (4 * N * N)), eps * delta / (2 * N)


def optional_stopping_premise(moduli, N: int, eps: RationalLike,
                              lam: RationalLike) -> tuple[Fraction, Fraction]:
    N = _horizon(N)
    eps = _positive("eps", eps)
    lam = _positive("lambda", lam)
    return min_modulus(moduli, N)(eps * lam / (16 * N)), eps * lam / (8 * N)


def _unit_interval(name: str, value: RationalLike) -> Fraction:
    value = as_fraction(value)
    if not 0 < value <= 1:
        raise ValueError(f"{name} must lie in (0, 1]")
    return value


def uniform_horizon(K: RationalLike, lam: RationalLike, eps: RationalLike) -> int:
    """N_K(lambda, eps) = ceil(512 (K+1)^2 / (lambda^2 eps^2))."""
    K = _nonnegative("K", K)
    lam = _unit_interval("lambda", lam)
    eps = _unit_interval("eps", eps)
    return ceil_fraction(512 * (K + 1) ** 2 / (lam * lam * eps * eps))


def uniform_horizon_premise(moduli, K: RationalLike, lam: RationalLike,
                            eps: RationalLike) -> tuple[int, Fraction, Fraction]:
    """(N_K, lambda*, eps*) for the learnable-rate theorem."""
    n_k = uniform_horizon(K, lam, eps)
    eps = as_fraction(eps)
    return n_k, min_modulus(moduli, n_k)(eps * eps / (32 * n_k * n_k)), eps * eps / (16 * n_k)


def _min_over_prefixes(family: ModulusFamily, N: int, argument: Callable[[int], Fraction]) -> Fraction:
    """min{mu^M_e(argument(e)) | 1 <= e <= N}.

    mu^M_e decreases in e and each argument decreases in e, so for monotone
    moduli the minimum sits at e = N; small N are enumerated explicitly.
    """
    if N <= EXPLICIT_MIN_LIMIT:
        return min(family.min_upto(e)(argument(e)) for e in range(1, N + 1))
    return family.min_upto(N)(argument(N))


@dataclass(frozen=True)
class FluctuationBound:
    bound: int
    premise_lambda: Fraction
    premise_eps: Fraction
    lambda0: Fraction
    eps0: Fraction


def martingale_fluctuation_bound(K: RationalLike, lam: RationalLike, eps: RationalLike, N: int,
                                 moduli) -> FluctuationBound:
    K = _nonnegative("K", K)
    lam = _positive("lambda", lam)
    eps = _positive("eps", eps)
    N = _horizon(N)
    family = _family(moduli)
    bound = ceil_fraction(2048 * (K + 1) ** 2 / (lam * lam * eps * eps))
    lam0 = _min_over_prefixes(family, N, lambda e: eps * eps / (128 * e * e))
    eps0 = eps * eps / (64 * N)
    grade = family.min_upto(N)(eps0 * lam0 / (16 * N))
    return FluctuationBound(bound, grade, eps0 * lam0 / (8 * N), lam0, eps0)


class StepFunction:
    """A monotone step function of lambda used for the witnesses f and h.

    ``table`` holds (threshold, value) pairs; lambda >= threshold selects the
    value of the first matching row in order of decreasing threshold, and
    ``tail`` covers every smaller lambda.
    """

    def __init__(self, table: Sequence[tuple[RationalLike, int]] = (), tail: int = 0):
        rows = sorted(((as_fraction(t), int(v)) for t, v in table), key=lambda r: -r[0])
        if any(v < 0 for _, v in rows) or tail < 0:
            raise ValueError("step function values must be natural numbers")
        self.table = tuple(rows)
        self.tail = int(tail)

    @classmethod
    def constant(cls, value: int) -> StepFunction:
        return cls((), value)

    def __call__(self, lam: RationalLike) -> int:
        lam = as_fraction(lam)
        if lam <= 0:
            raise ValueError("step functions are defined on (0, inf)")
        for threshold, value in self.table:
            if lam >= threshold:
                return value
        return self.tail

    def __repr__(self) -> str:
        if not self.table:
            return f"const {self.tail}"
        return f"StepFunction({list(self.table)}, tail={self.tail})"


@dataclass(frozen=True)
class RSParams:
    f: Callable[[Fraction], int]
    h: Callable[[Fraction], int]
    K: Fraction
    moduli: ModulusFamily

    def __post_init__(self) -> None:
        object.__setattr__(self, "K", _positive("K", self.K))
        object.__setattr__(self, "moduli", _family(self.moduli))


@dataclass(frozen=True)
class RSTriple:
    Z: int
    e: Fraction
    p: Fraction
    eps0: Fraction
    lambda0: Fraction
    alpha: int
    b: Fraction
    intermediates: dict = field(default_factory=dict)


def _witness_h(params: RSParams, lam: Fraction) -> int:
    value = int(params.h(lam))
    if value < 1:
        raise ValueError("h must be >= 1")
    return value


def rs_Z(params: RSParams, lam: RationalLike, eps: RationalLike) -> int:
    """Z = 4 ceil(2^17 (K + f(lambda/4) + 1)^2 h(lambda/10)^2 / (lambda^2 eps^2))."""
    lam = _positive("lambda", lam)
    eps = _positive("eps", eps)
    f4 = int(params.f(lam / 4))
    h10 = _witness_h(params, lam / 10)
    return 4 * ceil_fraction(2**17 * (params.K + f4 + 1) ** 2 * h10 * h10 / (lam * lam * eps * eps))


def rs_triple(params: RSParams, lam: RationalLike, eps: RationalLike, N: int) -> RSTriple:
    lam = _positive("lambda", lam)
    eps = _positive("eps", eps)
    if N < 1:
        raise ValueError("rs_triple needs N >= 1")
    family = params.moduli
    K = params.K
    h10 = _witness_h(params, lam / 10)
    alpha = int(params.f(lam / 4))
    b = max(Fraction(2 * int(params.f(lam / 10))), Fraction(2 * alpha + 1), 16 * (K + alpha) / lam)
    eps0 = eps * eps / (256 * N * h10 * h10)
    lam0 = _min_over_prefixes(family, N, lambda e: eps * eps / (512 * e * e * h10 * h10))
    mu_N = family.min_upto(N)
    e = min(eps0 * lam0 / (8 * N), lam * (b / 2 + alpha) / 8, eps / (2 * N))
    p = min(mu_N(eps0 * lam0 / (16 * N)), mu_N(eps / (8 * N * N)), Fraction(1))
    Z = rs_Z(params, lam, eps)
    return RSTriple(Z, e, p, eps0, lam0, alpha, b,
                    {"lambda": lam, "eps": eps, "N": N, "h(lambda/10)": h10})
