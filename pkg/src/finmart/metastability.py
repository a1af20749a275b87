"""Exact evaluation of the rate of metastability Delta.

Intermediates are big integers and exact rationals. They can outgrow any
machine (the composed moduli form towers of exponentials), so evaluation runs
under an :class:`EvaluationBudget` and stops with a marker naming the first
intermediate that does not fit. It never approximates.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable

import numpy as np

from ._exact import RationalLike, as_fraction, bit_size, fraction_text, int_text
from .bounds import RSParams, rs_triple, rs_Z
from .ensemble import EmpiricalVerdict, HorizonError, PathEnsemble, probability_verdict
from .moduli import (BoundednessModulus, FejerModulus, GPack, LiminfModulus,
                     TotalBoundednessModulus)

BUDGET_ENV = "FINMART_BUDGET"
DEFAULT_STEPS = 1_000_000
DEFAULT_BITS = 262_144


class BudgetExceeded(Exception):
    def __init__(self, intermediate: str, reason: str, description: str = ""):
        super().__init__(f"{intermediate}: {reason}")
        self.intermediate = intermediate
        self.reason = reason
        self.description = description

    def to_dict(self) -> dict:
        return {"intermediate": self.intermediate, "reason": self.reason,
                "description": self.description}


@dataclass(frozen=True)
class EvaluationBudget:
    max_steps: int = DEFAULT_STEPS
    max_bits: int = DEFAULT_BITS

    def __post_init__(self) -> None:
        if self.max_steps < 1 or self.max_bits < 64:
            raise ValueError("budget needs max_steps >= 1 and max_bits >= 64")

    @classmethod
    def parse(cls, text: str) -> EvaluationBudget:
        """Parse "steps:bits"."""
        try:
            steps, bits = text.split(":")
            return cls(int(steps), int(bits))
        except ValueError as exc:
            raise ValueError(f"bad budget {text!r}, expected 'steps:bits'") from exc

    @classmethod
    def from_env(cls) -> EvaluationBudget:
        text = os.environ.get(BUDGET_ENV)
        return cls.parse(text) if text else cls()

    def start(self) -> BudgetMeter:
        return BudgetMeter(self)


class BudgetMeter:
    """Mutable consumption record for one evaluation."""

    def __init__(self, budget: EvaluationBudget):
        self.budget = budget
        self.steps = 0
        self.peak_bits = 0

    def tick(self, what: str, count: int = 1) -> None:
        self.steps += count
        if self.steps > self.budget.max_steps:
            raise BudgetExceeded(what, f"step budget {self.budget.max_steps} exhausted")

    def exponent(self, what: str, exponent: int, description: str = "") -> None:
        """Refuse 2**exponent (or worse) before computing it."""
        if exponent > self.budget.max_bits:
            raise BudgetExceeded(what, f"needs at least {int_text(exponent)} bits "
                                       f"(limit {self.budget.max_bits})", description)

    def check(self, what: str, value: int | Fraction) -> int | Fraction:
        bits = bit_size(value)
        if bits > self.budget.max_bits:
            raise BudgetExceeded(what, f"{bits} bits exceeds limit {self.budget.max_bits}")
        self.peak_bits = max(self.peak_bits, bits)
        return value


def _meter(meter: BudgetMeter | None) -> BudgetMeter:
    return meter if meter is not None else EvaluationBudget.from_env().start()


class CounterexampleFunction:
    """g: N -> N as a constant, an affine map a*n + b, or an opaque callback."""

    def __init__(self, kind: str, a: int = 0, b: int = 0,
                 fn: Callable[[int], int] | None = None, monotone: bool = False):
        if kind not in ("const", "affine", "callback"):
            raise ValueError(f"unknown form {kind!r}")
        if kind == "callback" and fn is None:
            raise ValueError("callback form needs a function")
        if a < 0 or b < 0:
            raise ValueError("g must be nonnegative: need a, b >= 0")
        self.kind = kind
        self.a = int(a)
        self.b = int(b)
        self.fn = fn
        self.monotone = monotone or kind != "callback"

    @classmethod
    def const(cls, c: int) -> CounterexampleFunction:
        return cls("const", 0, c)

    @classmethod
    def affine(cls, a: int, b: int) -> CounterexampleFunction:
        return cls("const", 0, b) if a == 0 else cls("affine", a, b)

    @classmethod
    def callback(cls, fn: Callable[[int], int], monotone: bool = False) -> CounterexampleFunction:
        """``monotone`` declares n + g(n) nondecreasing, which lets window maxima skip scans."""
        return cls("callback", fn=fn, monotone=monotone)

    @classmethod
    def parse(cls, text: str) -> CounterexampleFunction:
        parts = text.split()
        try:
            if parts[0] == "const" and len(parts) == 2:
                return cls.const(int(parts[1]))
            if parts[0] == "affine" and len(parts) == 3:
                return cls.affine(int(parts[1]), int(parts[2]))
        except (IndexError, ValueError):
            pass
        raise ValueError(f"bad g descriptor {text!r}, expected 'const c' or 'affine a b'")

    def __call__(self, n: int) -> int:
        if self.kind == "callback":
            value = int(self.fn(n))
            if value < 0:
                raise ValueError(f"g({int_text(n)}) = {int_text(value)} is negative")
            return value
        return self.a * n + self.b

    def tilde(self, n: int) -> int:
        return n + self(n)

    def describe(self) -> str:
        if self.kind == "const":
            return f"const {int_text(self.b)}"
        if self.kind == "affine":
            return f"affine {int_text(self.a)} {int_text(self.b)}"
        return "callback"

    def __repr__(self) -> str:
        return f"CounterexampleFunction({self.describe()})"


def _affine_iterate(slope: int, offset: int, count: int, meter: BudgetMeter, what: str) -> int:
    """x -> slope*x + offset applied count times to 0."""
    if count == 0 or offset == 0:
        return 0
    if slope == 1:
        return meter.check(what, count * offset)
    meter.exponent(what, count * (slope.bit_length() - 1),
                   f"{int_text(offset)}*({slope}^{int_text(count)} - 1)/{slope - 1}")
    return meter.check(what, offset * (slope**count - 1) // (slope - 1))


def iterate_tilde(g: CounterexampleFunction, m: int, meter: BudgetMeter | None = None,
                  what: str = "iterate") -> int:
    """g~ = n + g(n) applied m times to 0."""
    if m < 0:
        raise ValueError("iteration count must be nonnegative")
    meter = _meter(meter)
    if g.kind == "const":
        return meter.check(what, m * g.b)
    if g.kind == "affine":
        return _affine_iterate(1 + g.a, g.b, m, meter, what)
    n = 0
    for _ in range(m):
        meter.tick(what)
        step = g(n)
        if step == 0:
            # fixed point of g~: further iterates change nothing
            return n
        n = meter.check(what, n + step)
    return n


@dataclass(frozen=True)
class ModuliBundle:
    gpack: GPack
    gamma: TotalBoundednessModulus
    d_bound: Fraction
    zeta: FejerModulus
    phi: LiminfModulus
    b: BoundednessModulus
    rs: RSParams

    def __post_init__(self) -> None:
        object.__setattr__(self, "d_bound", as_fraction(self.d_bound))
        if self.d_bound < 0:
            raise ValueError("d_bound must be nonnegative")
        if self.rs.K != self.b.b0:
            raise ValueError("ill-formed bundle: the RS bound K must equal b0")

    def describe(self) -> dict:
        return {"gpack": self.gpack.name, "gamma": self.gamma.name,
                "d_bound": fraction_text(self.d_bound), "zeta": self.zeta.name,
                "phi": self.phi.name, "b0": fraction_text(self.b.b0)}


def _eps_index(k: int) -> Fraction:
    return Fraction(1, k + 1)


def _real_index(e: Fraction) -> int:
    """The natural number r standing in for a real e > 0: r = floor(1/e)."""
    return (1 / e).__floor__()


def psi0_chi0(bundle: ModuliBundle, lam: RationalLike, k: int, N: int) -> tuple[int, int]:
    """(chi0, psi0) = (zeta(p, e, N), Z) at precision 1/(k+1)."""
    lam = as_fraction(lam)
    triple = rs_triple(bundle.rs, lam, _eps_index(k), max(N, 1))
    chi0 = bundle.zeta(triple.p, _real_index(triple.e), N)
    return chi0, triple.Z


def inner_net_size(bundle: ModuliBundle, lam: RationalLike, k: int) -> int:
    """gamma(iota_{b(lam/2) + d}(3k + 2))."""
    lam = as_fraction(lam)
    radius = bundle.b(lam / 2) + bundle.d_bound
    return bundle.gamma(bundle.gpack.iota(radius, 3 * k + 2))


def inner_lambda(bundle: ModuliBundle, lam: RationalLike, k: int) -> Fraction:
    lam = as_fraction(lam)
    return lam / (2 * inner_net_size(bundle, lam, k))


def chi1_psi1(bundle: ModuliBundle, lam: RationalLike, k: int, N: int) -> tuple[int, int, int]:
    """(chi1, psi1, net size) for the lifted precision 3k + 2."""
    net = inner_net_size(bundle, lam, k)
    chi1, psi1 = psi0_chi0(bundle, as_fraction(lam) / (2 * net), 3 * k + 2, N)
    return chi1, psi1, net


def set_fluctuation_multiplier(psi: int, p: int) -> int:
    if psi < 0 or p < 0:
        raise ValueError("arguments must be natural numbers")
    return p * psi


def iteration_count(bundle: ModuliBundle, lam: RationalLike, k: int, q: int) -> int:
    """q * Z(lam / (2 gamma(...)), 3k + 2)."""
    return q * rs_Z(bundle.rs, inner_lambda(bundle, lam, k), _eps_index(3 * k + 2))


def psi_meta(bundle: ModuliBundle, lam: RationalLike, k: int, g: CounterexampleFunction, q: int,
             meter: BudgetMeter | None = None) -> int:
    return iterate_tilde(g, iteration_count(bundle, lam, k, q), _meter(meter), "Psi")


def ztilde(bundle: ModuliBundle, lam: RationalLike, k: int, psi: int) -> int:
    """zeta(p, e, Psi) with p, e taken at (lam / (2 gamma(...)), 3k + 2, Psi)."""
    chi1, _, _ = chi1_psi1(bundle, lam, k, psi)
    return chi1


def phi_prime(phi: LiminfModulus, lam: RationalLike, k: int, N: int,
              meter: BudgetMeter | None = None) -> int:
    """Phi(lam 2^-(k+N+2), k, N), refusing the power of two when it cannot fit."""
    if phi.shift is not None:
        return N + int(phi.shift(k))
    meter = _meter(meter)
    meter.exponent("Phi'", k + N + 2,
                   f"Phi({fraction_text(as_fraction(lam))} * 2^-({int_text(k)} + {int_text(N)} + 2), {int_text(k)}, "
                   f"{int_text(N)})")
    return meter.check("Phi'", phi(as_fraction(lam) / 2 ** (k + N + 2), k, N))


def window_function(bundle: ModuliBundle, mu: RationalLike, l: int, g: CounterexampleFunction,
                    meter: BudgetMeter | None = None) -> CounterexampleFunction:
    """h(m) = max{m' + g(m') | m <= m' <= Phi'(mu, l, m)} - m.

    With a shift-form liminf modulus and constant/affine g this is affine:
    a m + (1 + a) s + b. Otherwise it is a callback that evaluates the maximum
    at the right endpoint (monotone g) or by a scan, both under the budget.
    """
    meter = _meter(meter)
    phi = bundle.phi
    if phi.shift is not None and g.kind != "callback":
        s = int(phi.shift(l))
        return CounterexampleFunction.affine(g.a, (1 + g.a) * s + g.b)
    mu = as_fraction(mu)

    def h(m: int) -> int:
        right = phi_prime(phi, mu, l, m, meter)
        if g.monotone:
            return g.tilde(right) - m
        span = right - m + 1
        meter.tick("h window scan", span)
        return max(g.tilde(x) for x in range(m, right + 1)) - m

    return CounterexampleFunction.callback(h, monotone=False)


def _max_phi_prime(phi: LiminfModulus, lam: Fraction, k: int, upto: int, meter: BudgetMeter) -> int:
    if phi.monotone:
        return phi_prime(phi, lam, k, upto, meter)
    meter.tick("Delta_i scan", upto + 1)
    return max(phi_prime(phi, lam, k, m, meter) for m in range(upto + 1))


@dataclass
class IndexTrace:
    index: int
    k: int
    window: str | None = None
    lambda_inner: Fraction | None = None
    iteration_count: int | None = None
    psi: int | None = None
    ztilde: int | None = None
    delta: int | None = None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"index": self.index, "k": int_text(self.k), "window": self.window}
        for name in ("lambda_inner", "iteration_count", "psi", "ztilde", "delta"):
            value = getattr(self, name)
            out[name] = None if value is None else fraction_text(value)
        return out


@dataclass
class DeltaTrace:
    lam: Fraction
    k: int
    g: str
    bundle: dict
    net_size: int | None = None
    lam_hat: Fraction | None = None
    p_k: int | None = None
    k_sequence: list[int] = field(default_factory=list)
    indices: list[IndexTrace] = field(default_factory=list)
    delta: int | None = None
    exceeded: BudgetExceeded | None = None
    steps_used: int = 0
    peak_bits: int = 0

    @property
    def finite(self) -> bool:
        return self.delta is not None

    def to_dict(self) -> dict:
        def text(x):
            return None if x is None else fraction_text(x)

        return {
            "lambda": text(self.lam),
            "k": self.k,
            "g": self.g,
            "bundle": self.bundle,
            "net_size": text(self.net_size),
            "lambda_hat": text(self.lam_hat),
            "p_k": text(self.p_k),
            "k_sequence": [int_text(x) for x in self.k_sequence],
            "indices": [entry.to_dict() for entry in self.indices],
            "delta": text(self.delta),
            "budget_exceeded": None if self.exceeded is None else self.exceeded.to_dict(),
            "steps_used": self.steps_used,
            "peak_bits": self.peak_bits,
        }


def delta(bundle: ModuliBundle, lam: RationalLike, k: int, g: CounterexampleFunction,
          budget: EvaluationBudget | None = None) -> DeltaTrace:
    lam = as_fraction(lam)
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    if k < 0:
        raise ValueError("k must be a natural number")
    meter = (budget or EvaluationBudget.from_env()).start()
    trace = DeltaTrace(lam, k, g.describe(), bundle.describe())
    pack = bundle.gpack
    third = lam / 3
    b_third = bundle.b(third)
    try:
        nu_index = pack.nu(2 * k + 1)
        trace.net_size = net = meter.check("net size", bundle.gamma(pack.iota(2 * b_third, 2 * nu_index + 1)))
        trace.lam_hat = lam_hat = meter.check("lambda_hat", lam / (3 * (net + 1)))
        radius = max(2 * b_third, b_third + bundle.d_bound)
        trace.p_k = q = meter.check("p_k", bundle.gamma(pack.iota(radius, 6 * nu_index + 5)))
        trace.k_sequence.append(max(6 * nu_index + 5, k))
        for i in range(net + 1):
            meter.tick("Delta index")
            k_i = trace.k_sequence[i]
            entry = IndexTrace(i, k_i)
            trace.indices.append(entry)
            h = window_function(bundle, third, k_i, g, meter)
            entry.window = h.describe()
            entry.lambda_inner = meter.check("lambda_inner", inner_lambda(bundle, lam_hat, k_i))
            entry.iteration_count = meter.check("iteration count",
                                                iteration_count(bundle, lam_hat, k_i, q))
            entry.psi = iterate_tilde(h, entry.iteration_count, meter, f"Psi_{i}")
            entry.delta = meter.check(f"Delta_{i}", _max_phi_prime(bundle.phi, third, k_i, entry.psi, meter))
            if i < net:
                entry.ztilde = meter.check(f"Ztilde_{i}", ztilde(bundle, lam_hat, k_i, entry.psi))
                trace.k_sequence.append(max(trace.k_sequence[i], entry.ztilde))
        trace.delta = max(entry.delta for entry in trace.indices)
    except BudgetExceeded as exc:
        trace.exceeded = exc
    trace.steps_used = meter.steps
    trace.peak_bits = meter.peak_bits
    return trace


def _window_unstable(points: np.ndarray, threshold: float,
                     distance: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
    """points: (paths, width, ...) -> some pair in the window is more than threshold apart."""
    width = points.shape[1]
    out = np.zeros(points.shape[0], dtype=bool)
    for i in range(width):
        for j in range(i + 1, width):
            out |= np.asarray(distance(points[:, i], points[:, j])) > threshold
    return out


def _default_distance(ens: PathEnsemble):
    if ens.space is not None:
        return ens.space.distance
    if ens.is_scalar:
        return lambda x, y: np.abs(x - y)
    return lambda x, y: np.linalg.norm(x - y, axis=-1)


def empirical_metastability(ens: PathEnsemble, n_star: int, k: int, g: CounterexampleFunction,
                            lam: RationalLike = Fraction(1, 2), distance=None) -> EmpiricalVerdict:
    """Frequency of paths where every window [n; n + g(n)], n <= n_star, is 1/(k+1)-unstable."""
    if n_star < 0 or k < 0:
        raise ValueError("n_star and k must be natural numbers")
    ends = [n + g(n) for n in range(n_star + 1)]
    if max(ends) > ens.horizon:
        raise HorizonError(f"window end {max(ends)} beyond horizon {ens.horizon}")
    distance = distance or _default_distance(ens)
    threshold = 1.0 / (k + 1)
    alive = np.ones(ens.path_count, dtype=bool)
    for n, end in enumerate(ends):
        rows = np.flatnonzero(alive)
        if rows.size == 0:
            break
        alive[rows] = _window_unstable(ens.values[rows, n:end + 1], threshold, distance)
    verdict = probability_verdict("metastability", int(alive.sum()), ens.path_count,
                                  as_fraction(lam), rule="point", strict=True)
    verdict.extra.update({"n_star": n_star, "k": k, "g": g.describe()})
    return verdict
