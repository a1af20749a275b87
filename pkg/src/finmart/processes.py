"""Adapted processes with exact conditional means, and the transforms built on them.

A generator is a Markov kernel acting on a vector of per-path states.  It
reports the exact conditional mean E[X_{n+1} | F_n] alongside each state, so
verification never has to estimate conditional expectations.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from ._exact import RationalLike, as_fraction
from .bounds import AbsContModulus, ModulusFamily
from .ensemble import EmpiricalVerdict, PathEnsemble, RandomSource, probability_verdict

DEFAULT_BLOCK = 8192


class SimulationError(RuntimeError):
    pass


class ContractError(ValueError):
    """A structural precondition (predictability, shapes, spaces) was violated."""


class ProcessGenerator:
    """Base class.  Subclasses act on state arrays of shape (paths, state_width)."""

    draws_per_step = 1
    state_width = 1
    nonnegative = False
    name = "generator"

    def initial_state(self, count: int) -> np.ndarray:
        raise NotImplementedError

    def step(self, state: np.ndarray, u: np.ndarray, n: int) -> np.ndarray:
        raise NotImplementedError

    def value(self, state: np.ndarray) -> np.ndarray:
        return state[:, 0]

    def cond_mean(self, state: np.ndarray, n: int) -> np.ndarray:
        raise NotImplementedError

    def eta(self, state: np.ndarray, n: int) -> np.ndarray | None:
        return None

    def chi(self, state: np.ndarray, n: int) -> np.ndarray | None:
        return None

    def moduli(self, N: int) -> ModulusFamily:
        """Moduli of absolute continuity for X_0..X_N, from a pathwise bound sup|X_n| <= B_n."""
        mods = []
        for bound in self.sup_bounds(N):
            scale = Fraction(1) if bound == 0 else 1 / as_fraction(bound)
            mods.append(AbsContModulus.linear(scale))
        return ModulusFamily(mods)

    def sup_bounds(self, N: int) -> list[Fraction]:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"name": self.name}


class PolyaUrn(ProcessGenerator):
    """Red-ball fraction of a Polya urn; a martingale."""

    state_width = 2
    nonnegative = True
    name = "polya"

    def __init__(self, red: int = 1, blue: int = 1):
        if red < 0 or blue < 0 or red + blue == 0:
            raise ValueError("urn needs nonnegative counts and at least one ball")
        self.red, self.blue = int(red), int(blue)

    def initial_state(self, count: int) -> np.ndarray:
        state = np.empty((count, 2))
        state[:, 0] = self.red
        state[:, 1] = self.red + self.blue
        return state

    def value(self, state: np.ndarray) -> np.ndarray:
        return state[:, 0] / state[:, 1]

    def step(self, state, u, n):
        draw_red = u[:, 0] < state[:, 0] / state[:, 1]
        return np.column_stack([state[:, 0] + draw_red, state[:, 1] + 1])

    def cond_mean(self, state, n):
        return state[:, 0] / state[:, 1]

    def sup_bounds(self, N):
        return [Fraction(1)] * (N + 1)

    def describe(self):
        return {"name": self.name, "red": self.red, "blue": self.blue}


class Multiplicative(ProcessGenerator):
    """X_{n+1} = X_n * U with U uniform on [0, 2 theta]."""

    nonnegative = True
    name = "multiplicative"

    def __init__(self, theta: RationalLike = Fraction(9, 10), x0: RationalLike = 1):
        self.theta = as_fraction(theta)
        self.x0 = as_fraction(x0)
        if self.theta < 0 or self.x0 < 0:
            raise ValueError("theta and x0 must be nonnegative")

    def initial_state(self, count):
        return np.full((count, 1), float(self.x0))

    def step(self, state, u, n):
        return state * (2 * float(self.theta) * u[:, :1])

    def cond_mean(self, state, n):
        return float(self.theta) * state[:, 0]

    def sup_bounds(self, N):
        growth = max(2 * self.theta, Fraction(1))
        return [self.x0 * growth**n for n in range(N + 1)]

    def describe(self):
        return {"name": self.name, "theta": str(self.theta), "x0": str(self.x0)}


Schedule = Callable[[int], Fraction]


def geometric_schedule(ratio: RationalLike = Fraction(1, 2), scale: RationalLike = 1) -> Schedule:
    ratio, scale = as_fraction(ratio), as_fraction(scale)
    return lambda n: scale * ratio**n


class RobbinsSiegmundCanonical(ProcessGenerator):
    """X_{n+1} = ((1 + chi_n) X_n + eta_n + excess) * B with B in {0, 2} fair.

    With ``noisy=False`` the factor B is replaced by 1, giving a deterministic
    process.  chi_n and eta_n are deterministic schedules, hence adapted.
    """

    nonnegative = True
    name = "rs_canonical"

    def __init__(self, chi: Schedule | None = None, eta: Schedule | None = None,
                 x0: RationalLike = 1, excess: RationalLike = 0, noisy: bool = True):
        self.chi_schedule = chi or geometric_schedule()
        self.eta_schedule = eta or geometric_schedule()
        self.x0 = as_fraction(x0)
        self.excess = as_fraction(excess)
        self.noisy = noisy
        if self.x0 < 0 or self.excess < 0:
            raise ValueError("x0 and excess must be nonnegative")

    def _target(self, state, n):
        chi = float(self.chi_schedule(n))
        eta = float(self.eta_schedule(n))
        return (1 + chi) * state[:, 0] + eta

    def initial_state(self, count):
        return np.full((count, 1), float(self.x0))

    def step(self, state, u, n):
        drift = self._target(state, n) + float(self.excess)
        if self.noisy:
            drift = drift * np.where(u[:, 0] < 0.5, 0.0, 2.0)
        return drift[:, None]

    def cond_mean(self, state, n):
        return self._target(state, n) + float(self.excess)

    def eta(self, state, n):
        return np.full(state.shape[0], float(self.eta_schedule(n)))

    def chi(self, state, n):
        return np.full(state.shape[0], float(self.chi_schedule(n)))

    def sup_bounds(self, N):
        out = [self.x0]
        factor = 2 if self.noisy else 1
        for n in range(N):
            out.append(factor * ((1 + as_fraction(self.chi_schedule(n))) * out[-1]
                                 + as_fraction(self.eta_schedule(n)) + self.excess))
        return out

    def describe(self):
        return {"name": self.name, "x0": str(self.x0), "excess": str(self.excess),
                "noisy": self.noisy}


class BoundedWalk(ProcessGenerator):
    """Fair +-step walk on [0, upper], absorbed at either end; a martingale."""

    nonnegative = True
    name = "bounded_walk"

    def __init__(self, start: RationalLike = 5, upper: RationalLike = 10, step: RationalLike = 1):
        self.start, self.upper, self.step_size = map(as_fraction, (start, upper, step))
        if not 0 <= self.start <= self.upper or self.step_size <= 0:
            raise ValueError("need 0 <= start <= upper and step > 0")

    def initial_state(self, count):
        return np.full((count, 1), float(self.start))

    def step(self, state, u, n):
        x = state[:, 0]
        inside = (x > 0) & (x < float(self.upper))
        move = np.where(u[:, 0] < 0.5, -1.0, 1.0) * float(self.step_size)
        return np.clip(np.where(inside, x + move, x), 0.0, float(self.upper))[:, None]

    def cond_mean(self, state, n):
        return state[:, 0]

    def sup_bounds(self, N):
        return [self.upper] * (N + 1)

    def describe(self):
        return {"name": self.name, "start": str(self.start), "upper": str(self.upper),
                "step": str(self.step_size)}


class Drift(ProcessGenerator):
    """Deterministic X_{n+1} = X_n + increment; increment 0 gives a constant process."""

    draws_per_step = 0
    name = "drift"

    def __init__(self, x0: RationalLike = 0, increment: RationalLike = 1):
        self.x0 = as_fraction(x0)
        self.increment = as_fraction(increment)
        self.nonnegative = self.x0 >= 0 and self.increment >= 0

    def initial_state(self, count):
        return np.full((count, 1), float(self.x0))

    def step(self, state, u, n):
        return state + float(self.increment)

    def cond_mean(self, state, n):
        return state[:, 0] + float(self.increment)

    def sup_bounds(self, N):
        return [abs(self.x0) + n * abs(self.increment) for n in range(N + 1)]

    def describe(self):
        return {"name": self.name, "x0": str(self.x0), "increment": str(self.increment)}


def constant_process(c: RationalLike) -> Drift:
    return Drift(c, 0)


@dataclass(frozen=True, eq=False)
class ConditionalMeanTrace:
    """values[p, n] = E[X_{n+1} | F_n] on path p; eta/chi emitted in lockstep when present."""

    values: np.ndarray
    eta: np.ndarray | None = None
    chi: np.ndarray | None = None

    def __post_init__(self) -> None:
        for name in ("values", "eta", "chi"):
            array = getattr(self, name)
            if array is None:
                continue
            array = np.array(array, dtype=float, copy=True)
            if not np.all(np.isfinite(array)):
                raise ValueError(f"trace field {name} has non-finite entries")
            array.flags.writeable = False
            object.__setattr__(self, name, array)


def _simulate_block(gen: ProcessGenerator, start: int, stop: int, N: int,
                    src: RandomSource) -> tuple[np.ndarray, ...]:
    count = stop - start
    draws = gen.draws_per_step
    noise = src.uniforms(start, stop, (N, draws)) if draws else np.zeros((count, N, 0))
    values = np.empty((count, N + 1))
    means = np.empty((count, N))
    etas = chis = None
    state = gen.initial_state(count)
    values[:, 0] = gen.value(state)
    for n in range(N):
        means[:, n] = gen.cond_mean(state, n)
        eta, chi = gen.eta(state, n), gen.chi(state, n)
        if eta is not None:
            etas = np.empty((count, N)) if etas is None else etas
            etas[:, n] = eta
        if chi is not None:
            chis = np.empty((count, N)) if chis is None else chis
            chis[:, n] = chi
        state = gen.step(state, noise[:, n, :], n)
        values[:, n + 1] = gen.value(state)
        bad = ~np.isfinite(values[:, n + 1]) | ~np.isfinite(means[:, n])
        if bad.any():
            path = start + int(np.argmax(bad))
            raise SimulationError(f"{gen.name}: non-finite value on path {path} at step {n + 1}")
        if gen.nonnegative and np.any(values[:, n + 1] < 0):
            path = start + int(np.argmax(values[:, n + 1] < 0))
            raise SimulationError(f"{gen.name}: negative value on path {path} at step {n + 1}")
    return values, means, etas, chis


def simulate(gen: ProcessGenerator, M: int, N: int, src: RandomSource, *,
             block: int = DEFAULT_BLOCK, workers: int = 1) -> tuple[PathEnsemble, ConditionalMeanTrace]:
    """M paths of length N+1 with the exact conditional-mean trace.

    Results depend only on (src.master_seed, gen, M, N): each path owns its
    substream, so ``block`` and ``workers`` only affect speed.
    """
    if M < 1 or N < 1:
        raise ValueError("need M >= 1 and N >= 1")
    spans = [(s, min(s + block, M)) for s in range(0, M, block)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda span: _simulate_block(gen, *span, N, src), spans))
    else:
        parts = [_simulate_block(gen, s, t, N, src) for s, t in spans]
    values = np.concatenate([p[0] for p in parts])
    means = np.concatenate([p[1] for p in parts])
    etas = np.concatenate([p[2] for p in parts]) if parts[0][2] is not None else None
    chis = np.concatenate([p[3] for p in parts]) if parts[0][3] is not None else None
    ens = PathEnsemble(values, nonnegative=gen.nonnegative)
    return ens, ConditionalMeanTrace(means, etas, chis)


def _check_trace(ens: PathEnsemble, trace: ConditionalMeanTrace, N: int) -> None:
    if trace.values.shape != (ens.path_count, ens.horizon):
        raise ContractError(f"trace shape {trace.values.shape} does not match ensemble "
                            f"({ens.path_count}, {ens.horizon})")
    if not 0 <= N <= ens.horizon:
        raise ContractError(f"N = {N} outside horizon {ens.horizon}")


def verify_finitary_supermartingale(ens: PathEnsemble, trace: ConditionalMeanTrace,
                                    lam: RationalLike, eps: RationalLike, N: int, *,
                                    rule: str = "point") -> list[EmpiricalVerdict]:
    """Per n < N, the frequency of E[X_{n+1}|F_n] > X_n + eps against lambda."""
    return _verify_descent(ens, trace, None, None, lam, eps, N, rule, "supermartingale")


def verify_rs_process(ens: PathEnsemble, trace: ConditionalMeanTrace, eta: np.ndarray | None,
                      chi: np.ndarray | None, lam: RationalLike, eps: RationalLike, N: int, *,
                      rule: str = "point") -> list[EmpiricalVerdict]:
    """Per n < N, the frequency of E[X_{n+1}|F_n] > (1+chi_n) X_n + eta_n + eps against lambda."""
    shape = (ens.path_count, ens.horizon)
    for name, array in (("eta", eta), ("chi", chi)):
        if array is not None:
            array = np.asarray(array)
            if array.shape != shape:
                raise ContractError(f"{name} has shape {array.shape}, expected {shape}")
            if np.any(array < 0):
                raise ValueError(f"{name} has negative entries")
    return _verify_descent(ens, trace, eta, chi, lam, eps, N, rule, "rs")


def _verify_descent(ens, trace, eta, chi, lam, eps, N, rule, kind) -> list[EmpiricalVerdict]:
    _check_trace(ens, trace, N)
    lam = as_fraction(lam)
    eps_f = float(as_fraction(eps))
    x = ens.values
    verdicts = []
    for n in range(N):
        target = x[:, n]
        if chi is not None:
            target = (1 + chi[:, n]) * target
        if eta is not None:
            target = target + eta[:, n]
        violations = int(np.count_nonzero(trace.values[:, n] > target + eps_f))
        verdicts.append(probability_verdict(f"{kind}[n={n}]", violations, ens.path_count, lam,
                                            rule=rule))
    return verdicts


@dataclass(frozen=True, eq=False)
class DoobDecomposition:
    martingale_part: PathEnsemble
    predictable_part: PathEnsemble


def doob_decompose(ens: PathEnsemble, trace: ConditionalMeanTrace) -> DoobDecomposition:
    _check_trace(ens, trace, ens.horizon)
    x = ens.values
    z = np.zeros_like(x)
    z[:, 1:] = np.cumsum(trace.values - x[:, :-1], axis=1)
    return DoobDecomposition(PathEnsemble(x - z), PathEnsemble(z))


class PredictableProcess:
    """C_n with 0 <= C_n <= bound, where C_n may only read X_0..X_{n-1}.

    Explicit matrices must declare how far back their entries look
    (``declared_lag``); a lag below 1 means C_n reads X_n and is rejected.
    """

    def __init__(self, values: np.ndarray, bound: RationalLike, declared_lag: int = 1):
        if declared_lag < 1:
            raise ContractError("predictable processes must lag the path by at least one step")
        values = np.array(values, dtype=float, copy=True)
        self.bound = as_fraction(bound)
        if values.ndim != 2:
            raise ContractError("predictable process must be a (M, N+1) matrix")
        if np.any(values < 0) or np.any(values > float(self.bound)):
            raise ValueError("predictable process leaves [0, bound]")
        values.flags.writeable = False
        self.values = values

    @classmethod
    def from_rule(cls, ens: PathEnsemble, rule: Callable[[np.ndarray, int], np.ndarray],
                  bound: RationalLike) -> PredictableProcess:
        """C_n = rule(X[:, :n], n); the rule only ever sees the strict prefix."""
        values = np.empty((ens.path_count, ens.horizon + 1))
        for n in range(ens.horizon + 1):
            values[:, n] = rule(ens.values[:, :n], n)
        return cls(values, bound)

    @classmethod
    def constant(cls, ens: PathEnsemble, c: RationalLike) -> PredictableProcess:
        c = as_fraction(c)
        return cls(np.full((ens.path_count, ens.horizon + 1), float(c)), max(c, Fraction(0)))


def downcrossing_strategy(ens: PathEnsemble, alpha: float, beta: float) -> PredictableProcess:
    """The 0/1 process that is "on" from a visit at or above beta until the next visit at or below alpha."""
    x = ens.values
    c = np.empty_like(x)
    c[:, 0] = x[:, 0] >= beta
    for n in range(ens.horizon):
        on = c[:, n] == 1
        c[:, n + 1] = np.where(on, x[:, n] > alpha, x[:, n] >= beta)
    return PredictableProcess(c, 1)


def stochastic_integral(C: PredictableProcess, ens: PathEnsemble) -> PathEnsemble:
    """(C . X)_n = sum_{i=1}^n C_i (X_i - X_{i-1})."""
    if C.values.shape != ens.values.shape:
        raise ContractError("predictable process and ensemble shapes differ")
    out = np.zeros_like(ens.values)
    out[:, 1:] = np.cumsum(C.values[:, 1:] * np.diff(ens.values, axis=1), axis=1)
    return PathEnsemble(out)


def integral_cond_mean(C: PredictableProcess, ens: PathEnsemble,
                       trace: ConditionalMeanTrace) -> ConditionalMeanTrace:
    """E[(C.X)_{n+1} | F_n] = (C.X)_n + C_{n+1} (E[X_{n+1}|F_n] - X_n)."""
    _check_trace(ens, trace, ens.horizon)
    integral = stochastic_integral(C, ens).values
    x = ens.values
    return ConditionalMeanTrace(integral[:, :-1] + C.values[:, 1:] * (trace.values - x[:, :-1]))


@dataclass(frozen=True)
class StoppingRule:
    """decide(prefix, n) sees X_0..X_n and says whether to stop at n; tau <= cap."""

    decide: Callable[[np.ndarray, int], np.ndarray]
    cap: int


def never_stop(cap: int) -> StoppingRule:
    return StoppingRule(lambda prefix, n: np.zeros(prefix.shape[0], dtype=bool), cap)


def stop_at(time: int) -> StoppingRule:
    return StoppingRule(lambda prefix, n: np.full(prefix.shape[0], n >= time), time)


def first_at_or_above(level: float, cap: int, after: int = 0) -> StoppingRule:
    return StoppingRule(lambda prefix, n: (prefix[:, n] >= level) & (n >= after), cap)


def first_at_or_below(level: float, cap: int, after: int = 0) -> StoppingRule:
    return StoppingRule(lambda prefix, n: (prefix[:, n] <= level) & (n >= after), cap)


def stopping_times(ens: PathEnsemble, rule: StoppingRule) -> np.ndarray:
    if not 0 <= rule.cap <= ens.horizon:
        raise ContractError(f"stopping cap {rule.cap} outside horizon {ens.horizon}")
    tau = np.full(ens.path_count, rule.cap, dtype=np.int64)
    running = np.ones(ens.path_count, dtype=bool)
    for n in range(rule.cap):
        hit = running & np.asarray(rule.decide(ens.values[:, : n + 1], n), dtype=bool)
        tau[hit] = n
        running &= ~hit
        if not running.any():
            break
    return tau


def stop_process(ens: PathEnsemble, rule: StoppingRule) -> PathEnsemble:
    tau = stopping_times(ens, rule)
    index = np.minimum(np.arange(ens.horizon + 1)[None, :], tau[:, None])
    return PathEnsemble(np.take_along_axis(ens.values, index, axis=1), nonnegative=ens.nonnegative)


def stopped_cond_mean(ens: PathEnsemble, trace: ConditionalMeanTrace,
                      rule: StoppingRule) -> ConditionalMeanTrace:
    """E[X_{(n+1) ^ tau} | F_n]: the frozen value once stopped, the original mean before."""
    _check_trace(ens, trace, ens.horizon)
    tau = stopping_times(ens, rule)
    stopped = stop_process(ens, rule).values
    n = np.arange(ens.horizon)[None, :]
    return ConditionalMeanTrace(np.where(tau[:, None] <= n, stopped[:, :-1], trace.values))


def cond_mean_check(ens: PathEnsemble, trace: ConditionalMeanTrace,
                    se_limit: float = 5.0) -> list[tuple[int, float, float, bool]]:
    """Per n: mean of X_{n+1} - E[X_{n+1}|F_n], its standard error, and |mean| <= se_limit * SE."""
    _check_trace(ens, trace, ens.horizon)
    residual = ens.values[:, 1:] - trace.values
    rows = []
    for n in range(ens.horizon):
        mean = float(residual[:, n].mean())
        se = float(residual[:, n].std(ddof=1) / np.sqrt(ens.path_count)) if ens.path_count > 1 else 0.0
        ok = abs(mean) <= se_limit * se if se > 0 else abs(mean) <= 1e-12
        rows.append((n, mean, se, bool(ok)))
    return rows


GENERATORS: dict[str, Callable[..., ProcessGenerator]] = {
    "polya": PolyaUrn,
    "multiplicative": Multiplicative,
    "rs_canonical": RobbinsSiegmundCanonical,
    "bounded_walk": BoundedWalk,
    "drift": Drift,
    "constant": constant_process,
}


def canonical_fixtures() -> Sequence[ProcessGenerator]:
    return (PolyaUrn(1, 1), Multiplicative(Fraction(9, 10), 1), RobbinsSiegmundCanonical(),
            BoundedWalk(5, 10, 1))
