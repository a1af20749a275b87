"""Theorem drivers keyed by stable theorem ids.

Each driver simulates, checks the theorem's premise grade empirically,
computes the bound exactly and checks domination. Verdicts carry the premise
status, and a failed premise turns the dependent verdicts into failures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .._exact import as_fraction
from ..bounds import (RSParams, StepFunction, descent_premise, downcrossing_bound,
                      downcrossing_premise, martingale_fluctuation_bound, rs_triple,
                      uniform_horizon, uniform_horizon_premise, ville_bound, ville_premise)
from ..counters import downcrossings_batch, fluctuations_batch
from ..ensemble import EmpiricalVerdict, PathEnsemble, RandomSource, mean_and_se, mean_verdict, probability_verdict
from ..hadamard_km import (KMConfig, KMRun, boundedness_check, branch_projection_family,
                           km_moduli, liminf_check, liminf_simple_check, projection_family,
                           run_skm, verify_fejer_step)
from ..metastability import empirical_metastability
from ..moduli import theta_constant
from ..processes import (GENERATORS, ConditionalMeanTrace, PredictableProcess, ProcessGenerator,
                         doob_decompose, downcrossing_strategy, first_at_or_above,
                         geometric_schedule, integral_cond_mean, simulate, stochastic_integral,
                         stop_process, stopped_cond_mean, verify_finitary_supermartingale,
                         verify_rs_process)
from .config import ConfigError, ExperimentConfig

IDENTITY_TOLERANCE = 1e-12


@dataclass
class DriverResult:
    verdicts: list[EmpiricalVerdict] = field(default_factory=list)
    bounds: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def exact_verdict(label: str, value: float, bound: float, passed: bool, rule: str,
                  trials: int, premise: str | None = None, **extra) -> EmpiricalVerdict:
    return EmpiricalVerdict(label, float(value), float(value), float(value), bound, bool(passed),
                            rule, trials, premise, extra)


def _schedule(text: str | None):
    if text is None:
        return None
    parts = text.split()
    if parts[0] == "zero":
        return lambda n: Fraction(0)
    if parts[0] == "geometric" and len(parts) in (2, 3):
        return geometric_schedule(*parts[1:])
    raise ConfigError(f"bad schedule {text!r}, expected 'zero' or 'geometric ratio [scale]'")


def make_generator(config: ExperimentConfig) -> ProcessGenerator:
    params = dict(config.process)
    name = params.pop("name", None)
    if name not in GENERATORS:
        raise ConfigError(f"[process] name must be one of {', '.join(sorted(GENERATORS))}")
    kwargs: dict = {}
    for key, raw in params.items():
        if key in ("chi", "eta"):
            kwargs[key] = _schedule(raw)
        elif key == "noisy":
            kwargs[key] = raw.strip().lower() in ("1", "true", "yes")
        elif key in ("red", "blue"):
            kwargs[key] = int(raw)
        else:
            kwargs[key] = as_fraction(raw)
    try:
        return GENERATORS[name](**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for process {name}: {exc}") from exc


def _simulate(config: ExperimentConfig, N: int | None = None):
    gen = make_generator(config)
    ens, trace = simulate(gen, config.M, N or config.N, RandomSource(config.master_seed))
    return gen, ens, trace


def premise_gate(ens: PathEnsemble, trace: ConditionalMeanTrace, lam, eps, N: int,
                 label: str, eta=None, chi=None) -> tuple[str, EmpiricalVerdict]:
    if eta is None and chi is None:
        checks = verify_finitary_supermartingale(ens, trace, lam, eps, N)
    else:
        checks = verify_rs_process(ens, trace, eta, chi, lam, eps, N)
    worst = max(checks, key=lambda v: v.estimate)
    passed = all(v.passed for v in checks)
    verdict = exact_verdict(f"{label}-premise", worst.estimate, as_fraction(lam), passed,
                            "point", ens.path_count, None, eps=as_fraction(eps), steps=N)
    return ("verified" if passed else "failed"), verdict


def _initial_mean(ens: PathEnsemble, config: ExperimentConfig) -> Fraction:
    if "mean0" in config.params:
        return config.rational("mean0")
    first = ens.values[:, 0]
    if not np.all(first == first[0]):
        raise ConfigError("X_0 is random: give [params] mean0")
    return as_fraction(float(first[0]))


def drive_doob(config: ExperimentConfig) -> DriverResult:
    lam = config.rational("lambda", "1/2")
    eps = config.rational("eps", "1/10")
    se_limit = float(config.rational("se_limit", 5))
    _, ens, trace = _simulate(config)
    dec = doob_decompose(ens, trace)
    x, y, z = ens.values, dec.martingale_part.values, dec.predictable_part.values
    scale = np.maximum(1.0, np.abs(x))
    residual = float(np.max(np.abs(x - y - z) / scale))
    out = DriverResult()
    out.verdicts.append(exact_verdict("doob-identity", residual, IDENTITY_TOLERANCE,
                                      residual <= IDENTITY_TOLERANCE, "max-relative", ens.path_count))
    steps = np.diff(y, axis=1)
    worst = 0.0
    for n in range(ens.horizon):
        for mask in (None, x[:, n] > np.median(x[:, n])):
            sample = steps[:, n] if mask is None else steps[mask, n]
            if sample.size < 2:
                continue
            mean, se = mean_and_se(sample)
            score = abs(mean) / se if se > 0 else (0.0 if abs(mean) <= IDENTITY_TOLERANCE else np.inf)
            worst = max(worst, score)
    out.verdicts.append(exact_verdict("doob-martingale", worst, se_limit, worst <= se_limit,
                                      "max |mean|/se", ens.path_count))
    status, premise = premise_gate(ens, trace, lam, eps, ens.horizon, "doob")
    out.verdicts.append(premise)
    eps_f = float(eps)
    rising = max(int(np.count_nonzero(z[:, n + 1] > z[:, n] + eps_f)) for n in range(ens.horizon))
    out.verdicts.append(probability_verdict("doob-nonincreasing", rising, ens.path_count, lam)
                        .with_premise(status))
    out.extra["predictable_part_max_abs"] = float(np.abs(z).max())
    return out


def drive_descent(config: ExperimentConfig) -> DriverResult:
    eps = config.rational("eps", "1/10")
    gen, ens, trace = _simulate(config)
    N = ens.horizon
    lam_star, eps_star = descent_premise(gen.moduli(N), N, eps)
    status, premise = premise_gate(ens, trace, lam_star, eps_star, N, "descent")
    x = ens.values
    worst = -np.inf
    for n in range(N):
        diffs = x[:, n + 1:] - x[:, n:n + 1]
        means = diffs.mean(axis=0)
        ses = diffs.std(axis=0, ddof=1) / np.sqrt(ens.path_count) if ens.path_count > 1 else 0.0
        worst = max(worst, float(np.max(means + 3 * ses)))
    out = DriverResult(bounds={"lambda_star": lam_star, "eps_star": eps_star, "eps": eps})
    out.verdicts.append(premise)
    out.verdicts.append(exact_verdict("descent", worst, eps, worst <= float(eps), "paired mean+3se",
                                      ens.path_count).with_premise(status))
    return out


def drive_dcrs(config: ExperimentConfig) -> DriverResult:
    alpha = config.rational("alpha", "1/4")
    beta = config.rational("beta", "3/4")
    eps = config.rational("eps", "1/10")
    gen, ens, trace = _simulate(config)
    N = ens.horizon
    K = config.rational("K", _initial_mean(ens, config))
    tail = config.rational("tail_mean", 0 if gen.nonnegative else None)
    lam_star, eps_star = downcrossing_premise(gen.moduli(N), N, eps, beta - alpha)
    status, premise = premise_gate(ens, trace, lam_star, eps_star, N, "dcrs")
    bound = downcrossing_bound(K, alpha, beta, tail, eps)
    counts = downcrossings_batch(ens.values, float(alpha), float(beta), N + 1)
    out = DriverResult(bounds={"bound": bound, "lambda_star": lam_star, "eps_star": eps_star, "K": K})
    out.verdicts.append(premise)
    verdict = mean_verdict("dcrs-ineq", counts, bound)
    verdict.extra["max_count"] = int(counts.max())
    out.verdicts.append(verdict.with_premise(status))
    return out


def drive_stopped(config: ExperimentConfig) -> DriverResult:
    lam = config.rational("lambda", "1/2")
    eps = config.rational("eps", "1/100")
    _, ens, trace = _simulate(config)
    N = ens.horizon
    level = float(config.rational("level", float(np.median(ens.values[:, 0])) + 0.25))
    rule = first_at_or_above(level, N, after=config.integer("after", 1))
    status, premise = premise_gate(ens, trace, lam, eps, N, "stopped")
    stopped = stop_process(ens, rule)
    checks = verify_finitary_supermartingale(stopped, stopped_cond_mean(ens, trace, rule), lam, eps, N)
    worst = max(v.estimate for v in checks)
    out = DriverResult(bounds={"lambda": lam, "eps": eps, "level": level})
    out.verdicts.append(premise)
    out.verdicts.append(exact_verdict("stopped", worst, lam, all(v.passed for v in checks), "point",
                                      ens.path_count).with_premise(status))
    return out


def drive_integral(config: ExperimentConfig) -> DriverResult:
    lam = config.rational("lambda", "1/2")
    eps = config.rational("eps", "1/100")
    _, ens, trace = _simulate(config)
    N = ens.horizon
    if "constant" in config.params:
        C = PredictableProcess.constant(ens, config.rational("constant"))
    else:
        alpha = config.rational("alpha", "1/4")
        beta = config.rational("beta", "3/4")
        C = downcrossing_strategy(ens, float(alpha), float(beta))
    K = C.bound if C.bound > 0 else Fraction(1)
    status, premise = premise_gate(ens, trace, lam, eps / K, N, "integral")
    integral = stochastic_integral(C, ens)
    checks = verify_finitary_supermartingale(integral, integral_cond_mean(C, ens, trace), lam, eps, N)
    worst = max(v.estimate for v in checks)
    out = DriverResult(bounds={"lambda": lam, "eps": eps, "K_C": K})
    out.verdicts.append(premise)
    out.verdicts.append(exact_verdict("integral", worst, lam, all(v.passed for v in checks), "point",
                                      ens.path_count).with_premise(status))
    return out


def drive_ville(config: ExperimentConfig) -> DriverResult:
    eps = config.rational("eps", "1/10")
    alphas = config.rationals("alpha", ["3/2", "2"])
    gen, ens, trace = _simulate(config)
    N = ens.horizon
    lam_star, eps_star = ville_premise(gen.moduli(N), N, eps)
    status, premise = premise_gate(ens, trace, lam_star, eps_star, N, "ville")
    mean0 = _initial_mean(ens, config)
    peak = ens.values.max(axis=1)
    out = DriverResult(bounds={"lambda_star": lam_star, "eps_star": eps_star, "mean0": mean0})
    out.verdicts.append(premise)
    for alpha in alphas:
        bound = ville_bound(mean0, alpha, eps)
        out.bounds[f"bound[alpha={alpha}]"] = bound
        hits = int(np.count_nonzero(peak >= float(alpha)))
        verdict = probability_verdict(f"ville[alpha={alpha}]", hits, ens.path_count, bound,
                                      rule="wilson", strict=False)
        out.verdicts.append(verdict.with_premise(status))
    return out


def drive_learnable(config: ExperimentConfig) -> DriverResult:
    K = config.rational("K", 1)
    lam = config.rational("lambda", 1)
    eps = config.rational("eps", 1)
    width = config.integer("width", 1)
    gen = make_generator(config)
    n_k, lam_star, eps_star = uniform_horizon_premise(gen.moduli(uniform_horizon(K, lam, eps)), K, lam, eps)
    horizon = min(config.N, n_k)
    _, ens, trace = _simulate(config, horizon)
    status, premise = premise_gate(ens, trace, lam_star, eps_star, horizon, "learnable")
    x = ens.values
    best = None
    for start in range(0, horizon - width + 1, width):
        window = x[:, start: start + width + 1]
        bad = int(np.count_nonzero(window.max(axis=1) - window.min(axis=1) >= float(eps)))
        if best is None or bad < best[1]:
            best = (start, bad)
    out = DriverResult(bounds={"N_K": n_k, "lambda_star": lam_star, "eps_star": eps_star,
                               "checked_through": horizon})
    out.verdicts.append(premise)
    verdict = probability_verdict("learnable-mct", best[1], ens.path_count, lam)
    verdict.extra.update({"interval_start": best[0], "width": width})
    out.verdicts.append(verdict.with_premise(status))
    return out


def _fluctuation_verdicts(ens: PathEnsemble, eps: Fraction, bound: int, lam: Fraction,
                          label: str, status: str) -> list[EmpiricalVerdict]:
    J = fluctuations_batch(ens.values, float(eps), ens.horizon + 1)
    hits = int(np.count_nonzero(J >= bound))
    main = probability_verdict(label, hits, ens.path_count, lam).with_premise(status)
    main.extra.update({"max_J": int(J.max()), "mean_J": float(J.mean())})
    q = float(np.percentile(J, 99.9))
    tail = exact_verdict(f"{label}-p99.9", q, bound, q <= bound, "percentile", ens.path_count)
    return [main, tail.with_premise(status)]


def drive_mart_fluct(config: ExperimentConfig) -> DriverResult:
    lam = config.rational("lambda", "1/2")
    eps = config.rational("eps", "1/2")
    gen, ens, trace = _simulate(config)
    N = ens.horizon
    K = config.rational("K", _initial_mean(ens, config) + 1)
    result = martingale_fluctuation_bound(K, lam, eps, N, gen.moduli(N))
    status, premise = premise_gate(ens, trace, result.premise_lambda, result.premise_eps, N,
                                   "mart-fluct")
    out = DriverResult(bounds={"bound": result.bound, "lambda_star": result.premise_lambda,
                               "eps_star": result.premise_eps, "lambda0": result.lambda0,
                               "eps0": result.eps0, "K": K})
    out.verdicts.append(premise)
    out.verdicts.extend(_fluctuation_verdicts(ens, eps, result.bound, lam, "mart-fluct", status))
    return out


def _witness_hits(gen: ProcessGenerator, trace: ConditionalMeanTrace, N: int,
                  f_value: int, h_value: int) -> tuple[int, int]:
    """Paths whose horizon sum of eta reaches f, and whose product of 1+chi reaches h.

    Deterministic schedules are summed exactly; float sums of 2^-n style
    schedules would otherwise round up onto the threshold.
    """
    M = trace.values.shape[0]
    if hasattr(gen, "eta_schedule") and hasattr(gen, "chi_schedule"):
        eta_total = sum(as_fraction(gen.eta_schedule(n)) for n in range(N))
        chi_product = Fraction(1)
        for n in range(N):
            chi_product *= 1 + as_fraction(gen.chi_schedule(n))
        return (M if eta_total >= f_value else 0), (M if chi_product >= h_value else 0)
    eta_total = trace.eta.sum(axis=1)
    chi_product = np.prod(1 + trace.chi, axis=1)
    return int(np.count_nonzero(eta_total >= f_value)), int(np.count_nonzero(chi_product >= h_value))


def drive_rs_fluct(config: ExperimentConfig) -> DriverResult:
    lam = config.rational("lambda", "1/2")
    eps = config.rational("eps", "1/2")
    f_value = config.integer("f", 3)
    h_value = config.integer("h", 5)
    gen, ens, trace = _simulate(config)
    N = ens.horizon
    if trace.eta is None or trace.chi is None:
        raise ConfigError("rs-fluct needs a process that emits eta and chi")
    K = config.rational("K", _initial_mean(ens, config) + 1)
    params = RSParams(StepFunction.constant(f_value), StepFunction.constant(h_value), K, gen.moduli(N))
    triple = rs_triple(params, lam, eps, N)
    out = DriverResult(bounds={"Z": triple.Z, "e": triple.e, "p": triple.p, "eps0": triple.eps0,
                               "lambda0": triple.lambda0, "K": K, "f": f_value, "h": h_value})
    eta_hits, chi_hits = _witness_hits(gen, trace, N, f_value, h_value)
    witness_f = probability_verdict("rs-witness-f", eta_hits, ens.path_count, lam)
    witness_h = probability_verdict("rs-witness-h", chi_hits, ens.path_count, lam)
    status, premise = premise_gate(ens, trace, triple.p, triple.e, N, "rs-fluct",
                                   eta=trace.eta, chi=trace.chi)
    if not (witness_f.passed and witness_h.passed):
        status = "failed"
    out.verdicts.extend([witness_f, witness_h, premise])
    out.verdicts.extend(_fluctuation_verdicts(ens, eps, triple.Z, lam, "rs-fluct", status))
    return out


# Krasnoselskii-Mann drivers


@dataclass
class KMSetup:
    config: KMConfig
    run: KMRun
    moduli: object
    anchors: list


def km_setup(config: ExperimentConfig) -> KMSetup:
    km = config.km
    family_name = km.get("family", "projections")
    if family_name == "projections":
        dim = config.integer("dim", 2, "km")
        family = projection_family(dim, config.rational("radius", 2, "km"))
        origin = np.zeros(dim)
    elif family_name == "branch_projections":
        family = branch_projection_family(config.integer("branches", 3, "km"))
        origin = np.zeros(2)
    else:
        raise ConfigError("[km] family must be projections or branch_projections")
    x0 = config.point("x0", ["1"] * origin.size)
    step = config.rational("step", "1/2", "km")
    c = config.rational("c", "3/2", "km")
    p = config.point("fixed_point", [0] * origin.size)
    try:
        km_config = KMConfig.constant_steps(x0, step, family, p, c, theta_constant(step))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    anchors = config.points("anchors") or [origin]
    run = run_skm(km_config, config.M, config.N, RandomSource(config.master_seed), anchors)
    return KMSetup(km_config, run, km_moduli(c, km_config.theta), anchors)


def _km_bounded(setup: KMSetup) -> EmpiricalVerdict:
    ok, worst = boundedness_check(setup.run, setup.config.fixed_point, setup.config.c)
    return exact_verdict("km-bounded", worst, setup.config.c, ok, "exact-max",
                         setup.run.ensemble.path_count)


def _km_fejer(setup: KMSetup, config: ExperimentConfig) -> list[EmpiricalVerdict]:
    out = []
    rs = [int(r) for r in config.rationals("r", ["0", "1", "3", "7", "15"])]
    n = setup.run.ensemble.horizon - 1
    for z in setup.anchors:
        for r in rs:
            per_m = verify_fejer_step(setup.run, setup.config.family, z, r, n, setup.config.c)
            worst = max(per_m, key=lambda v: v.estimate)
            passed = all(v.passed for v in per_m)
            out.append(exact_verdict(f"km-fejer[z={list(map(float, z))}, r={r}]", worst.estimate, 0,
                                     passed, "zero-violations", setup.run.ensemble.path_count,
                                     worst.premise, r=r))
    return out


def _km_liminf(setup: KMSetup, config: ExperimentConfig) -> EmpiricalVerdict:
    return liminf_check(setup.run, setup.config.family, setup.moduli,
                        config.rational("lambda", "1/2"), config.integer("k", 3),
                        config.integer("start", 10))


def _km_liminf_simple(setup: KMSetup, config: ExperimentConfig) -> EmpiricalVerdict:
    info = liminf_simple_check(setup.run, setup.config.family, setup.moduli,
                               config.rational("mu", "1/100"), config.integer("start", 10))
    return exact_verdict("km-liminf-simple", info["min_mean"], config.rational("mu", "1/100"),
                         info["status"] == "pass", "exists-n", setup.run.ensemble.path_count,
                         None if info["status"] != "inconclusive" else "inconclusive",
                         **{k: v for k, v in info.items() if k != "min_mean"})


def _km_metastability(setup: KMSetup, config: ExperimentConfig) -> EmpiricalVerdict:
    g = config.g_function("g", "const 5")
    return empirical_metastability(setup.run.ensemble, config.integer("n_star", 50),
                                   config.integer("k", 3), g, config.rational("lambda", "1/100"))


def _single_km(check: Callable[[KMSetup, ExperimentConfig], object]):
    def driver(config: ExperimentConfig) -> DriverResult:
        setup = km_setup(config)
        result = check(setup, config)
        verdicts = result if isinstance(result, list) else [result]
        return DriverResult(verdicts=verdicts, bounds=km_bounds(setup, config))
    return driver


def km_bounds(setup: KMSetup, config: ExperimentConfig) -> dict:
    m = setup.moduli
    k = config.integer("k", 3)
    lam = config.rational("lambda", "1/2")
    start = config.integer("start", 10)
    return {"c": m.c, "b0": m.b.b0, "zeta(r=7)": m.zeta(1, 7, 0), "phi": m.phi(lam, k, start),
            "psi": m.psi(config.rational("mu", "1/100"), start)}


THEOREMS: dict[str, tuple[Callable[[ExperimentConfig], DriverResult], str]] = {
    "doob-decomp": (drive_doob, "Doob decomposition identity, martingale part, nonincreasing part"),
    "descent": (drive_descent, "descent of means for finitary supermartingales"),
    "dcrs-ineq": (drive_dcrs, "downcrossing inequality"),
    "stopped": (drive_stopped, "stopped supermartingales keep their grade"),
    "integral": (drive_integral, "stochastic integrals against bounded predictable processes"),
    "ville": (drive_ville, "Ville maximal inequality"),
    "learnable-mct": (drive_learnable, "learnable rate of uniform convergence"),
    "mart-fluct": (drive_mart_fluct, "fluctuation bound for nonnegative supermartingales"),
    "rs-fluct": (drive_rs_fluct, "fluctuation bound for Robbins-Siegmund processes"),
    "km-fejer": (_single_km(_km_fejer), "uniform quasi-Fejer step of the KM iteration"),
    "km-bounded": (_single_km(lambda s, c: _km_bounded(s)), "pathwise boundedness d(x_n, p) <= c"),
    "km-liminf-simple": (_single_km(_km_liminf_simple), "simple liminf modulus of the KM iteration"),
    "km-liminf": (_single_km(_km_liminf), "stochastic liminf modulus of the KM iteration"),
    "metastability": (_single_km(_km_metastability), "empirical metastability of KM paths"),
}


def run_theorem(theorem: str, config: ExperimentConfig) -> DriverResult:
    if theorem not in THEOREMS:
        raise ConfigError(f"unknown theorem id {theorem!r}; known: {', '.join(THEOREMS)}")
    return THEOREMS[theorem][0](config)
