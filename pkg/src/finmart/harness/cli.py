"""Command-line entry point.

Exit codes: 0 when every verdict passes, 1 when any fails, 2 for
configuration errors and for an evaluation that hit its budget.
"""

from __future__ import annotations

import argparse
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from .._exact import as_fraction
from ..bounds import (AbsContModulus, ModulusFamily, RSParams, StepFunction, downcrossing_bound,
                      martingale_fluctuation_bound, rs_triple, rs_Z, uniform_horizon, ville_bound)
from ..ensemble import RandomSource, mean_and_se
from ..hadamard_km import displacement_series, km_bundle, km_moduli, verify_fejer_step
from ..metastability import BudgetExceeded, EvaluationBudget, delta
from ..moduli import (LiminfModulus, gamma_euclidean_ball, gamma_finite, km_closedness,
                      theta_constant)
from ..processes import simulate
from . import drivers
from .config import ConfigError, ExperimentConfig, load_config
from .report import build_report, dumps, write_csv, write_report

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _theorem_help() -> str:
    width = max(len(t) for t in drivers.THEOREMS)
    rows = [f"  {tid.ljust(width)}  {desc}" for tid, (_, desc) in drivers.THEOREMS.items()]
    return "theorem ids:\n" + "\n".join(rows)


# bound calculators: name -> (parameter names, function)

def _bound_nk(K, lam, eps):
    return {"N_K": uniform_horizon(K, lam, eps)}


def _bound_mart_fluct(K, lam, eps, N):
    res = martingale_fluctuation_bound(K, lam, eps, int(N), AbsContModulus.identity())
    return {"bound": res.bound, "lambda_star": res.premise_lambda, "eps_star": res.premise_eps,
            "lambda0": res.lambda0, "eps0": res.eps0, "moduli": "identity"}


def _rs_params(f, h, K):
    return RSParams(StepFunction.constant(int(f)), StepFunction.constant(int(h)), K,
                    ModulusFamily.uniform(AbsContModulus.identity()))


def _bound_rs_z(f, h, K, lam, eps):
    return {"Z": rs_Z(_rs_params(f, h, K), lam, eps)}


def _bound_rs_triple(f, h, K, lam, eps, N):
    t = rs_triple(_rs_params(f, h, K), lam, eps, int(N))
    return {"Z": t.Z, "e": t.e, "p": t.p, "eps0": t.eps0, "lambda0": t.lambda0, "alpha": t.alpha,
            "b": t.b, "moduli": "identity", **t.intermediates}


def _bound_zeta(c, r):
    return {"zeta": km_moduli(c, theta_constant(Fraction(1, 2))).zeta(1, int(r), 0)}


def _bound_phi(c, step, lam, k, N):
    m = km_moduli(c, theta_constant(step))
    return {"phi": m.phi(lam, int(k), int(N)), "b0": m.b.b0}


def _bound_closedness(k):
    first, second = km_closedness(int(k))
    return {"alpha1": first, "alpha2": second}


def _bound_theta(step, N, b):
    return {"theta": theta_constant(step)(int(N), b)}


def _bound_gamma_ball(dim, radius, k):
    return {"gamma": gamma_euclidean_ball(int(dim), radius)(int(k))}


def _bound_ville(mean0, alpha, eps):
    return {"bound": ville_bound(mean0, alpha, eps)}


def _bound_dcrs(K, alpha, beta, tail, eps):
    return {"bound": downcrossing_bound(K, alpha, beta, tail, eps)}


BOUNDS = {
    "N_K": (("K", "lambda", "eps"), _bound_nk),
    "mart-fluct": (("K", "lambda", "eps", "N"), _bound_mart_fluct),
    "rs-Z": (("f", "h", "K", "lambda", "eps"), _bound_rs_z),
    "rs-triple": (("f", "h", "K", "lambda", "eps", "N"), _bound_rs_triple),
    "zeta": (("c", "r"), _bound_zeta),
    "phi": (("c", "step", "lambda", "k", "N"), _bound_phi),
    "km-closedness": (("k",), _bound_closedness),
    "theta": (("step", "N", "b"), _bound_theta),
    "gamma-ball": (("dim", "radius", "k"), _bound_gamma_ball),
    "ville": (("mean0", "alpha", "eps"), _bound_ville),
    "dcrs": (("K", "alpha", "beta", "tail", "eps"), _bound_dcrs),
}


def parse_bound_args(name: str, raw: list[str]) -> dict:
    if name not in BOUNDS:
        raise ConfigError(f"unknown bound {name!r}; known: {', '.join(BOUNDS)}")
    names, _ = BOUNDS[name]
    values: dict = {}
    positional = []
    for item in raw:
        if "=" in item:
            key, _, text = item.partition("=")
            if key not in names:
                raise ConfigError(f"bound {name} has no parameter {key!r}; expects {' '.join(names)}")
            values[key] = text
        else:
            positional.append(item)
    free = [n for n in names if n not in values]
    if len(positional) != len(free):
        raise ConfigError(f"bound {name} expects {' '.join(names)}")
    values.update(zip(free, positional))
    try:
        return {k: as_fraction(values[k]) for k in names}
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad parameter for bound {name}: {exc}") from exc


def cmd_bound(name: str, raw: list[str]) -> dict:
    params = parse_bound_args(name, raw)
    fn = BOUNDS[name][1]
    try:
        values = fn(*params.values())
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return build_report("bound", {"name": name, "params": params}, None, bounds=values)


def cmd_verify(theorem: str, config: ExperimentConfig) -> dict:
    result = drivers.run_theorem(theorem, config)
    return build_report("verify", config.echo(), config.master_seed, verdicts=result.verdicts,
                        bounds=result.bounds, extra={"theorem": theorem, "details": result.extra})


def cmd_simulate(config: ExperimentConfig) -> dict:
    gen = drivers.make_generator(config)
    ens, _ = simulate(gen, config.M, config.N, RandomSource(config.master_seed))
    stats = [mean_and_se(ens.values[:, n]) for n in range(ens.horizon + 1)]
    target = config.output.get("trajectory")
    if target:
        count = min(ens.path_count, int(config.output.get("paths", 10)))
        rows = ((p, n, ens.values[p, n]) for p in range(count) for n in range(ens.horizon + 1))
        write_csv(target, ("path", "n", "value"), rows)
    summary = {"mean": [s[0] for s in stats], "se": [s[1] for s in stats],
               "min": float(ens.values.min()), "max": float(ens.values.max())}
    return build_report("simulate", config.echo(), config.master_seed,
                        extra={"process": gen.describe(), "summary": summary})


def delta_bundle(config: ExperimentConfig):
    c = config.rational("c", 1, "km")
    step = config.rational("step", "1/2", "km")
    gamma_spec = config.km.get("gamma", "finite 1").split()
    try:
        if gamma_spec[0] == "finite" and len(gamma_spec) == 2:
            gamma = gamma_finite(int(gamma_spec[1]))
        elif gamma_spec[0] == "euclidean" and len(gamma_spec) in (2, 3):
            radius = as_fraction(gamma_spec[2]) if len(gamma_spec) == 3 else Fraction(1)
            gamma = gamma_euclidean_ball(int(gamma_spec[1]), radius)
        else:
            raise ValueError(f"bad gamma {' '.join(gamma_spec)!r}")
        phi_spec = config.km.get("phi", "km").split()
        if phi_spec[0] == "km":
            phi = None
        elif phi_spec[0] == "shift" and len(phi_spec) == 2:
            s = int(phi_spec[1])
            phi = LiminfModulus.shifted(lambda k: s, f"shift {s}")
        else:
            raise ValueError(f"bad phi {' '.join(phi_spec)!r}, expected 'km' or 'shift s'")
        return km_bundle(c, theta_constant(step), gamma, phi)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_delta(config: ExperimentConfig, budget: EvaluationBudget | None) -> tuple[dict, bool]:
    bundle = delta_bundle(config)
    lam = config.rational("lambda", "1/2")
    k = config.integer("k", 0)
    g = config.g_function("g", "const 0")
    trace = delta(bundle, lam, k, g, budget or config.budget)
    report = build_report("delta", config.echo(), None, extra={"delta": trace.to_dict()})
    report["pass"] = trace.finite
    return report, trace.finite


def cmd_km(config: ExperimentConfig, csv_dir: Path | None) -> dict:
    setup = drivers.km_setup(config)
    run, km = setup.run, setup.config
    verdicts = [drivers._km_bounded(setup)]
    fejer_rows = []
    rs = [int(r) for r in config.rationals("r", ["0", "1", "3", "7", "15"])]
    for z in setup.anchors:
        for r in rs:
            per_m = verify_fejer_step(run, km.family, z, r, run.ensemble.horizon - 1, km.c)
            fejer_rows += [(list(map(float, z)), r, v.extra["m"], v.extra["successes"], v.premise,
                            v.passed) for v in per_m]
    verdicts += drivers._km_fejer(setup, config)
    verdicts.append(drivers._km_liminf(setup, config))
    verdicts.append(drivers._km_liminf_simple(setup, config))
    if "n_star" in config.params:
        verdicts.append(drivers._km_metastability(setup, config))
    space = run.ensemble.space
    dist = space.distance(run.ensemble.values, km.fixed_point)
    threshold = float(config.rational("close", "1/1000"))
    disp = displacement_series(run, km.family)
    decay = [(n, float(dist[:, n].mean()), float(np.quantile(dist[:, n], 0.99)),
              float(np.mean(dist[:, n] <= threshold)), float(disp[:, n].mean()))
             for n in range(run.ensemble.horizon + 1)]
    final_close = decay[-1][3]
    if csv_dir is not None:
        write_csv(csv_dir / "distance_decay.csv",
                  ("n", "mean_distance", "q99_distance", "fraction_close", "mean_sq_displacement"),
                  decay)
        write_csv(csv_dir / "fejer_per_m.csv", ("anchor", "r", "m", "violations", "premise", "pass"),
                  fejer_rows)
        count = min(run.ensemble.path_count, int(config.output.get("paths", 10)))
        write_csv(csv_dir / "trajectory.csv",
                  ("path", "n", *[f"x{i}" for i in range(np.prod(space.point_shape, dtype=int))]),
                  ((p, n, *np.ravel(run.ensemble.values[p, n])) for p in range(count)
                   for n in range(run.ensemble.horizon + 1)))
    return build_report("km", config.echo(), config.master_seed, verdicts=verdicts,
                        bounds=drivers.km_bounds(setup, config),
                        extra={"final_fraction_close": final_close, "close_threshold": threshold})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="finmart", description="Finitary martingale bounds and checks.",
                                     epilog=_theorem_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--report", type=Path, help="write the JSON report here instead of stdout")
    parser.add_argument("--budget", help="evaluation budget 'steps:bits' for delta")
    parser.add_argument("--timing", action="store_true", help="print wall-clock time to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", help="simulate a process ensemble")
    p.add_argument("--config", required=True, type=Path)
    p = sub.add_parser("verify", help="verify a theorem empirically",
                       epilog=_theorem_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("theorem", help="theorem id")
    p.add_argument("--config", required=True, type=Path)
    p = sub.add_parser("bound", help="exact bound calculator",
                       epilog="bounds:\n" + "\n".join(f"  {n} {' '.join(a)}" for n, (a, _) in BOUNDS.items()),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("name")
    p.add_argument("params", nargs="*", help="positional values or key=value pairs")
    p = sub.add_parser("delta", help="evaluate the metastability rate with a budget")
    p.add_argument("--config", required=True, type=Path)
    p = sub.add_parser("km", help="run the stochastic Krasnoselskii-Mann experiment")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--csv-dir", type=Path, help="directory for CSV output")
    return parser


def _budget(text: str | None) -> EvaluationBudget | None:
    try:
        if text:
            return EvaluationBudget.parse(text)
        EvaluationBudget.from_env()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return None


def _load(args, kind: str) -> ExperimentConfig:
    config = load_config(args.config)
    if config.kind != kind:
        raise ConfigError(f"config kind is {config.kind!r}, command is {kind!r}")
    return config


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    config = None
    try:
        budget = _budget(args.budget)
        if args.command == "bound":
            report = cmd_bound(args.name, args.params)
            ok = True
        elif args.command == "verify":
            config = _load(args, "verify")
            if config.theorem and config.theorem != args.theorem:
                raise ConfigError(f"config is for {config.theorem!r}, not {args.theorem!r}")
            report = cmd_verify(args.theorem, config)
            ok = report["pass"]
        elif args.command == "simulate":
            config = _load(args, "simulate")
            report = cmd_simulate(config)
            ok = True
        elif args.command == "delta":
            config = _load(args, "delta")
            report, ok = cmd_delta(config, budget)
        else:
            config = _load(args, "km")
            csv_dir = args.csv_dir or (Path(config.output["csv_dir"]) if "csv_dir" in config.output else None)
            report = cmd_km(config, csv_dir)
            ok = report["pass"]
    except (ConfigError, BudgetExceeded) as exc:
        print(f"finmart: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    target = args.report
    if target is None and config is not None and "report" in config.output:
        target = Path(config.output["report"])
    if target is not None:
        write_report(report, target)
    else:
        sys.stdout.write(dumps(report))
    if args.timing:
        print(f"elapsed {time.perf_counter() - started:.3f}s", file=sys.stderr)
    if args.command == "delta" and not ok:
        return EXIT_ERROR
    return EXIT_PASS if ok else EXIT_FAIL


def main(argv: list[str] | None = None) -> None:
    sys.exit(run(argv))
