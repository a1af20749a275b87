"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Monte Carlo criteria run the stored configs in configs/acceptance through the
CLI, so the last criterion can re-run the very same files and byte-compare.
"""

import itertools
import json
import time
from fractions import Fraction as F
from pathlib import Path

import numpy as np
import pytest

from finmart.bounds import (AbsContModulus, RSParams, StepFunction, martingale_fluctuation_bound,
                            rs_triple, uniform_horizon)
from finmart.counters import (count_downcrossings, count_fluctuations, count_set_fluctuations,
                              count_upcrossings, downcrossings_batch, fluctuations_batch,
                              set_fluctuations_batch, upcrossings_batch)
from finmart.hadamard_km import certify, euclidean_ball_space, km_bundle, km_moduli, star_tree_space
from finmart.harness.cli import run
from finmart.harness.config import load_config
from finmart.metastability import CounterexampleFunction, delta
from finmart.moduli import LiminfModulus, gamma_euclidean_ball, gamma_finite, km_closedness, theta_constant
from oracles.chains import (downcrossing_valid, fluctuation_valid, longest_chain,
                            set_fluctuation_valid, upcrossing_valid)
from oracles.delta_straight import TooBig, km_delta

ACCEPTANCE = Path(__file__).resolve().parent.parent / "configs" / "acceptance"
GRID = (0.0, 0.5, 1.0, 1.5, 2.0)
HALF = F(1, 2)

# first-run report bytes per config, reused by the reproducibility check
REPORTS: dict[str, bytes] = {}


@pytest.fixture(scope="module")
def outdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def run_config(name: str, outdir: Path, tag: str = "first") -> tuple[int, dict, float]:
    path = ACCEPTANCE / f"{name}.ini"
    config = load_config(path)
    target = outdir / f"{name}.{tag}.json"
    command = [config.kind] + ([config.theorem] if config.kind == "verify" else [])
    started = time.perf_counter()
    code = run(["--report", str(target), *command, "--config", str(path)])
    elapsed = time.perf_counter() - started
    data = target.read_bytes()
    REPORTS.setdefault(name, data)
    return code, json.loads(data), elapsed


def verdicts(report: dict) -> dict:
    return {v["label"]: v for v in report["verdicts"]}


def set_valid_from_series(series: np.ndarray, k: int) -> np.ndarray:
    gap = 1.0 / (k + 1)
    return (np.abs(series[:, :, :, None] - series[:, :, None, :]) >= gap).any(axis=1)


def test_criterion_01_counters_match_exhaustive_search(criterion):
    started = time.perf_counter()
    mismatches = 0
    checked = 0
    anchors = np.array([0.0, 0.75, 2.0])
    for length in range(1, 9):
        paths = np.array(list(itertools.product(GRID, repeat=length)))
        for start in range(0, len(paths), 40_000):
            block = paths[start:start + 40_000]
            for eps in (0.5, 1.0, 1.5):
                mismatches += np.count_nonzero(fluctuations_batch(block, eps, length)
                                               != longest_chain(fluctuation_valid(block, eps), length))
            for a, b in ((0.5, 1.5), (0.0, 2.0)):
                mismatches += np.count_nonzero(downcrossings_batch(block, a, b, length)
                                               != longest_chain(downcrossing_valid(block, a, b), length))
                mismatches += np.count_nonzero(upcrossings_batch(block, a, b, length)
                                               != longest_chain(upcrossing_valid(block, a, b), length))
            series = np.abs(block[:, None, :] - anchors[None, :, None])
            for k in (0, 1):
                mismatches += np.count_nonzero(set_fluctuations_batch(series, k, length)
                                               != longest_chain(set_valid_from_series(series, k), length))
            checked += len(block)
        # the scalar set counter on a strided sample of the same grid
        for path in paths[::max(1, len(paths) // 200)]:
            expected = longest_chain(set_fluctuation_valid(path[:, None], anchors[:, None],
                                                           lambda t: t, 0), length)[0]
            mismatches += count_set_fluctuations(path, anchors[:, None], lambda t: t, 0, length).count \
                != expected

    rng = np.random.default_rng(20240601)
    for _ in range(1000):
        n = int(rng.integers(1, 13))
        x = rng.normal(size=n).round(1)
        eps, a = float(rng.uniform(0.1, 2)), float(rng.uniform(-1, 0.5))
        b = a + float(rng.uniform(0.1, 1.5))
        mismatches += count_fluctuations(x, eps, n).count != longest_chain(fluctuation_valid(x, eps), n)[0]
        mismatches += count_downcrossings(x, a, b, n).count != \
            longest_chain(downcrossing_valid(x, a, b), n)[0]
        mismatches += count_upcrossings(x, a, b, n).count != longest_chain(upcrossing_valid(x, a, b), n)[0]
        pts = rng.integers(-2, 3, size=(n, 2)).astype(float)
        zs = list(rng.integers(-1, 2, size=(int(rng.integers(1, 4)), 2)).astype(float))
        k = int(rng.integers(0, 3))
        mismatches += count_set_fluctuations(pts, zs, np.sqrt, k, n).count != \
            longest_chain(set_fluctuation_valid(pts, zs, np.sqrt, k), n)[0]
    elapsed = time.perf_counter() - started
    ok = criterion(1, mismatches == 0 and elapsed < 120,
                   f"grid paths={checked} random=1000 mismatches={mismatches} runtime={elapsed:.1f}s")
    assert ok


def test_criterion_02_exact_bound_values(criterion):
    identity = AbsContModulus.identity()
    rs = RSParams(StepFunction.constant(1), StepFunction.constant(2), F(1), identity)
    km = km_moduli(1, theta_constant(HALF))
    got = {
        "N_K(1,1,1)": uniform_horizon(1, 1, 1),
        "mart_fluct(1,1/2,1/2)": martingale_fluctuation_bound(1, HALF, HALF, 4, identity).bound,
        "rs_Z(1,2,1,1/2,1/2)": rs_triple(rs, HALF, HALF, 3).Z,
        "zeta(c=1,r=7)": km.zeta(HALF, 7, 0),
        "Phi(1,0,0)": km.phi(1, 0, 0),
        "km_closedness(0)": km_closedness(0),
    }
    expected = {"N_K(1,1,1)": 2048, "mart_fluct(1,1/2,1/2)": 131072, "rs_Z(1,2,1,1/2,1/2)": 301989888,
                "zeta(c=1,r=7)": 4096, "Phi(1,0,0)": 7, "km_closedness(0)": (11, 11)}
    ok = criterion(2, got == expected, " ".join(f"{k}={v}" for k, v in got.items()))
    assert ok, got


def test_criterion_03_doob_decomposition(criterion, outdir):
    rows = []
    ok = True
    total = 0.0
    for name in ("polya", "multiplicative", "rs_canonical", "bounded_walk"):
        _, report, elapsed = run_config(f"c03_doob_{name}", outdir)
        total += elapsed
        v = verdicts(report)
        identity, mart = v["doob-identity"], v["doob-martingale"]
        z_max = report["details"]["predictable_part_max_abs"]
        good = identity["estimate"] <= 1e-12 and mart["estimate"] <= 5 and identity["pass"] and mart["pass"]
        if name == "polya":
            good = good and z_max == 0
        ok = ok and good
        rows.append(f"{name}: residual={identity['estimate']:.2g} max|mean|/se={mart['estimate']:.2f}"
                    f" max|Z|={z_max:.3g}")
    ok = criterion(3, ok and total < 300, "; ".join(rows) + f"; runtime={total:.1f}s")
    assert ok


def test_criterion_04_downcrossing_domination(criterion, outdir):
    rows = []
    ok = True
    total = 0.0
    for name in ("multiplicative", "polya"):
        _, report, elapsed = run_config(f"c04_dcrs_{name}", outdir)
        total += elapsed
        v = verdicts(report)["dcrs-ineq"]
        bound = F(report["bounds"]["bound"])
        M = report["config"]["ensemble"]["M"]
        upper = v["estimate"] + 3 * v["se"]
        good = v["pass"] and v["premise"] == "verified" and upper <= bound and M == 100_000
        ok = ok and good
        rows.append(f"{name}: E[D]+3se={upper:.4f} bound={bound}")
    ok = criterion(4, ok and total < 300, "; ".join(rows) + f"; runtime={total:.1f}s")
    assert ok


def test_criterion_05_ville_domination(criterion, outdir):
    rows = []
    ok = True
    for name in ("multiplicative", "polya"):
        _, report, _ = run_config(f"c05_ville_{name}", outdir)
        for alpha in ("3/2", "2"):
            v = verdicts(report)[f"ville[alpha={alpha}]"]
            bound = F(v["bound"])
            good = v["pass"] and v["premise"] == "verified" and v["rule"] == "wilson" \
                and v["ci_high"] <= bound
            ok = ok and good
            rows.append(f"{name} alpha={alpha}: wilson_upper={v['ci_high']:.4f} bound={bound}")
    ok = criterion(5, ok, "; ".join(rows))
    assert ok


def test_criterion_06_fluctuation_domination(criterion, outdir):
    rows = []
    ok = True
    for name, label in (("c06_mart_fluct_polya", "mart-fluct"),
                        ("c06_mart_fluct_multiplicative", "mart-fluct"),
                        ("c06_rs_fluct", "rs-fluct")):
        _, report, _ = run_config(name, outdir)
        v = verdicts(report)
        main, tail = v[label], v[f"{label}-p99.9"]
        bound = int(tail["bound"])
        good = main["estimate"] == 0 and main["premise"] == "verified" and main["pass"] \
            and tail["estimate"] <= bound and main["trials"] == 100_000
        ok = ok and good
        rows.append(f"{name[4:]}: P(J>=bound)={main['estimate']} max_J={main['max_J']}"
                    f" p99.9={tail['estimate']:g} bound={bound}")
    ok = criterion(6, ok, "; ".join(rows))
    assert ok


def test_criterion_07_stopped_and_integral_closure(criterion, outdir):
    rows = []
    ok = True
    for theorem in ("stopped", "integral"):
        for name in ("polya", "multiplicative", "bounded_walk", "rs_zero"):
            code, report, _ = run_config(f"c07_{theorem}_{name}", outdir)
            v = verdicts(report)
            good = code == 0 and v[theorem]["estimate"] == 0 and v[theorem]["pass"] \
                and v[f"{theorem}-premise"]["pass"]
            ok = ok and good
            rows.append(f"{theorem}/{name}={v[theorem]['estimate']:g}")
    ok = criterion(7, ok, "violation frequency " + " ".join(rows))
    assert ok


def test_criterion_08_cat0_certification(criterion):
    spaces = [euclidean_ball_space(d, 3) for d in (1, 2, 3)] + [star_tree_space(3)]
    results = [certify(space, trials=10_000, seed=8, tolerance=1e-9) for space in spaces]
    ok = criterion(8, all(r.passed for r in results),
                   " ".join(f"{r.space}={'ok' if r.passed else 'bad'}" for r in results)
                   + " trials=10000 tol=1e-9")
    assert ok, [r.to_dict() for r in results]


def test_criterion_09_km_end_to_end(criterion, outdir):
    _, report, _ = run_config("c09_km_projections", outdir)
    v = verdicts(report)
    fejer = [x for label, x in v.items() if label.startswith("km-fejer")]
    close = report["final_fraction_close"]
    checks = {
        "close": close >= 0.99 and report["close_threshold"] == 1e-3,
        "bounded": v["km-bounded"]["pass"],
        "fejer": len(fejer) == 5 and all(x["pass"] and x["estimate"] == 0 for x in fejer),
        "liminf": v["km-liminf"]["pass"],
    }
    ok = criterion(9, all(checks.values()),
                   f"fraction d(x_N,0)<=1e-3: {close:.4f}; max d(x_n,p)={v['km-bounded']['estimate']:.4f}"
                   f" <= c; fejer violations={sum(x['estimate'] for x in fejer):g};"
                   f" liminf={'pass' if checks['liminf'] else 'fail'}")
    assert ok, checks


@pytest.mark.xfail(strict=True, reason="the theta-based liminf modulus makes Delta a tower of "
                                       "exponentials; the evaluator returns a budget marker")
def test_criterion_10a_theta_bundle_finite_delta(criterion):
    bundle = km_bundle(1, theta_constant(HALF), gamma_finite(1))
    traces = {b: delta(bundle, HALF, 0, CounterexampleFunction.const(b)) for b in (0, 1)}
    detail = "; ".join(
        f"g={b}: " + (f"Delta={t.delta}" if t.finite else f"budget exceeded at {t.exceeded.intermediate}")
        for b, t in traces.items())
    criterion("10a", all(t.finite for t in traces.values()), detail)
    assert all(t.finite for t in traces.values())


def test_criterion_10b_delta_oracle_monotonicity_marker(criterion, outdir):
    started = time.perf_counter()

    def shift_bundle(m, s, gamma=None):
        phi = LiminfModulus.shifted(lambda k: s, f"shift {s}")
        return km_bundle(1, theta_constant(HALF), gamma or gamma_finite(m), phi)

    agree = finite = 0
    for m, k, (a, b), s in itertools.product((1, 2, 3), (0, 1), ((0, 0), (0, 1), (1, 1)), (0, 2)):
        trace = delta(shift_bundle(m, s), HALF, k, CounterexampleFunction.affine(a, b))
        try:
            expected = km_delta(1, m, s, HALF, k, a, b)
        except TooBig as exc:
            agree += (not trace.finite) and trace.exceeded.intermediate == exc.name
            continue
        finite += 1
        agree += trace.finite and trace.delta == expected["delta"]
    grid = {(k, b): delta(shift_bundle(1, 1), HALF, k, CounterexampleFunction.const(b)).delta
            for k in (0, 1, 2) for b in (0, 1, 2)}
    monotone = all(grid[k, b] <= grid[k + 1, b] for k in (0, 1) for b in (0, 1, 2)) and \
        all(grid[k, 0] <= grid[k, 1] <= grid[k, 2] for k in (0, 1, 2))
    euclid = delta(shift_bundle(1, 0, gamma_euclidean_ball(2, 1)), HALF, 0, CounterexampleFunction.const(1))
    marker = not euclid.finite and euclid.delta is None and bool(euclid.exceeded.intermediate)
    code, report, _ = run_config("c10_delta_shift", outdir)
    cli_ok = code == 0 and report["delta"]["delta"] is not None
    elapsed = time.perf_counter() - started
    ok = criterion("10b", agree == 36 and finite > 0 and monotone and marker and cli_ok and elapsed < 600,
                   f"oracle agreement {agree}/36 ({finite} finite); monotone in k and g={monotone};"
                   f" euclidean dim 2 marker at {euclid.exceeded.intermediate}; runtime={elapsed:.1f}s")
    assert ok


def test_criterion_11_reports_reproduce(criterion, outdir):
    names = sorted(p.stem for p in ACCEPTANCE.glob("*.ini"))
    differing = []
    for name in names:
        if name not in REPORTS:
            run_config(name, outdir)
        first = REPORTS[name]
        run_config(name, outdir, tag="second")
        second = (outdir / f"{name}.second.json").read_bytes()
        if first != second:
            differing.append(name)
    ok = criterion(11, not differing and len(names) > 0,
                   f"{len(names) - len(differing)}/{len(names)} configs byte-identical on re-run"
                   + (f"; differing: {', '.join(differing)}" if differing else ""))
    assert ok
