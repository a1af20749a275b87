from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finmart.ensemble import PathEnsemble, RandomSource
from finmart.processes import (BoundedWalk, ConditionalMeanTrace, ContractError, Drift,
                               Multiplicative, PolyaUrn, PredictableProcess,
                               RobbinsSiegmundCanonical, SimulationError, StoppingRule,
                               canonical_fixtures, cond_mean_check, constant_process,
                               doob_decompose, first_at_or_above, integral_cond_mean, never_stop,
                               simulate, stop_at, stop_process, stochastic_integral,
                               stopped_cond_mean, verify_finitary_supermartingale,
                               verify_rs_process)

ZERO = staticmethod(lambda n: Fraction(0))


def frequencies(verdicts):
    return [v.estimate for v in verdicts]


def test_multiplicative_trace_is_nine_tenths_of_value():
    ens, trace = simulate(Multiplicative(Fraction(9, 10), 1), 200, 10, RandomSource(1))
    assert np.allclose(trace.values, 0.9 * ens.values[:, :-1], rtol=0, atol=1e-15)


def test_polya_trace_is_the_value():
    ens, trace = simulate(PolyaUrn(1, 1), 200, 10, RandomSource(2))
    assert np.allclose(trace.values, ens.values[:, :-1], atol=1e-15)


def test_constant_process_trace():
    ens, trace = simulate(constant_process(Fraction(3, 2)), 5, 4, RandomSource(0))
    assert np.all(trace.values == 1.5) and np.all(ens.values == 1.5)


def test_simulation_is_deterministic_and_schedule_free():
    gen = BoundedWalk(5, 10, 1)
    a, _ = simulate(gen, 300, 20, RandomSource(7))
    b, _ = simulate(gen, 300, 20, RandomSource(7), block=64, workers=3)
    assert np.array_equal(a.values, b.values)


def test_nonfinite_values_name_the_step():
    class Blowup(Drift):
        def step(self, state, u, n):
            return state * np.inf if n == 2 else state + 1

    with pytest.raises(SimulationError, match="step 3"):
        simulate(Blowup(), 3, 5, RandomSource(0))


def test_invalid_generator_parameters():
    with pytest.raises(ValueError):
        Multiplicative(-1, 1)
    with pytest.raises(ValueError):
        PolyaUrn(0, 0)


@pytest.mark.parametrize("gen", canonical_fixtures(), ids=lambda g: g.name)
def test_analytic_cond_mean_matches_simulation(gen):
    ens, trace = simulate(gen, 20_000, 15, RandomSource(4))
    assert all(ok for _, _, _, ok in cond_mean_check(ens, trace))


def test_supermartingale_examples():
    ens, trace = simulate(Multiplicative(Fraction(9, 10), 1), 1000, 10, RandomSource(5))
    assert set(frequencies(verify_finitary_supermartingale(ens, trace, Fraction(1, 10),
                                                           Fraction(1, 1000), 10))) == {0}
    ens, trace = simulate(Drift(0, 1), 10, 6, RandomSource(5))
    verdicts = verify_finitary_supermartingale(ens, trace, Fraction(1, 2), Fraction(1, 2), 6)
    assert set(frequencies(verdicts)) == {1} and not any(v.passed for v in verdicts)


def test_rs_examples():
    gen = RobbinsSiegmundCanonical()
    ens, trace = simulate(gen, 2000, 12, RandomSource(6))
    verdicts = verify_rs_process(ens, trace, trace.eta, trace.chi, Fraction(1, 100),
                                 Fraction(1, 10**9), 12)
    assert set(frequencies(verdicts)) == {0}

    eps = Fraction(1, 4)
    pushed = RobbinsSiegmundCanonical(excess=2 * eps)
    ens, trace = simulate(pushed, 100, 5, RandomSource(6))
    verdicts = verify_rs_process(ens, trace, trace.eta, trace.chi, Fraction(1, 2), eps, 5)
    assert set(frequencies(verdicts)) == {1}


def test_zero_schedules_collapse_to_supermartingale_check():
    gen = RobbinsSiegmundCanonical(chi=lambda n: 0, eta=lambda n: 0, excess=Fraction(1, 8))
    ens, trace = simulate(gen, 500, 8, RandomSource(8))
    a = verify_rs_process(ens, trace, trace.eta, trace.chi, Fraction(1, 3), Fraction(1, 16), 8)
    b = verify_finitary_supermartingale(ens, trace, Fraction(1, 3), Fraction(1, 16), 8)
    assert [(v.estimate, v.passed) for v in a] == [(v.estimate, v.passed) for v in b]


def test_negative_eta_is_rejected():
    ens, trace = simulate(RobbinsSiegmundCanonical(), 10, 3, RandomSource(0))
    with pytest.raises(ValueError):
        verify_rs_process(ens, trace, -np.ones((10, 3)), None, Fraction(1, 2), 1, 3)


def test_trace_shape_mismatch():
    ens, trace = simulate(PolyaUrn(), 10, 3, RandomSource(0))
    other = ConditionalMeanTrace(np.zeros((10, 2)))
    with pytest.raises(ContractError):
        verify_finitary_supermartingale(ens, other, Fraction(1, 2), 1, 2)


def test_doob_examples():
    ens, trace = simulate(PolyaUrn(1, 1), 50, 10, RandomSource(9))
    doob = doob_decompose(ens, trace)
    assert np.allclose(doob.predictable_part.values, 0, atol=1e-15)
    assert np.allclose(doob.martingale_part.values, ens.values)

    ens, trace = simulate(Multiplicative(Fraction(9, 10), 1), 50, 10, RandomSource(9))
    z = doob_decompose(ens, trace).predictable_part.values
    expected = np.zeros_like(z)
    expected[:, 1:] = -0.1 * np.cumsum(ens.values[:, :-1], axis=1)
    assert np.allclose(z, expected, rtol=1e-12, atol=1e-15)

    ens, trace = simulate(Drift(0, 1), 3, 6, RandomSource(0))
    doob = doob_decompose(ens, trace)
    assert np.array_equal(doob.predictable_part.values, np.tile(np.arange(7.0), (3, 1)))
    assert np.all(doob.martingale_part.values == 0)


def test_doob_identity_and_martingale_part():
    ens, trace = simulate(BoundedWalk(5, 10, 1), 20_000, 12, RandomSource(10))
    doob = doob_decompose(ens, trace)
    assert np.allclose(doob.martingale_part.values + doob.predictable_part.values, ens.values,
                       rtol=1e-12, atol=0)
    y = doob.martingale_part.values
    high = ens.values[:, :-1] > np.median(ens.values[:, :-1], axis=0)
    for n in range(12):
        for mask in (np.ones(ens.path_count, bool), high[:, n]):
            inc = (y[:, n + 1] - y[:, n])[mask]
            if inc.size < 2:
                continue
            se = inc.std(ddof=1) / np.sqrt(inc.size)
            assert abs(inc.mean()) <= 5 * se + 1e-12


def test_integral_examples():
    ens = PathEnsemble(np.array([[1.0, 3.0, 2.0]]))
    C = PredictableProcess(np.array([[0.0, 2.0, 0.5]]), 2)
    assert np.allclose(stochastic_integral(C, ens).values, [[0.0, 4.0, 3.5]])
    assert np.allclose(stochastic_integral(PredictableProcess.constant(ens, 1), ens).values,
                       ens.values - ens.values[:, :1])
    assert np.all(stochastic_integral(PredictableProcess.constant(ens, 0), ens).values == 0)


def test_predictability_contract():
    with pytest.raises(ContractError):
        PredictableProcess(np.zeros((1, 3)), 1, declared_lag=0)
    with pytest.raises(ValueError):
        PredictableProcess(np.full((1, 3), 3.0), 2)
    ens = PathEnsemble(np.array([[0.0, 1.0, 2.0, 3.0]]))
    seen = []
    PredictableProcess.from_rule(ens, lambda prefix, n: seen.append(prefix.shape[1]) or 0.0, 1)
    assert seen == [0, 1, 2, 3]


def test_stop_examples():
    ens = PathEnsemble(np.array([[2.0, 0.0, 2.0, 0.0]]))
    assert np.array_equal(stop_process(ens, never_stop(3)).values, ens.values)
    assert np.all(stop_process(ens, stop_at(0)).values == 2.0)
    stopped = stop_process(ens, first_at_or_above(1.5, 3, after=1))
    assert np.array_equal(stopped.values, [[2.0, 0.0, 2.0, 2.0]])


def test_stopping_rule_sees_only_the_prefix():
    ens = PathEnsemble(np.arange(12.0).reshape(2, 6))
    widths = []

    def decide(prefix, n):
        widths.append(prefix.shape[1])
        return prefix[:, n] > 100

    stop_process(ens, StoppingRule(decide, 5))
    assert widths == [1, 2, 3, 4, 5]


@pytest.mark.parametrize("gen", [Multiplicative(Fraction(9, 10), 1), PolyaUrn(1, 1),
                                 BoundedWalk(5, 10, 1)], ids=lambda g: g.name)
def test_stopping_and_integrals_keep_the_supermartingale_property(gen):
    lam, eps, N = Fraction(1, 20), Fraction(1, 100), 20
    ens, trace = simulate(gen, 3000, N, RandomSource(12))
    assert all(v.passed for v in verify_finitary_supermartingale(ens, trace, lam, eps, N))

    rule = first_at_or_above(float(np.median(ens.values[:, 0])) + 0.25, N, after=1)
    stopped = stop_process(ens, rule)
    st_trace = stopped_cond_mean(ens, trace, rule)
    assert all(v.passed for v in verify_finitary_supermartingale(stopped, st_trace, lam, eps, N))

    C = PredictableProcess.from_rule(ens, lambda prefix, n: np.full(prefix.shape[0], 2.0) if n % 2
                                     else np.zeros(prefix.shape[0]), 2)
    integral = stochastic_integral(C, ens)
    int_trace = integral_cond_mean(C, ens, trace)
    assert all(v.passed for v in verify_finitary_supermartingale(integral, int_trace, lam,
                                                                 2 * eps, N))

    z = doob_decompose(ens, trace).predictable_part.values
    increases = (z[:, 1:] > z[:, :-1] + float(eps)).mean(axis=0)
    assert np.all(increases < float(lam))


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=10),
       st.lists(st.floats(0, 3), min_size=10, max_size=10))
def test_integral_is_the_partial_sum(xs, cs):
    n = len(xs)
    ens = PathEnsemble(np.array([xs]))
    C = PredictableProcess(np.array([cs[:n]]), 3)
    expected = [sum(cs[i] * (xs[i] - xs[i - 1]) for i in range(1, m + 1)) for m in range(n)]
    assert np.allclose(stochastic_integral(C, ens).values[0], expected, atol=1e-9)
