from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finmart.moduli import (LiminfModulus, gamma_euclidean_ball, gamma_finite, gpack_certificate,
                            gpack_identity, gpack_square, km_closedness,
                            monotone_fluctuation_rate, strengthen_liminf, theta_constant)


def test_gamma_examples():
    assert gamma_euclidean_ball(1, 1)(0) == 2
    assert gamma_euclidean_ball(2, 1)(0) == 9
    assert [gamma_finite(1)(k) for k in range(4)] == [1] * 4
    assert [gamma_finite(3)(k) for k in range(4)] == [3] * 4
    with pytest.raises(ValueError):
        gamma_finite(0)


@given(st.integers(1, 4), st.fractions(F(1, 10), 5, max_denominator=20), st.integers(0, 30))
def test_gamma_ball_nondecreasing_and_never_undercounts(dim, b, k):
    g = gamma_euclidean_ball(dim, b)
    assert g(k) <= g(k + 1)
    side = g(k) ** (1 / dim)
    assert side >= 2 * (k + 1) * np.sqrt(dim) * float(b) - 1e-9


@pytest.mark.parametrize("dim", [1, 2])
@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_gamma_ball_certificate(dim, k):
    rng = np.random.default_rng(100 * dim + k)
    gamma = gamma_euclidean_ball(dim, 1)(k)
    # 10^4 trials split over the eight (dim, k) cases
    for _ in range(1250):
        n = gamma + 1
        raw = rng.uniform(-1, 1, size=(n, dim))
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        pts = np.where(norms > 1, raw / norms, raw)
        gaps = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        np.fill_diagonal(gaps, np.inf)
        assert gaps.min() <= 1 / (k + 1)


def test_theta_examples():
    theta = theta_constant(F(1, 2))
    assert theta(0, 2) == 7
    assert theta(5, F(1, 1000)) == 5
    for N in range(5):
        for b in (F(1, 3), 1, F(7, 2)):
            M = theta(N, b)
            assert (M - N + 1) * F(1, 4) >= b
            assert M == N or (M - N) * F(1, 4) < b
    with pytest.raises(ValueError):
        theta_constant(1)


def test_gpack_examples():
    square = gpack_square()
    assert square.iota(F(1), 0) == 2 and square.nu(1) == 4
    ident = gpack_identity()
    assert ident.iota(F(3), 5) == 5 and ident.nu(5) == 5


@pytest.mark.parametrize("pack", [gpack_identity(), gpack_square()], ids=lambda p: p.name)
@pytest.mark.parametrize("b,k", [(1, 0), (2, 3), (F(1, 2), 7)])
def test_gpack_certificates(pack, b, k):
    assert gpack_certificate(pack, b, k) == (True, True)


def test_strengthen_liminf_examples():
    seen = []
    phi = LiminfModulus(lambda lam, k, N: seen.append(lam) or N + 1, "rec")
    strong = strengthen_liminf(phi)
    strong(F(1, 2), 0, 0)
    strong(F(1, 2), 1, 0)
    assert seen == [F(1, 8), F(1, 16)]
    shift = LiminfModulus.shifted(lambda k: 3)
    assert strengthen_liminf(shift)(F(1, 2), 4, 10) == 13


def test_strengthened_modulus_union_bound():
    """Hitting times sampled geometrically; the union over (k, N) stays under lambda."""
    rng = np.random.default_rng(0)
    M, K_star, N_star, lam = 20_000, 2, 3, F(1, 4)
    p_hit = 1 / 2

    def phi(mu, k, N):
        # P(no hit in [N; phi]) = (1 - p)^(phi - N + 1) < mu
        length = int(np.ceil(np.log(float(mu)) / np.log(1 - p_hit)))
        return N + length

    strong = strengthen_liminf(LiminfModulus(phi, "geometric"))
    hits = rng.random((M, 200)) < p_hit
    bad = np.zeros(M, dtype=bool)
    for k in range(K_star + 1):
        for N in range(N_star + 1):
            end = strong(lam, k, N)
            bad |= ~hits[:, N:end + 1].any(axis=1)
    assert bad.mean() < float(lam)


def test_monotone_fluctuation_rate():
    one = lambda lam: 1
    assert monotone_fluctuation_rate(one, F(1, 2), F(1, 3)) == 4
    assert monotone_fluctuation_rate(lambda lam: 0, F(1, 2), F(1, 3)) == 0
    assert monotone_fluctuation_rate(one, F(1, 4), F(1, 3)) == 8


def test_km_closedness():
    assert km_closedness(0) == (11, 11)
    assert km_closedness(1) == (23, 23)
    for k in range(5):
        assert F(1, km_closedness(k)[1] + 1) == F(1, 12 * (k + 1))


def test_liminf_modulus_contract():
    bad = LiminfModulus(lambda lam, k, N: N - 1, "bad")
    with pytest.raises(ValueError):
        bad(F(1, 2), 0, 3)
