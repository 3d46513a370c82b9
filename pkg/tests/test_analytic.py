import numpy as np
import pytest
from hypothesis import given, strategies as st

from multifair import ValidationError, pf_allocate
from multifair.analytic import (TwoClassProfile, birth_death_stationary, capacity_region_check,
                                gamma1_pf, heavy_traffic_gamma, light_traffic_gamma,
                                optimal_claim, permanent_job_chain, permanent_job_rate,
                                zero_load_ratio)
from multifair.traffic import TrafficClass


def test_light_traffic_values():
    prof = TwoClassProfile(0.1, 0.5, 0.05, 0.05)
    assert light_traffic_gamma(prof, "drf") == pytest.approx((0.925, 0.925))
    assert light_traffic_gamma(prof, "pf") == pytest.approx((0.925, 0.945))


def test_light_traffic_pf_uses_the_larger_coefficient():
    # with beta close to 1 the 2 - 1/beta term dominates alpha
    prof = TwoClassProfile(0.1, 0.9, 0.1, 0.1)
    assert light_traffic_gamma(prof, "pf")[1] == pytest.approx(1 - (2 - 1 / 0.9) * 0.1 - 0.1)


def test_heavy_traffic_values():
    prof = TwoClassProfile(0.1, 0.1, 0.95 * 3 / 3.1, 0.95 / 3.1)
    load = prof.rho1 + prof.beta * prof.rho2
    assert load == pytest.approx(0.95)
    assert heavy_traffic_gamma(prof, "drf") == pytest.approx((0.05, 0.05))
    assert heavy_traffic_gamma(prof, "pf") == pytest.approx((0.05, 0.5))
    with pytest.raises(ValidationError):
        heavy_traffic_gamma(TwoClassProfile(0.1, 0.1, 0.1, 0.8), "pf")


@given(st.integers(0, 40), st.integers(1, 9), st.integers(0, 10))
def test_permanent_job_rate_matches_solver(n, a10, extra):
    alpha = a10 / 10
    beta = alpha + (1 - alpha) * extra / 10
    closed = permanent_job_rate(n, alpha, beta)
    if n == 0:
        assert closed == pytest.approx(1.0)
        return
    alloc, _ = pf_allocate([[1.0, beta], [alpha, 1.0]], counts=[1, n])
    assert closed == pytest.approx(alloc.phi[0], rel=1e-9)


@pytest.mark.parametrize("n", [1, 2, 5])
def test_optimal_claim_maximizes_volume(n):
    alpha = 0.1
    grid = np.linspace(alpha, 1, 2001)
    best = max(grid, key=lambda b: permanent_job_rate(n, alpha, b))
    assert optimal_claim(n, alpha) == pytest.approx(best, abs=1e-3)
    assert permanent_job_rate(n, alpha, optimal_claim(n, alpha)) > permanent_job_rate(n, alpha, alpha)


def test_birth_death_matches_generator_null_space():
    lam, mu = 0.7, [0, 1.0, 1.5, 2.0, 2.0, 2.5]
    N = len(mu) - 1
    pi = birth_death_stationary(lambda n: lam, lambda n: mu[n], N)
    Q = np.zeros((N + 1, N + 1))
    for n in range(N):
        Q[n, n + 1] = lam
        Q[n + 1, n] = mu[n + 1]
    Q -= np.diag(Q.sum(axis=1))
    M = np.vstack([Q.T, np.ones(N + 1)])
    ref = np.linalg.lstsq(M, np.append(np.zeros(N + 1), 1.0), rcond=None)[0]
    np.testing.assert_allclose(pi, ref, atol=1e-12)


def test_chain_tail_is_small():
    chain = permanent_job_chain(0.1, 0.5, 0.9)
    assert chain.tail_mass < 1e-9
    assert chain.pi.sum() == pytest.approx(1.0)


def test_gamma1_limits():
    # without competitors the job is served at full rate; truthful and false claims coincide at zero load
    assert gamma1_pf(0.1, 0.1, 0.0) == pytest.approx(1.0)
    assert gamma1_pf(0.1, 0.5, 0.0) == pytest.approx(1.0)
    direct = sum(p * permanent_job_rate(n, 0.1, 0.3) for n, p in
                 enumerate(birth_death_stationary(lambda n: 0.5,
                                                  lambda n: 1 - 0.3 * permanent_job_rate(n, 0.1, 0.3), 400)))
    assert gamma1_pf(0.1, 0.3, 0.5) == pytest.approx(direct, rel=1e-9)


@pytest.mark.parametrize("n", [1, 2, 5])
def test_false_claims_do_not_pay_in_dynamic_traffic(n):
    beta = optimal_claim(n, 0.1)
    for rho2 in np.arange(0.1, 0.95, 0.1):
        assert gamma1_pf(0.1, beta, rho2) <= gamma1_pf(0.1, 0.1, rho2) + 1e-12


def test_zero_load_ratio_value():
    assert zero_load_ratio(500, 100) == pytest.approx(0.544225, abs=1e-6)
    assert zero_load_ratio(100, 1) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        zero_load_ratio(50, 100)


def test_capacity_region():
    classes = [TrafficClass(0.5, 1, 1, (1.0, 0.1)), TrafficClass(0.3, 1, 1, (0.1, 1.0))]
    loads, stable = capacity_region_check(classes)
    np.testing.assert_allclose(loads, [0.53, 0.35])
    assert stable
    _, stable = capacity_region_check(classes + [TrafficClass(0.5, 1, 1, (1.0, 0.0))])
    assert not stable


def test_profile_validation():
    with pytest.raises(ValidationError):
        TwoClassProfile(0.5, 0.4)
    with pytest.raises(ValidationError):
        light_traffic_gamma(TwoClassProfile(0.1, 0.5), "maxmin")
