import numpy as np
import pytest

from multifair import DRF, PF, TrafficClass, ValidationError
from multifair.analytic import gamma1_pf
from multifair.fluid import simulate_fluid, simulate_permanent_job
from multifair.traffic import Allocator, Policy, class_matrix, half_width, replicate, replication_seed


def ps_classes(rho):
    return [TrafficClass(rho, 1.0, 1.0, (1.0,), name="1")]


def test_same_seed_same_path():
    classes = [TrafficClass(0.3, 1, 1, (1.0, 0.1)), TrafficClass(0.2, 1, 1, (0.1, 1.0))]
    a = simulate_fluid(classes, PF, 500, seed=7)
    b = simulate_fluid(classes, PF, 500, seed=7)
    c = simulate_fluid(classes, PF, 500, seed=8)
    np.testing.assert_array_equal(a.gamma, b.gamma)
    assert a.events == b.events
    assert not np.array_equal(a.gamma, c.gamma)


@pytest.mark.parametrize("policy", ["drf", "pf"])
def test_single_resource_is_processor_sharing(policy):
    res = replicate(lambda s: simulate_fluid(ps_classes(0.5), policy, 20000, seed=s), 3, 4)
    assert res.gamma[0] == pytest.approx(0.5, abs=4 * res.ci[0] + 0.01)


def test_zero_load_class_is_nan_and_idle_class_is_served():
    classes = [TrafficClass(0.2, 1, 1, (1.0, 0.2)), TrafficClass(0.0, 1, 1, (0.2, 1.0))]
    res = simulate_fluid(classes, DRF, 2000, seed=1)
    assert np.isnan(res.gamma[1])
    assert 0 < res.gamma[0] <= 1


def test_policies_agree_when_classes_do_not_interact():
    # disjoint resources: every policy gives each class its whole resource
    classes = [TrafficClass(0.4, 1, 1, (1.0, 0.0)), TrafficClass(0.4, 1, 1, (0.0, 1.0))]
    drf = simulate_fluid(classes, DRF, 3000, seed=2)
    pf = simulate_fluid(classes, PF, 3000, seed=2)
    np.testing.assert_allclose(drf.gamma, pf.gamma)


def test_permanent_job_against_chain():
    res = replicate(lambda s: simulate_permanent_job(0.1, 0.5, 0.5, horizon=20000, seed=s), 11, 4)
    assert res.gamma[0] == pytest.approx(gamma1_pf(0.1, 0.5, 0.5), abs=4 * res.ci[0] + 0.01)


def test_allocator_memoizes_and_checks_capacity():
    alloc = Allocator(class_matrix([TrafficClass(1, 1, 1, (1.0, 0.5)), TrafficClass(1, 1, 1, (0.5, 1.0))]), "pf")
    phi, nu = alloc((2, 1))
    assert alloc((2, 1))[0] is phi
    usage = (np.array([2, 1]) * phi) @ alloc.demand.a
    assert usage.max() == pytest.approx(1.0)


def test_replication_is_order_and_worker_independent():
    run = lambda s: simulate_fluid(ps_classes(0.4), "pf", 300, seed=s)
    serial = replicate(run, 5, 3)
    np.testing.assert_array_equal(serial.per_rep[:, 0],
                                  [run(replication_seed(5, r)).gamma[0] for r in range(3)])
    assert replication_seed(5, 0, 1) != replication_seed(5, 1, 0)


def test_half_width_matches_student_t():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    # t(0.975, 3) = 3.18245
    assert half_width(x[:, None])[0] == pytest.approx(3.18245 * x.std(ddof=1) / 2, rel=1e-5)
    assert np.isnan(half_width(x[:1, None])[0])


def test_policy_parsing():
    assert Policy.parse("DRF") == DRF
    assert Policy.parse("alpha=1") == PF
    assert Policy.parse("alpha=2").alpha == 2
    for bad in ("foo", "alpha=0", "alpha=x"):
        with pytest.raises(ValidationError):
            Policy.parse(bad)


def test_input_validation():
    with pytest.raises(ValidationError):
        simulate_fluid(ps_classes(0.5), "pf", 10, warmup=20)
    with pytest.raises(ValidationError):
        simulate_fluid([TrafficClass(1, 1, 1, (2.0,))], "pf", 10)
    with pytest.raises(ValidationError):
        TrafficClass(-1, 1, 1, (1.0,))
    with pytest.raises(ValidationError):
        TrafficClass(1, 1, 1, (1.0, 0.5), claim=(1.0,))
    with pytest.raises(ValidationError):
        simulate_permanent_job(0.5, 0.2, 0.3)
