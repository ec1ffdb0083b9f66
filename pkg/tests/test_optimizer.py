import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oparq import arq, fbl
from oparq.arq import LinkConfig, OutageProfile
from oparq.optimizer import (
    InfeasibleError,
    OptimizerConfig,
    equal_access,
    evaluate_policies,
    optimize_access,
    power_non_opportunistic,
    power_non_opportunistic_integer,
    power_open_loop,
    power_opportunistic,
    scheme_powers,
)

from .conftest import random_profile


def brute_force(prof, M, step, eps_s_t, eps_p_t):
    """Scalar exhaustive search over every grid vector, no ordering assumed."""
    levels = [k * step for k in range(int(round(1 / step)) + 1)]
    best = None
    for q in itertools.product(levels, repeat=M):
        eps_s = arq.su_outage(q, prof)
        phi = arq.transmission_load(q, prof)
        eps_p = arq.pu_outage_overall(phi, M, eps_s, prof.eps_p1, prof.eps_p2)
        if eps_s <= eps_s_t * (1 + 1e-12) and eps_p <= eps_p_t * (1 + 1e-12):
            if best is None or phi < best[0]:
                best = (phi, q)
    return best


def test_equal_access_example(worked_profile):
    res = equal_access(0.1275, worked_profile, 2)
    assert res.q == pytest.approx((0.1275**0.5 - 0.55) / -0.25)
    assert res.q == pytest.approx(0.77173, abs=1e-4)
    assert arq.su_outage([res.q] * 2, worked_profile) == pytest.approx(0.1275, rel=1e-12)


def test_equal_access_boundaries(worked_profile):
    lo, hi = arq.su_outage_bounds(worked_profile, 3)
    assert equal_access(hi, worked_profile, 3).q == pytest.approx(0.0, abs=1e-12)
    assert equal_access(lo, worked_profile, 3).q == pytest.approx(1.0, abs=1e-12)
    above = equal_access(0.9, worked_profile, 3)
    assert above.q == 0.0 and above.clamped
    with pytest.raises(InfeasibleError):
        equal_access(lo / 2, worked_profile, 3)


def test_equal_access_round_trip_random():
    rng = np.random.default_rng(3)
    done = 0
    while done < 100:
        prof = random_profile(rng)
        M = int(rng.integers(1, 7))
        lo, hi = arq.su_outage_bounds(prof, M)
        if not 0 < lo < hi:
            continue
        t = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        q = equal_access(t, prof, M).q
        assert arq.su_outage([q] * M, prof) == pytest.approx(t, rel=1e-12)
        done += 1


def test_optimize_slack_targets_gives_zero_policy(worked_profile):
    q = optimize_access(OptimizerConfig(1.0, 1.0, 0.05), worked_profile, 3)
    assert q.tolist() == [0.0, 0.0, 0.0]
    reach = [arq.reach_probability(m, q, worked_profile) for m in (1, 2, 3)]
    assert arq.transmission_load(q, worked_profile) == pytest.approx(0.5 * sum(reach))


def test_optimize_lower_bound_forces_ones(worked_profile):
    lo, _ = arq.su_outage_bounds(worked_profile, 3)
    q = optimize_access(OptimizerConfig(lo, 1.0, 0.05), worked_profile, 3)
    assert q.tolist() == [1.0, 1.0, 1.0]


def test_optimize_matches_unrestricted_brute_force(worked_profile):
    cfg = OptimizerConfig(0.05, 1.0, 0.05, include_equal=False)
    q = optimize_access(cfg, worked_profile, 3)
    phi_bf, q_bf = brute_force(worked_profile, 3, 0.05, 0.05, 1.0)
    assert arq.transmission_load(q, worked_profile) == pytest.approx(phi_bf, abs=1e-12)
    np.testing.assert_allclose(q, q_bf, atol=1e-12)


def test_monotone_restriction_random_instances():
    rng = np.random.default_rng(17)
    for _ in range(20):
        prof = random_profile(rng)
        M = int(rng.integers(1, 4))
        lo, hi = arq.su_outage_bounds(prof, M)
        t = min(1.0, lo + rng.uniform(0.05, 1.0) * (hi - lo))
        tp = rng.uniform(prof.eps_p1, prof.eps_p2 + 1e-9)
        bf = brute_force(prof, M, 0.05, t, tp)
        restricted = OptimizerConfig(t, tp, 0.05, monotone=True, include_equal=False)
        if bf is None:
            with pytest.raises(InfeasibleError):
                optimize_access(restricted, prof, M)
            continue
        q = optimize_access(restricted, prof, M)
        assert arq.transmission_load(q, prof) == pytest.approx(bf[0], abs=1e-12)


def test_infeasible_names_constraint(worked_profile):
    with pytest.raises(InfeasibleError) as info:
        optimize_access(OptimizerConfig(1.0, 1e-6, 0.1), worked_profile, 2)
    assert info.value.constraint == "eps_p"


def test_grid_step_must_divide_one():
    with pytest.raises(ValueError):
        OptimizerConfig(0.1, 0.1, grid_step=0.3)


def test_vectorized_evaluation_matches_scalar(worked_profile):
    Q = np.random.default_rng(1).uniform(size=(50, 4))
    eps_s, phi, eps_p = evaluate_policies(Q, worked_profile)
    for row, a, b, c in zip(Q, eps_s, phi, eps_p):
        assert a == pytest.approx(arq.su_outage(row, worked_profile), rel=1e-12)
        assert b == pytest.approx(arq.transmission_load(row, worked_profile), rel=1e-12)
        assert c == pytest.approx(arq.pu_outage_overall(b, 4, a, worked_profile.eps_p1, worked_profile.eps_p2), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_tighter_target_never_lowers_phi(lp, a, b):
    prof = OutageProfile(0.05, 0.4, 0.01, 0.2, lp)
    lo, hi = arq.su_outage_bounds(prof, 3)
    t1, t2 = sorted([lo + a * (hi - lo), lo + b * (hi - lo)])
    phi1 = arq.transmission_load(optimize_access(OptimizerConfig(t1, 1.0, 0.05), prof, 3), prof)
    phi2 = arq.transmission_load(optimize_access(OptimizerConfig(t2, 1.0, 0.05), prof, 3), prof)
    assert phi1 >= phi2 - 1e-12


def test_dominance_chain_over_lambda_grid():
    base = OutageProfile(0.02, 0.3, 0.01, 0.2, 0.0)
    target = 1e-2
    for lp in np.round(np.arange(0.1, 0.91, 0.1), 2):
        prof = base.with_lambda(lp)
        eq = equal_access(target, prof, 4)
        q = optimize_access(OptimizerConfig(target, 1.0, 0.05), prof, 4)
        phi_eq = arq.transmission_load([eq.q] * 4, prof)
        phi_opt = arq.transmission_load(q, prof)
        m_no, _ = power_non_opportunistic(prof, target, 1.0)
        assert phi_opt <= phi_eq + 1e-12 <= m_no + 1e-12


def test_non_opportunistic_examples(worked_profile):
    base = worked_profile.always_on_failure
    assert power_non_opportunistic(worked_profile, base, 2.0) == pytest.approx((1.0, 2.0))
    assert power_non_opportunistic(worked_profile, base**2, 1.0)[0] == pytest.approx(2.0)
    m_no, p = power_non_opportunistic(worked_profile, 1e-3, 7.0)
    assert m_no == pytest.approx(math.log(1e-3) / math.log(0.3))
    assert m_no == pytest.approx(5.7375, abs=1e-4)
    assert p == pytest.approx(7.0 * m_no)
    assert power_non_opportunistic_integer(worked_profile, 1e-3, 1.0) == (6, 6.0)
    with pytest.raises(InfeasibleError):
        power_non_opportunistic(OutageProfile(1.0, 1.0, 0, 0, 0.5), 1e-3, 1.0)


def test_opportunistic_power_examples(worked_profile):
    silent = OutageProfile(0.1, 0.5, 0, 0, 1.0)
    assert power_opportunistic([0, 0, 0], silent, 5.0) == 0.0
    assert power_opportunistic([0.5, 1.0], worked_profile, 2.0) == pytest.approx(2.35)


def test_open_loop_endpoints():
    link = LinkConfig.from_db(500, 0.25, 30, 32)
    clean = fbl.required_power(1e-2, 500, 0.25)
    hit = fbl.required_power(1e-2, 500, 0.25, interferer=link.p_p)
    assert power_open_loop(1e-2, link, 0.0) == pytest.approx(clean)
    assert power_open_loop(1e-2, link, 1.0) == pytest.approx(hit)
    assert power_open_loop(1e-2, link, 0.3) == pytest.approx(0.3 * hit + 0.7 * clean)


def test_scheme_powers_ordering():
    link = LinkConfig.from_db(500, 0.25, 30, 32)
    prof = OutageProfile.from_link(link, 0.6)
    sp = scheme_powers(link, prof, 3, OptimizerConfig(1e-3, 1e-3))
    assert 0 < sp.opportunistic_optimal <= sp.opportunistic_equal <= sp.non_opportunistic <= sp.open_loop
    assert set(sp.as_db()) == {"open_loop", "non_opportunistic", "opportunistic_equal", "opportunistic_optimal"}
