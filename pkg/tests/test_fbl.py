import math

import mpmath
import numpy as np
import pytest
from scipy import integrate

from oparq import fbl

N, R = 500, 0.25


def mc_average(p_sig, p_int, n, R, samples=10**7, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.exponential(size=samples)
    if p_int is None:
        sinr = p_sig * x
    else:
        sinr = p_sig * x / (p_int * rng.exponential(size=samples) + 1.0)
    g = fbl.conditional_error(sinr, n, R)
    return g.mean(), g.std() / math.sqrt(samples)


def test_q_function_values():
    assert fbl.q_function(0.0) == 0.5
    for x in (0.3, 1.7, 4.2):
        assert fbl.q_function(x) + fbl.q_function(-x) == pytest.approx(1.0, abs=1e-15)
    tail, _ = integrate.quad(lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi), 3.0, np.inf)
    assert fbl.q_function(3.0) == pytest.approx(tail, rel=1e-10)
    assert fbl.q_function(3.0) == pytest.approx(1.3499e-3, rel=1e-4)


def test_q_function_saturates():
    assert fbl.q_function(-50.0) == 1.0
    assert fbl.q_function(50.0) == 0.0
    xs = np.linspace(-8, 8, 200)
    assert np.all(np.diff(fbl.q_function(xs)) < 0)


def test_dispersion():
    assert fbl.dispersion(0.0) == 0.0
    with mpmath.workdps(30):
        oracle = (1 - mpmath.mpf(1) / 4) * mpmath.log(mpmath.e, 2) ** 2
    assert fbl.dispersion(1.0) == pytest.approx(float(oracle), rel=1e-14)
    assert fbl.dispersion(1.0) == pytest.approx(1.56103, abs=1e-5)
    assert fbl.dispersion(1e9) == pytest.approx(fbl.LOG2E**2, rel=1e-8)
    assert fbl.LOG2E**2 == pytest.approx(2.08137, abs=1e-5)
    with pytest.raises(ValueError):
        fbl.dispersion(-0.1)


def test_conditional_error_zero_numerator():
    s = 2.0 ** (R - 0.5 * math.log2(N) / N) - 1.0
    assert fbl.conditional_error(s, N, R) == pytest.approx(0.5, abs=1e-12)


def test_conditional_error_at_zero_sinr():
    assert fbl.conditional_error(0.0, N, R) == 1.0
    # nR below the correction term: the limit is Q(+inf)
    assert fbl.conditional_error(0.0, 500, 0.001) == 0.0


def test_conditional_error_grid_against_mpmath():
    grid = [0.2, 0.25, 0.3, 0.35]
    vals = [fbl.conditional_error(s, N, R) for s in grid]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert 0 < fbl.conditional_error(0.3, N, R) < 0.5
    with mpmath.workdps(40):
        for s, v in zip(grid, vals):
            s = mpmath.mpf(s)
            num = N * mpmath.log(1 + s, 2) - N * mpmath.mpf(R) + mpmath.mpf("0.5") * mpmath.log(N, 2)
            disp = (1 - 1 / (1 + s) ** 2) * mpmath.log(mpmath.e, 2) ** 2
            oracle = mpmath.erfc(num / mpmath.sqrt(N * disp) / mpmath.sqrt(2)) / 2
            assert v == pytest.approx(float(oracle), rel=1e-9, abs=1e-300)


def test_conditional_error_monotone_dense():
    s = np.concatenate(([0.0], np.logspace(-8, 6, 20000)))
    g = fbl.conditional_error(s, N, R)
    assert np.all((g >= 0) & (g <= 1))
    assert np.all(np.diff(g) <= 0)


def test_avg_error_direct_limits_and_order():
    assert fbl.avg_error_direct(1e-9, N, R) == pytest.approx(1.0, abs=1e-6)
    e10, e20, e30 = (fbl.avg_error_direct(fbl.db_to_lin(d), N, R) for d in (10, 20, 30))
    assert e10 > e20 > e30 > 0


def test_avg_error_direct_matches_monte_carlo():
    mean, se = mc_average(1e3, None, N, R)
    assert abs(fbl.avg_error_direct(1e3, N, R) - mean) <= 3 * se


def test_avg_error_interfered_matches_monte_carlo():
    ps, pi = fbl.db_to_lin(32.0), fbl.db_to_lin(30.0)
    mean, se = mc_average(ps, pi, N, R, seed=1)
    assert abs(fbl.avg_error_interfered(ps, pi, N, R) - mean) <= 3 * se


def test_random_tuples_match_monte_carlo():
    rng = np.random.default_rng(2026)
    for k in range(10):
        n = int(rng.integers(50, 2000))
        rate = float(rng.uniform(0.05, 1.0))
        ps = float(fbl.db_to_lin(rng.uniform(0, 35)))
        pi = float(fbl.db_to_lin(rng.uniform(0, 35))) if k % 2 else None
        mean, se = mc_average(ps, pi, n, rate, seed=100 + k)
        val = fbl.avg_error(ps, n, rate, pi)
        assert abs(val - mean) <= 3 * se + 1e-12, (n, rate, ps, pi)


def test_interference_vanishing_and_ordering():
    ps = fbl.db_to_lin(20.0)
    direct = fbl.avg_error_direct(ps, N, R)
    assert fbl.avg_error_interfered(ps, 1e-9, N, R) == pytest.approx(direct, rel=1e-6)
    prev = direct
    for d in (10, 20, 30):
        cur = fbl.avg_error_interfered(ps, fbl.db_to_lin(d), N, R)
        assert cur >= prev
        prev = cur


def test_nested_route_agrees():
    for ps_db, pi_db in ((32, 30), (30, 32), (15, 12), (5, 20)):
        ps, pi = fbl.db_to_lin(ps_db), fbl.db_to_lin(pi_db)
        a = fbl.avg_error_interfered(ps, pi, N, R)
        b = fbl.avg_error_interfered(ps, pi, N, R, method="nested")
        assert a == pytest.approx(b, rel=1e-8, abs=1e-12)


def test_monotone_in_powers_grid():
    sig = fbl.db_to_lin(np.arange(0, 45, 5.0))
    direct = [fbl.avg_error_direct(p, N, R) for p in sig]
    assert all(a >= b for a, b in zip(direct, direct[1:]))
    inter = [fbl.avg_error_interfered(fbl.db_to_lin(25.0), p, N, R) for p in sig]
    assert all(a <= b for a, b in zip(inter, inter[1:]))


@pytest.mark.parametrize("target", [1e-1, 1e-2, 1e-3])
def test_required_power_round_trip(target):
    p = fbl.required_power(target, N, R)
    assert fbl.avg_error_direct(p, N, R) == pytest.approx(target, rel=1e-3)


def test_required_power_interfered_round_trip():
    p = fbl.required_power(1e-2, N, R, interferer=1e3)
    assert fbl.avg_error_interfered(p, 1e3, N, R) == pytest.approx(1e-2, rel=1e-3)


def test_required_power_ordering_and_infeasible():
    assert fbl.required_power(1e-3, N, R) > fbl.required_power(1e-2, N, R)
    with pytest.raises(fbl.InfeasibleTargetError) as info:
        fbl.required_power(1e-9, N, R, interferer=1e3)
    assert info.value.error_at_max > 1e-9


def test_convergence_error_carries_residual():
    err = fbl.ConvergenceError("x", 1e-3)
    assert err.residual == 1e-3 and "1.000e-03" in str(err)
