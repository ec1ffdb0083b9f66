"""Finite-blocklength error probabilities over quasi-static Rayleigh fading.

The normal approximation gives the packet error at a fixed SINR; averaging
over the fading is done in the SINR domain using the closed-form SINR
distributions of the two links (interference-free and interfered).  Both
gains are unit-mean exponential.

All powers are linear and noise-normalized.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize
from scipy.special import erfc

LOG2E = math.log2(math.e)

# Q(9) ~ 1e-19: outside this window the conditional error is 0 or 1 to double precision.
_WINDOW_Z = 9.0
_QUAD_NODES = 128
_RESIDUAL_TOL = 1e-10


class ConvergenceError(ArithmeticError):
    """Quadrature did not reach the requested accuracy."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual estimate {residual:.3e})")
        self.residual = residual


class InfeasibleTargetError(ValueError):
    """An error target cannot be met inside the power search bracket."""

    def __init__(self, message: str, error_at_max: float):
        super().__init__(message)
        self.error_at_max = error_at_max


def db_to_lin(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def lin_to_db(x_lin):
    return 10.0 * np.log10(np.asarray(x_lin, dtype=float))


def q_function(x):
    """Gaussian upper-tail probability Q(x) = 0.5 erfc(x / sqrt(2))."""
    out = 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def dispersion(sigma):
    """Channel dispersion v(sigma) = (1 - 1/(1+sigma)^2) log2(e)^2."""
    s = np.asarray(sigma, dtype=float)
    if np.any(s < 0):
        raise ValueError("dispersion is undefined for negative SINR")
    # 1 - 1/(1+s)^2 written without cancellation near s = 0
    out = s * (2.0 + s) / (1.0 + s) ** 2 * LOG2E**2
    return float(out) if np.ndim(out) == 0 else out


def _q_argument(sigma: np.ndarray, n: int, R: float) -> np.ndarray:
    num = n * np.log1p(sigma) * LOG2E - n * R + 0.5 * math.log2(n)
    den = np.sqrt(n * dispersion(sigma))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = num / den
    # sigma = 0: dispersion vanishes, the limit is decided by the numerator sign
    at_zero = den == 0
    if np.any(at_zero):
        z = np.where(at_zero, np.sign(num) * np.inf, z)
    return z


def conditional_error(sigma, n: int, R: float):
    """Normal-approximation packet error at a fixed SINR, clamped to [0, 1].

    At sigma = 0 the result is 1 when nR > 0.5 log2(n), 0.5 at equality and
    0 otherwise.
    """
    _check_link(n, R)
    s = np.asarray(sigma, dtype=float)
    if np.any(s < 0):
        raise ValueError("SINR must be nonnegative")
    z = _q_argument(s, n, R)
    out = np.clip(0.5 * erfc(z / math.sqrt(2.0)), 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def sinr_threshold(n: int, R: float) -> float:
    """SINR at which the Q argument is zero (conditional error 0.5)."""
    return 2.0 ** (R - 0.5 * math.log2(n) / n) - 1.0


def _check_link(n, R):
    if n < 1 or R <= 0:
        raise ValueError(f"need n >= 1 and R > 0, got n={n}, R={R}")


@lru_cache(maxsize=256)
def _transition_window(n: int, R: float) -> tuple[float, float, float]:
    """SINR interval outside of which the conditional error is saturated."""
    s0 = sinr_threshold(n, R)

    def z(s):
        return float(_q_argument(np.asarray(s), n, R))

    if s0 <= 0.0:
        lo = 0.0
        s0 = 0.0
    else:
        tiny = s0 * 1e-12
        lo = 0.0 if z(tiny) > -_WINDOW_Z else optimize.brentq(lambda s: z(s) + _WINDOW_Z, tiny, s0, xtol=1e-15)
    hi = max(s0, 1e-6)
    while z(hi) < _WINDOW_Z:
        hi *= 2.0
    hi = optimize.brentq(lambda s: z(s) - _WINDOW_Z, max(s0, 1e-12), hi, xtol=1e-14)
    return lo, s0, hi


def _gauss_legendre(f: Callable, a: float, b: float, nodes: int) -> float:
    x, w = np.polynomial.legendre.leggauss(nodes)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return float(half * np.dot(w, f(mid + half * x)))


def _expect_over_sinr(cdf: Callable, pdf: Callable, n: int, R: float, nodes: int) -> float:
    """E[conditional_error(S)] for an SINR S with the given distribution.

    Below the transition window the error is 1, above it 0, so the
    expectation is P(S < lo) plus a bounded integral across the window.
    """
    lo, s0, hi = _transition_window(n, R)

    def g(s):
        return conditional_error(s, n, R) * pdf(s)

    pieces = [(lo, s0), (s0, hi)] if lo < s0 else [(lo, hi)]
    coarse = fine = 0.0
    for a, b in pieces:
        coarse += _gauss_legendre(g, a, b, nodes // 2)
        fine += _gauss_legendre(g, a, b, nodes)
    head = float(cdf(lo)) if lo > 0 else 0.0
    if abs(fine - coarse) <= _RESIDUAL_TOL:
        return min(1.0, max(0.0, head + fine))

    total, err = 0.0, 0.0
    for a, b in pieces:
        val, e = integrate.quad(lambda s: float(g(s)), a, b, epsabs=1e-13, epsrel=1e-10, limit=400)
        total += val
        err += e
    if err > _RESIDUAL_TOL:
        raise ConvergenceError("fading average did not converge", err)
    return min(1.0, max(0.0, head + total))


def avg_error_direct(p_signal: float, n: int, R: float, nodes: int = _QUAD_NODES) -> float:
    """Packet error averaged over Rayleigh fading without interference."""
    _check_link(n, R)
    if p_signal <= 0:
        raise ValueError("signal power must be positive")
    p = float(p_signal)
    return _expect_over_sinr(
        lambda s: -np.expm1(-s / p),
        lambda s: np.exp(-s / p) / p,
        n, R, nodes,
    )


def avg_error_interfered(
    p_signal: float,
    p_interferer: float,
    n: int,
    R: float,
    nodes: int = _QUAD_NODES,
    method: str = "cdf",
) -> float:
    """Packet error at SINR p_signal*X / (p_interferer*Y + 1), X, Y ~ Exp(1).

    ``method="cdf"`` integrates against the closed-form SINR law
    P(S > s) = exp(-s/p_signal) / (1 + s*p_interferer/p_signal).
    ``method="nested"`` averages the interference-free error over the
    interferer gain with Gauss-Laguerre nodes; it is slower and is kept as
    an independent route.
    """
    _check_link(n, R)
    if p_signal <= 0 or p_interferer <= 0:
        raise ValueError("powers must be positive")
    ps, a = float(p_signal), float(p_interferer) / float(p_signal)
    if method == "nested":
        return _nested_interfered(ps, float(p_interferer), n, R)
    if method != "cdf":
        raise ValueError(f"unknown method {method!r}")

    def cdf(s):
        c = s * a
        return (c - np.expm1(-s / ps)) / (1.0 + c)

    def pdf(s):
        c = 1.0 + s * a
        return np.exp(-s / ps) * (1.0 / (ps * c) + a / c**2)

    return _expect_over_sinr(cdf, pdf, n, R, nodes)


def _nested_interfered(ps: float, pi: float, n: int, R: float) -> float:
    def inner(y):
        return avg_error_direct(ps / (pi * y + 1.0), n, R)

    results = []
    for k in (64, 128):
        y, w = np.polynomial.laguerre.laggauss(k)
        results.append(float(sum(wi * inner(yi) for yi, wi in zip(y, w))))
    if abs(results[1] - results[0]) <= _RESIDUAL_TOL:
        return results[1]
    val, err = integrate.quad(lambda y: inner(y) * math.exp(-y), 0.0, np.inf, epsabs=1e-12, limit=400)
    if err > _RESIDUAL_TOL:
        raise ConvergenceError("nested fading average did not converge", err)
    return val


def avg_error(p_signal: float, n: int, R: float, interferer: Optional[float] = None) -> float:
    if interferer is None:
        return avg_error_direct(p_signal, n, R)
    return avg_error_interfered(p_signal, interferer, n, R)


def required_power(
    eps_target: float,
    n: int,
    R: float,
    interferer: Optional[float] = None,
    bracket_db: tuple[float, float] = (-10.0, 80.0),
    tol_db: float = 1e-3,
) -> float:
    """Smallest power (linear) whose fading-averaged error equals ``eps_target``.

    Bisection on the power in dB; the averaged error is monotone in power.
    """
    if not 0.0 < eps_target < 1.0:
        raise ValueError("eps_target must lie in (0, 1)")
    lo, hi = bracket_db
    e_hi = avg_error(db_to_lin(hi), n, R, interferer)
    if e_hi > eps_target:
        raise InfeasibleTargetError(
            f"target {eps_target:g} not reachable at {hi:g} dB (error there {e_hi:.3e})", e_hi
        )
    e_lo = avg_error(db_to_lin(lo), n, R, interferer)
    if e_lo < eps_target:
        raise InfeasibleTargetError(
            f"target {eps_target:g} already met below {lo:g} dB (error there {e_lo:.3e})", e_hi
        )
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        if avg_error(db_to_lin(mid), n, R, interferer) > eps_target:
            lo = mid
        else:
            hi = mid
    return float(db_to_lin(0.5 * (lo + hi)))
