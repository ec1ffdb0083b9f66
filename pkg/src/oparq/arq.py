"""Closed-form ARQ analysis of the opportunistic secondary user.

Trial m of an SU packet fails with probability theta_m = beta*q_m + T, where
the PU is active with probability lambda_p and the SU then transmits with
probability q_m.  The SU outage is the product of the step factors over the
trial budget.  Note that ``su_outage`` is symmetric in the access vector,
while ``transmission_load`` and ``delay_pmf`` depend on its order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import fbl

_TOL = 1e-12


class InconsistentProfileError(ValueError):
    pass


@dataclass(frozen=True)
class LinkConfig:
    n: int
    R: float
    p_p: float
    p_s: float

    def __post_init__(self):
        if self.n < 1 or self.R <= 0 or self.p_p <= 0 or self.p_s <= 0:
            raise ValueError(f"invalid link parameters: {self}")

    @classmethod
    def from_db(cls, n: int, R: float, p_p_db: float, p_s_db: float) -> "LinkConfig":
        return cls(n, R, float(fbl.db_to_lin(p_p_db)), float(fbl.db_to_lin(p_s_db)))


@dataclass(frozen=True)
class OutageProfile:
    """Per-trial error probabilities with and without a concurrent PU."""

    eps_s1: float
    eps_s2: float
    eps_p1: float
    eps_p2: float
    lambda_p: float

    def __post_init__(self):
        for name in ("eps_s1", "eps_s2", "eps_p1", "eps_p2", "lambda_p"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InconsistentProfileError(f"{name}={v} outside [0, 1]")
        if self.eps_s2 < self.eps_s1 or self.eps_p2 < self.eps_p1:
            raise InconsistentProfileError(
                "interference cannot lower the error probability "
                f"(eps_s1={self.eps_s1}, eps_s2={self.eps_s2}, eps_p1={self.eps_p1}, eps_p2={self.eps_p2})"
            )

    @property
    def beta(self) -> float:
        return self.lambda_p * (self.eps_s2 - 1.0)

    @property
    def T(self) -> float:
        return self.lambda_p * (1.0 - self.eps_s1) + self.eps_s1

    @property
    def always_on_failure(self) -> float:
        """beta + T, the per-trial failure when the SU always transmits."""
        return self.lambda_p * self.eps_s2 + (1.0 - self.lambda_p) * self.eps_s1

    def with_lambda(self, lambda_p: float) -> "OutageProfile":
        return OutageProfile(self.eps_s1, self.eps_s2, self.eps_p1, self.eps_p2, lambda_p)

    @classmethod
    def from_link(cls, link: LinkConfig, lambda_p: float) -> "OutageProfile":
        """Fading-averaged errors for both users, with and without interference."""
        return cls(
            eps_s1=fbl.avg_error_direct(link.p_s, link.n, link.R),
            eps_s2=fbl.avg_error_interfered(link.p_s, link.p_p, link.n, link.R),
            eps_p1=fbl.avg_error_direct(link.p_p, link.n, link.R),
            eps_p2=fbl.avg_error_interfered(link.p_p, link.p_s, link.n, link.R),
            lambda_p=lambda_p,
        )


@dataclass(frozen=True)
class TrafficModel:
    lambda_p: float
    lambda_s: float
    M_hi: int
    M_lo: int
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.lambda_p <= 1.0:
            raise ValueError("lambda_p must be a probability")
        M_hi, M_lo, alpha_o = derive_schedule(self.lambda_s)
        if (self.M_hi, self.M_lo) != (M_hi, M_lo):
            raise ValueError(f"budgets must be ({M_hi}, {M_lo}) for lambda_s={self.lambda_s}")
        if not alpha_o - 1e-12 <= self.alpha < 1.0 and not (M_hi == M_lo and self.alpha == 0.0):
            raise ValueError(f"alpha must lie in [{alpha_o}, 1)")

    @classmethod
    def build(cls, lambda_p: float, lambda_s: float, alpha: float | None = None) -> "TrafficModel":
        M_hi, M_lo, alpha_o = derive_schedule(lambda_s)
        return cls(lambda_p, lambda_s, M_hi, M_lo, alpha_o if alpha is None else alpha)

    @property
    def mean_budget(self) -> float:
        return self.alpha * self.M_hi + (1.0 - self.alpha) * self.M_lo


@dataclass
class DelayPmf:
    mass: np.ndarray
    residual: float = field(init=False)

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=float)
        self.residual = float(1.0 - self.mass.sum())

    @property
    def expected(self) -> float:
        return float(np.dot(np.arange(len(self.mass)), self.mass))


def derive_schedule(lambda_s: float) -> tuple[int, int, float]:
    """Trial budgets (ceil, floor of 1/lambda_s) and the minimal ceil-fraction.

    The minimal fraction is the fractional part of 1/lambda_s, which makes the
    mean budget equal 1/lambda_s.
    """
    if not 0.0 < lambda_s <= 1.0:
        raise ValueError("lambda_s must lie in (0, 1]")
    inv = 1.0 / Fraction(lambda_s).limit_denominator(10**9)
    if abs(inv - round(inv)) < 1e-9 * inv:
        inv = Fraction(round(inv))
    M_lo = math.floor(inv)
    M_hi = math.ceil(inv)
    return M_hi, M_lo, float(inv - M_lo)


def _as_policy(q: Sequence[float]) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.ndim != 1 or q.size < 1:
        raise ValueError("access policy must be a non-empty vector")
    if np.any((q < 0) | (q > 1)):
        raise ValueError("access probabilities must lie in [0, 1]")
    return q


def step_factor(q_m, beta: float, T: float):
    """Per-trial failure probability beta*q_m + T."""
    theta = beta * np.asarray(q_m, dtype=float) + T
    if np.any(theta < -_TOL) or np.any(theta > 1.0 + _TOL):
        raise InconsistentProfileError(f"step factor outside [0, 1]: {theta}")
    theta = np.clip(theta, 0.0, 1.0)
    return float(theta) if np.ndim(theta) == 0 else theta


def step_factors(policy, profile: OutageProfile) -> np.ndarray:
    return np.atleast_1d(step_factor(_as_policy(policy), profile.beta, profile.T))


def su_outage(policy, profile: OutageProfile) -> float:
    return float(np.prod(step_factors(policy, profile)))


def su_outage_bounds(profile: OutageProfile, M: int) -> tuple[float, float]:
    """(lower, upper) = ((beta+T)^M, T^M), attained by q = 1 and q = 0."""
    if M < 1:
        raise ValueError("M must be at least 1")
    return profile.always_on_failure**M, profile.T**M


def reach_probability(m: int, policy, profile: OutageProfile) -> float:
    """Probability that trial ``m`` (1-based, up to M+1) is reached."""
    theta = step_factors(policy, profile)
    if not 1 <= m <= len(theta) + 1:
        raise ValueError(f"trial index {m} outside [1, {len(theta) + 1}]")
    return float(np.prod(theta[: m - 1]))


def transmission_load(policy, profile: OutageProfile) -> float:
    """Expected number of actual SU transmissions per packet (phi)."""
    q = _as_policy(policy)
    theta = step_factors(q, profile)
    reach = np.concatenate(([1.0], np.cumprod(theta)[:-1]))
    lp = profile.lambda_p
    return float(np.dot(lp * q + (1.0 - lp), reach))


def pu_outage_simultaneous(eps_s: float, eps_p1: float, eps_p2: float) -> float:
    return (1.0 - eps_s) * eps_p1 + eps_s * eps_p2


def pu_outage_overall(phi: float, M: int, eps_s: float, eps_p1: float, eps_p2: float) -> float:
    """PU outage with collision probability phi/M.

    Affine in phi with slope eps_s*(eps_p2 - eps_p1)/M.
    """
    if phi < 0 or phi > M * (1.0 + _TOL):
        raise ValueError(f"phi={phi} outside [0, M={M}]")
    share = phi / M
    return share * pu_outage_simultaneous(eps_s, eps_p1, eps_p2) + (1.0 - share) * eps_p1


def pu_collision_failure(policy, profile: OutageProfile) -> float:
    """P(PU packet collides with an SU transmission whose packet is then lost).

    The PU packet lands on trial m with probability 1/M; the SU must have
    reached m, transmitted (q_m), failed under interference (eps_s2), and
    failed every remaining trial.
    """
    q = _as_policy(policy)
    theta = step_factors(q, profile)
    M = len(q)
    total = 0.0
    for m in range(M):
        others = np.prod(np.delete(theta, m))
        total += q[m] * profile.eps_s2 * others
    return float(total / M)


def pu_outage_conditioned(policy, profile: OutageProfile) -> float:
    """PU outage conditioned on the actual collision event.

    Companion to ``pu_outage_overall``: that form uses phi/M and the
    unconditional SU outage, which treats the collision and the SU loss as
    independent.  This one is what a slot-level simulation converges to.
    """
    j = pu_collision_failure(policy, profile)
    return profile.eps_p1 + j * (profile.eps_p2 - profile.eps_p1)


def delay_pmf(policy, profile: OutageProfile) -> DelayPmf:
    """PU decoding delay in slots, l = 0..M-1.

    A PU packet lands on SU trial m with probability 1/M.  If the SU reached
    m, transmitted and failed, and m < M, the decoder waits for the SU to be
    decoded (or for its last trial) before cancelling it.
    """
    q = _as_policy(policy)
    theta = step_factors(q, profile)
    M = len(q)
    lp, e1, e2 = profile.lambda_p, profile.eps_s1, profile.eps_s2
    success = lp * q * (1.0 - e2) + (1.0 - lp) * (1.0 - e1)

    def prod_except(lo: int, hi: int, skip: int) -> float:
        # product of theta_i for 1-based i in [lo, hi], i != skip
        idx = [i - 1 for i in range(lo, hi + 1) if i != skip]
        return float(np.prod(theta[idx])) if idx else 1.0

    mass = np.zeros(M)
    zero = 1.0
    for m in range(1, M):
        reach = prod_except(1, m - 1, 0)
        zero += (1.0 - reach) + reach * (q[m - 1] * (1.0 - e2) + (1.0 - q[m - 1]))
    mass[0] = zero / M
    for l in range(1, M):
        acc = 0.0
        for m in range(1, M - l):
            acc += q[m - 1] * e2 * success[m + l - 1] * prod_except(1, m + l - 1, m)
        last = M - l
        acc += q[last - 1] * e2 * prod_except(1, last + l - 1, last)
        mass[l] = acc / M
    if np.any(mass < -_TOL) or np.any(mass > 1.0 + _TOL):
        raise InconsistentProfileError(f"delay mass outside [0, 1]: {mass}")
    return DelayPmf(mass)
