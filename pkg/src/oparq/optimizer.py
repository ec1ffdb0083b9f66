"""SU access policies and per-scheme transmit powers."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import fbl
from .arq import LinkConfig, OutageProfile, pu_outage_overall, su_outage_bounds, transmission_load

# relative slack on the outage constraints so that bound-attaining policies
# are not rejected by the last-bit difference between a product and a power
_REL_SLACK = 1e-12


class InfeasibleError(ValueError):
    def __init__(self, message: str, constraint: str):
        super().__init__(message)
        self.constraint = constraint


@dataclass(frozen=True)
class OptimizerConfig:
    eps_s_t: float
    eps_p_t: float
    grid_step: float = 0.01
    monotone: bool = True
    include_equal: bool = True

    def __post_init__(self):
        if not 0.0 < self.grid_step <= 1.0:
            raise ValueError("grid_step must lie in (0, 1]")
        levels = 1.0 / self.grid_step
        if abs(levels - round(levels)) > 1e-9:
            raise ValueError(f"grid_step {self.grid_step} does not divide 1")

    @property
    def levels(self) -> int:
        return int(round(1.0 / self.grid_step)) + 1


@dataclass(frozen=True)
class SchemePowers:
    open_loop: float
    non_opportunistic: float
    opportunistic_equal: float
    opportunistic_optimal: float

    def as_db(self) -> dict[str, float]:
        return {k: float(fbl.lin_to_db(v)) for k, v in self.__dict__.items()}


@dataclass(frozen=True)
class EqualAccess:
    q: float
    clamped: bool  # target above the q = 0 outage; q = 0 returned


def equal_access(eps_s_t: float, profile: OutageProfile, M: int) -> EqualAccess:
    """Common access probability meeting ``eps_s_t`` with equality."""
    lower, upper = su_outage_bounds(profile, M)
    if eps_s_t < lower * (1.0 - _REL_SLACK):
        raise InfeasibleError(
            f"target {eps_s_t:g} below the always-transmit outage {lower:.6g}", "eps_s"
        )
    if eps_s_t >= upper:
        return EqualAccess(0.0, eps_s_t > upper)
    if profile.beta == 0.0:
        return EqualAccess(0.0, False)
    q = (eps_s_t ** (1.0 / M) - profile.T) / profile.beta
    return EqualAccess(min(1.0, max(0.0, q)), False)


def _grid(levels: int, M: int, monotone: bool) -> np.ndarray:
    if monotone:
        combos = itertools.combinations_with_replacement(range(levels), M)
    else:
        combos = itertools.product(range(levels), repeat=M)
    flat = np.fromiter(itertools.chain.from_iterable(combos), dtype=np.int32)
    return flat.reshape(-1, M)


def evaluate_policies(Q: np.ndarray, profile: OutageProfile) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized (eps_s, phi, eps_p) for a batch of policies (rows of Q)."""
    lp = profile.lambda_p
    theta = profile.beta * Q + profile.T
    reach = np.cumprod(theta, axis=1)
    eps_s = reach[:, -1]
    reach = np.concatenate([np.ones((Q.shape[0], 1)), reach[:, :-1]], axis=1)
    phi = np.sum((lp * Q + (1.0 - lp)) * reach, axis=1)
    M = Q.shape[1]
    share = phi / M
    eps_p = profile.eps_p1 + share * eps_s * (profile.eps_p2 - profile.eps_p1)
    return eps_s, phi, eps_p


def optimize_access(cfg: OptimizerConfig, profile: OutageProfile, M: int) -> np.ndarray:
    """Policy minimizing phi subject to both outage targets.

    Exhaustive search over {0, step, ..., 1}^M, by default restricted to
    non-decreasing vectors; the equal-access solution is added as a
    candidate so the result never does worse than it.  Ties go to the
    lexicographically smallest vector.
    """
    idx = _grid(cfg.levels, M, cfg.monotone)
    Q = idx * cfg.grid_step
    if cfg.include_equal:
        try:
            eq = equal_access(cfg.eps_s_t, profile, M)
            Q = np.vstack([Q, np.full((1, M), eq.q)])
        except InfeasibleError:
            pass
    eps_s, phi, eps_p = evaluate_policies(Q, profile)
    ok_s = eps_s <= cfg.eps_s_t * (1.0 + _REL_SLACK)
    ok_p = eps_p <= cfg.eps_p_t * (1.0 + _REL_SLACK)
    feasible = ok_s & ok_p
    if not feasible.any():
        binding = "eps_s" if not ok_s.any() else ("eps_p" if not ok_p.any() else "eps_s+eps_p")
        raise InfeasibleError(f"no policy on the grid meets the targets (binding: {binding})", binding)
    cand = np.flatnonzero(feasible)
    best = phi[cand].min()
    ties = cand[phi[cand] == best]
    # lexicographic order over the tied rows
    order = np.lexsort(Q[ties].T[::-1])
    return Q[ties[order[0]]].copy()


def power_open_loop(eps_s_t: float, link: LinkConfig, lambda_p: float) -> float:
    """Arrival-weighted single-shot power: interfered with prob. lambda_p."""
    clean = fbl.required_power(eps_s_t, link.n, link.R) if lambda_p < 1.0 else 0.0
    hit = fbl.required_power(eps_s_t, link.n, link.R, interferer=link.p_p) if lambda_p > 0.0 else 0.0
    return lambda_p * hit + (1.0 - lambda_p) * clean


def trials_non_opportunistic(profile: OutageProfile, eps_s_t: float) -> float:
    """Real-valued number of always-on trials reaching ``eps_s_t``."""
    base = profile.always_on_failure
    if not 0.0 < base < 1.0:
        raise InfeasibleError(f"per-trial failure {base} outside (0, 1)", "eps_s")
    if not 0.0 < eps_s_t < 1.0:
        raise ValueError("eps_s_t must lie in (0, 1)")
    return math.log(eps_s_t) / math.log(base)


def power_non_opportunistic(profile: OutageProfile, eps_s_t: float, p_s: float) -> tuple[float, float]:
    m_no = trials_non_opportunistic(profile, eps_s_t)
    return m_no, m_no * p_s


def power_non_opportunistic_integer(profile: OutageProfile, eps_s_t: float, p_s: float) -> tuple[int, float]:
    m_no = math.ceil(trials_non_opportunistic(profile, eps_s_t) - 1e-12)
    return m_no, m_no * p_s


def power_opportunistic(policy, profile: OutageProfile, p_s: float) -> float:
    return transmission_load(policy, profile) * p_s


def scheme_powers(
    link: LinkConfig,
    profile: OutageProfile,
    M: int,
    cfg: OptimizerConfig,
    optimal_policy: Optional[np.ndarray] = None,
) -> SchemePowers:
    eq = equal_access(cfg.eps_s_t, profile, M)
    if optimal_policy is None:
        optimal_policy = optimize_access(cfg, profile, M)
    return SchemePowers(
        open_loop=power_open_loop(cfg.eps_s_t, link, profile.lambda_p),
        non_opportunistic=power_non_opportunistic(profile, cfg.eps_s_t, link.p_s)[1],
        opportunistic_equal=power_opportunistic(np.full(M, eq.q), profile, link.p_s),
        opportunistic_optimal=power_opportunistic(optimal_policy, profile, link.p_s),
    )
