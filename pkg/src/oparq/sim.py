"""Slot-level Monte Carlo simulator and exact probability-tree enumeration.

Random streams are independent Philox generators keyed by source name, so
adding a new source never perturbs the draws of the existing ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import fbl
from .arq import LinkConfig, OutageProfile, TrafficModel, _as_policy

STREAMS = {
    "pu_arrival": 0,
    "access": 1,
    "fading": 2,
    "decode": 3,
    "su_arrival": 4,
    "budget": 5,
    "pu_fading": 6,
}

MAX_ENUM_TRIALS = 4


def stream(seed: int, name: str) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(STREAMS[name],))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# exact enumeration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExactResult:
    eps_s: float
    phi: float
    delay_pmf: np.ndarray
    collision_failure: float


def _trial_branches(q: Fraction, lp: Fraction, e1: Fraction, e2: Fraction, pu_forced: bool):
    """Leaves of one trial of the probability tree: (weight, pu_on, transmitted, decoded)."""
    pu_states = [(Fraction(1), True)] if pu_forced else [(lp, True), (1 - lp, False)]
    for w_pu, on in pu_states:
        if on:
            yield w_pu * q * (1 - e2), on, True, True
            yield w_pu * q * e2, on, True, False
            yield w_pu * (1 - q), on, False, False
        else:
            yield w_pu * (1 - e1), on, True, True
            yield w_pu * e1, on, True, False


def enumerate_exact(profile: OutageProfile, policy: Sequence[float]) -> ExactResult:
    """Brute-force expansion of the per-packet probability tree.

    Weights are exact rationals built from the float inputs.  The PU delay
    part tags one PU packet landing on each trial with probability 1/M.
    """
    q = [Fraction(float(v)) for v in _as_policy(policy)]
    M = len(q)
    if M > MAX_ENUM_TRIALS:
        raise ValueError(f"enumeration limited to M <= {MAX_ENUM_TRIALS} trials, got {M}")
    lp = Fraction(profile.lambda_p)
    e1, e2 = Fraction(profile.eps_s1), Fraction(profile.eps_s2)

    eps_s = Fraction(0)
    phi = Fraction(0)
    delay = [Fraction(0)] * M
    collide_fail = Fraction(0)

    def walk(m: int, w: Fraction, tx: int, tag: int, hit: int | None):
        # m: 1-based trial about to be played; hit: trial at which the tagged
        # PU packet collided with a failed SU transmission (a hit on the last
        # trial is lost without delay)
        nonlocal eps_s, phi, collide_fail
        if m > M:
            if tag == 0:
                eps_s += w
                phi += w * tx
            else:
                if hit is not None:
                    collide_fail += w
                    delay[M - hit] += w
                else:
                    delay[0] += w
            return
        for bw, on, sent, ok in _trial_branches(q[m - 1], lp, e1, e2, pu_forced=(m == tag)):
            nw = w * bw
            if nw == 0:
                continue
            new_hit = hit
            if m == tag and sent and not ok:
                new_hit = m
            if ok:
                if tag == 0:
                    phi += nw * (tx + 1)
                else:
                    delay[(m - hit) if hit is not None else 0] += nw
                continue
            walk(m + 1, nw, tx + int(sent), tag, new_hit)

    walk(1, Fraction(1), 0, 0, None)
    for t in range(1, M + 1):
        walk(1, Fraction(1, M), 0, t, None)

    return ExactResult(
        eps_s=float(eps_s),
        phi=float(phi),
        delay_pmf=np.array([float(d) for d in delay]),
        collision_failure=float(collide_fail),
    )


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    num_slots: int
    seed: int
    link: LinkConfig
    traffic: TrafficModel
    policy: tuple[float, ...]
    su_arrivals: str = "constant"
    # "independent": the PU decode sees its own fading draw, as the closed
    # forms assume; "shared": one draw per link per slot for both decodes
    fading: str = "independent"

    def __post_init__(self):
        if self.num_slots < 1:
            raise ValueError("num_slots must be at least 1")
        if self.su_arrivals == "constant_interarrival":
            object.__setattr__(self, "su_arrivals", "constant")
        if self.su_arrivals not in ("constant", "bernoulli"):
            raise ValueError(f"unknown SU arrival mode {self.su_arrivals!r}")
        if self.fading not in ("independent", "shared"):
            raise ValueError(f"unknown fading mode {self.fading!r}")
        q = _as_policy(self.policy)
        if len(q) != self.traffic.M_hi:
            raise ValueError(f"policy length {len(q)} != trial budget {self.traffic.M_hi}")
        object.__setattr__(self, "policy", tuple(float(v) for v in q))


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    count: int

    @property
    def ci95(self) -> float:
        return 1.96 * self.stderr


def _proportion(k: int, n: int) -> Estimate:
    if n == 0:
        return Estimate(math.nan, math.nan, 0)
    p = k / n
    return Estimate(p, math.sqrt(p * (1.0 - p) / n), n)


@dataclass
class SimReport:
    seed: int
    slots_simulated: int
    su_packets: int = 0
    su_failures: int = 0
    tx_sum: int = 0
    tx_sq_sum: int = 0
    tx_slots: int = 0
    pu_packets: int = 0
    pu_failures: int = 0
    pu_collision_losses: int = 0
    delay_counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    delay_overflow: int = 0

    @property
    def su_packet_outage(self) -> Estimate:
        return _proportion(self.su_failures, self.su_packets)

    @property
    def pu_outage(self) -> Estimate:
        return _proportion(self.pu_failures, self.pu_packets)

    @property
    def collision_failure(self) -> Estimate:
        return _proportion(self.pu_collision_losses, self.pu_packets)

    @property
    def empirical_phi(self) -> Estimate:
        n = self.su_packets
        if n == 0:
            return Estimate(math.nan, math.nan, 0)
        mean = self.tx_sum / n
        var = max(self.tx_sq_sum / n - mean * mean, 0.0)
        return Estimate(mean, math.sqrt(var / n), n)

    @property
    def occupancy(self) -> Estimate:
        return _proportion(self.tx_slots, self.slots_simulated)

    def delay_share(self, l: int) -> Estimate:
        return _proportion(int(self.delay_counts[l]), int(self.delay_counts.sum()))

    def as_record(self) -> dict:
        rec = {"seed": self.seed, "slots_simulated": self.slots_simulated}
        for name in ("su_packet_outage", "pu_outage", "empirical_phi", "collision_failure", "occupancy"):
            est = getattr(self, name)
            rec[name] = est.value
            rec[f"{name}_ci95"] = est.ci95
            rec[f"{name}_count"] = est.count
        for l, c in enumerate(self.delay_counts):
            rec[f"delay_{l}"] = int(c)
        rec["delay_overflow"] = self.delay_overflow
        return rec


def merge_reports(reports: Sequence[SimReport]) -> SimReport:
    """Pool independent replications by summing their counts."""
    if not reports:
        raise ValueError("nothing to merge")
    width = max(len(r.delay_counts) for r in reports)
    out = SimReport(seed=reports[0].seed, slots_simulated=0, delay_counts=np.zeros(width, dtype=np.int64))
    for r in reports:
        for name in ("slots_simulated", "su_packets", "su_failures", "tx_sum", "tx_sq_sum", "tx_slots",
                     "pu_packets", "pu_failures", "pu_collision_losses", "delay_overflow"):
            setattr(out, name, getattr(out, name) + getattr(r, name))
        out.delay_counts[: len(r.delay_counts)] += r.delay_counts
    return out


def _draw(cfg: SimConfig) -> dict[str, list]:
    N, link, tr = cfg.num_slots, cfg.link, cfg.traffic
    n, R, pp, ps = link.n, link.R, link.p_p, link.p_s

    pu_on = stream(cfg.seed, "pu_arrival").random(N) < tr.lambda_p
    access_u = stream(cfg.seed, "access").random(N)
    g = stream(cfg.seed, "fading").exponential(size=(2, N))
    xs, xp = g[0], g[1]
    if cfg.fading == "shared":
        xs2, xp2 = xs, xp
    else:
        g2 = stream(cfg.seed, "pu_fading").exponential(size=(2, N))
        xs2, xp2 = g2[0], g2[1]
    u = stream(cfg.seed, "decode").random((2, N))

    e_su = np.where(pu_on, fbl.conditional_error(ps * xs / (pp * xp + 1.0), n, R),
                    fbl.conditional_error(ps * xs, n, R))
    su_ok = u[0] >= e_su
    pu_fail_clean = u[1] < fbl.conditional_error(pp * xp2, n, R)
    pu_fail_int = u[1] < fbl.conditional_error(pp * xp2 / (ps * xs2 + 1.0), n, R)

    if cfg.su_arrivals == "bernoulli":
        su_arrival = stream(cfg.seed, "su_arrival").random(N) < tr.lambda_s
    else:
        su_arrival = np.zeros(N, dtype=bool)
    budget_hi = stream(cfg.seed, "budget").random(N) < tr.alpha
    return {
        "pu_on": pu_on.tolist(),
        "access_u": access_u.tolist(),
        "su_ok": su_ok.tolist(),
        "pu_fail_clean": pu_fail_clean.tolist(),
        "pu_fail_int": pu_fail_int.tolist(),
        "su_arrival": su_arrival.tolist(),
        "budget_hi": budget_hi.tolist(),
    }


def simulate(cfg: SimConfig) -> SimReport:
    """Run one replication.  Deterministic for a given config and seed.

    In ``constant`` mode a new SU packet arrives every ``budget`` slots (the
    SU always has a packet at the start of each budget window); in
    ``bernoulli`` mode packets arrive per slot into a FIFO buffer and the
    head-of-line packet starts in the slot after the previous one ends.
    """
    d = _draw(cfg)
    tr = cfg.traffic
    q = cfg.policy
    M_hi, M_lo = tr.M_hi, tr.M_lo
    rep = SimReport(seed=cfg.seed, slots_simulated=cfg.num_slots,
                    delay_counts=np.zeros(M_hi, dtype=np.int64))
    delay_counts = [0] * M_hi

    pu_on, access_u, su_ok = d["pu_on"], d["access_u"], d["su_ok"]
    pu_fail_clean, pu_fail_int = d["pu_fail_clean"], d["pu_fail_int"]
    su_arrival, budget_hi = d["su_arrival"], d["budget_hi"]
    constant = cfg.su_arrivals == "constant"

    # current SU packet state
    active = False
    trial = 0
    budget = 0
    window_end = 0  # constant mode: slot index where the next packet arrives
    tx = 0
    pending: list[tuple[int, bool, bool]] = []  # (arrival slot, clean fail, interfered fail)
    queue = 0

    su_packets = su_failures = tx_sum = tx_sq_sum = tx_slots = 0
    pu_packets = pu_failures = collision_losses = 0
    overflow = 0
    processed = 0

    def resolve(now: int, clean: bool):
        nonlocal pu_packets, pu_failures, collision_losses, overflow
        for arrived, f_clean, f_int in pending:
            l = now - arrived
            if l > M_hi - 1:
                overflow += 1
                l = M_hi - 1
            delay_counts[l] += 1
            pu_packets += 1
            if clean:
                pu_failures += f_clean
            else:
                pu_failures += f_int
                collision_losses += 1
        pending.clear()

    def finish(failed: bool):
        nonlocal active, su_packets, su_failures, tx_sum, tx_sq_sum
        su_packets += 1
        su_failures += failed
        tx_sum += tx
        tx_sq_sum += tx * tx
        active = False

    for t in range(cfg.num_slots):
        if constant:
            if t == window_end:
                budget = M_hi if budget_hi[t] else M_lo
                window_end = t + budget
                if window_end > cfg.num_slots:
                    break  # incomplete packet at the horizon
                active, trial, tx = True, 0, 0
        else:
            queue += su_arrival[t]
            if not active and queue:
                queue -= 1
                budget = M_hi if budget_hi[t] else M_lo
                if t + budget > cfg.num_slots:
                    break
                active, trial, tx = True, 0, 0
        processed = t + 1

        pu = pu_on[t]
        if not active:
            if pu:
                pu_packets += 1
                pu_failures += pu_fail_clean[t]
                delay_counts[0] += 1
            continue

        trial += 1
        sends = (not pu) or access_u[t] < q[trial - 1]
        if sends:
            tx += 1
            tx_slots += 1
        ok = sends and su_ok[t]
        last = trial == budget

        if pu:
            if sends and not ok and not last:
                pending.append((t, pu_fail_clean[t], pu_fail_int[t]))
            elif sends and not ok:
                # collision on the final trial: no waiting, decoded with interference
                pu_packets += 1
                collision_losses += 1
                delay_counts[0] += 1
                pu_failures += pu_fail_int[t]
            else:
                pu_packets += 1
                delay_counts[0] += 1
                pu_failures += pu_fail_clean[t]

        if ok:
            resolve(t, clean=True)
            finish(False)
        elif last:
            resolve(t, clean=False)
            finish(True)

    rep.slots_simulated = processed
    rep.su_packets, rep.su_failures = su_packets, su_failures
    rep.tx_sum, rep.tx_sq_sum, rep.tx_slots = tx_sum, tx_sq_sum, tx_slots
    rep.pu_packets, rep.pu_failures = pu_packets, pu_failures
    rep.pu_collision_losses = collision_losses
    rep.delay_counts = np.array(delay_counts, dtype=np.int64)
    rep.delay_overflow = overflow
    return rep
