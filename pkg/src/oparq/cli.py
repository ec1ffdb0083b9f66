"""Command-line runner: figure sweeps, optimization, simulation, validation."""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import fbl
from .arq import (
    InconsistentProfileError,
    OutageProfile,
    delay_pmf,
    pu_outage_conditioned,
    pu_outage_overall,
    su_outage,
    su_outage_bounds,
    transmission_load,
)
from .optimizer import (
    InfeasibleError,
    OptimizerConfig,
    equal_access,
    optimize_access,
    power_non_opportunistic,
    power_open_loop,
    power_opportunistic,
)
from .scenario import Scenario
from .sim import SimConfig, SimReport, merge_reports, simulate

ANALYZE_COLUMNS = ["lambda_p", "eps_s", "eps_sl", "eps_su", "phi", "eps_p", "expected_delay", "status"]
POWER_COLUMNS = ["lambda_p", "p_open_loop_dB", "p_non_opp_dB", "p_opp_equal_dB", "p_opp_optimal_dB", "status"]
VALIDATE_COLUMNS = ["lambda_p", "quantity", "analytical", "empirical", "stderr", "z", "pass"]

EXIT_OK, EXIT_VALIDATION, EXIT_INFEASIBLE, EXIT_INPUT = 0, 1, 2, 3
Z_LIMIT = 3.0


class EmptyReportError(ValueError):
    pass


def _status(exc: InfeasibleError) -> str:
    return f"INFEASIBLE({exc.constraint})"


def base_profile(scn: Scenario) -> OutageProfile:
    return OutageProfile.from_link(scn.link, 0.0)


def optimizer_config(scn: Scenario) -> OptimizerConfig:
    return OptimizerConfig(scn.eps_s_t, scn.eps_p_t, grid_step=scn.grid_step, monotone=scn.monotone)


def resolve_policy(scn: Scenario, profile: OutageProfile, source: Optional[str] = None) -> np.ndarray:
    source = source or scn.policy_source
    if source == "explicit":
        return np.asarray(scn.q, dtype=float)
    if source == "equal":
        return np.full(scn.M, equal_access(scn.eps_s_t, profile, scn.M).q)
    return optimize_access(optimizer_config(scn), profile, scn.M)


def _parallel_map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_csv(rows: Iterable[dict], columns: Sequence[str], out=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c, "")) for c in columns])
    text = buf.getvalue()
    if out is not None:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


# -- analyze ---------------------------------------------------------------


def _analyze_point(args) -> dict:
    scn, base, lp = args
    profile = base.with_lambda(lp)
    lower, upper = su_outage_bounds(profile, scn.M)
    row = {"lambda_p": lp, "eps_sl": lower, "eps_su": upper}
    try:
        q = resolve_policy(scn, profile)
    except InfeasibleError as exc:
        row.update(eps_s=math.nan, phi=math.nan, eps_p=math.nan, expected_delay=math.nan, status=_status(exc))
        return row
    eps_s = su_outage(q, profile)
    phi = transmission_load(q, profile)
    row.update(
        eps_s=eps_s,
        phi=phi,
        eps_p=pu_outage_overall(phi, scn.M, eps_s, profile.eps_p1, profile.eps_p2),
        expected_delay=delay_pmf(q, profile).expected,
        status="OK",
    )
    return row


def run_analyze(scn: Scenario, jobs: int = 1) -> list[dict]:
    base = base_profile(scn)
    return _parallel_map(_analyze_point, [(scn, base, lp) for lp in scn.lambda_points()], jobs)


# -- power sweep -----------------------------------------------------------


def _power_point(args) -> dict:
    scn, base, lp = args
    profile = base.with_lambda(lp)
    row = {"lambda_p": lp}
    cfg = optimizer_config(scn)
    link = scn.link
    try:
        eq = equal_access(cfg.eps_s_t, profile, scn.M)
        q_opt = optimize_access(cfg, profile, scn.M)
        row.update(
            p_open_loop_dB=float(fbl.lin_to_db(power_open_loop(cfg.eps_s_t, link, lp))),
            p_non_opp_dB=float(fbl.lin_to_db(power_non_opportunistic(profile, cfg.eps_s_t, link.p_s)[1])),
            p_opp_equal_dB=float(fbl.lin_to_db(power_opportunistic(np.full(scn.M, eq.q), profile, link.p_s))),
            p_opp_optimal_dB=float(fbl.lin_to_db(power_opportunistic(q_opt, profile, link.p_s))),
            status="OK",
        )
    except InfeasibleError as exc:
        row["status"] = _status(exc)
    except fbl.InfeasibleTargetError:
        row["status"] = "INFEASIBLE(power)"
    return row


def run_power_sweep(scn: Scenario, jobs: int = 1) -> list[dict]:
    base = base_profile(scn)
    return _parallel_map(_power_point, [(scn, base, lp) for lp in scn.lambda_points()], jobs)


# -- optimize --------------------------------------------------------------


def optimize_columns(M: int) -> list[str]:
    return ["lambda_p"] + [f"q_{m}" for m in range(1, M + 1)] + ["phi", "eps_s", "eps_p", "status"]


def _optimize_point(args) -> dict:
    scn, base, lp = args
    profile = base.with_lambda(lp)
    row = {"lambda_p": lp}
    try:
        q = resolve_policy(scn, profile)
    except InfeasibleError as exc:
        row["status"] = _status(exc)
        return row
    eps_s, phi = su_outage(q, profile), transmission_load(q, profile)
    row.update({f"q_{m + 1}": float(v) for m, v in enumerate(q)})
    row.update(phi=phi, eps_s=eps_s,
               eps_p=pu_outage_overall(phi, scn.M, eps_s, profile.eps_p1, profile.eps_p2), status="OK")
    return row


def run_optimize(scn: Scenario, jobs: int = 1) -> list[dict]:
    base = base_profile(scn)
    return _parallel_map(_optimize_point, [(scn, base, lp) for lp in scn.lambda_points()], jobs)


# -- simulate / validate ---------------------------------------------------


def simulate_point(scn: Scenario, lp: float, policy) -> SimReport:
    sim = scn.sim
    if sim is None or sim.num_slots < 1:
        raise EmptyReportError("simulation needs a [sim] block with num_slots >= 1")
    reports = []
    for r in range(sim.replications):
        cfg = SimConfig(sim.num_slots, sim.seed + r, scn.link, scn.traffic(lp), tuple(policy),
                        su_arrivals=sim.arrivals, fading=sim.fading)
        reports.append(simulate(cfg))
    rep = merge_reports(reports)
    if rep.su_packets == 0:
        raise EmptyReportError(f"{sim.num_slots} slots completed no SU packet")
    return rep


def _simulate_point(args) -> dict:
    scn, base, lp = args
    profile = base.with_lambda(lp)
    try:
        q = resolve_policy(scn, profile)
    except InfeasibleError as exc:
        return {"lambda_p": lp, "status": _status(exc)}
    rec = {"lambda_p": lp}
    rec.update(simulate_point(scn, lp, q).as_record())
    rec["status"] = "OK"
    return rec


def simulate_columns(M: int) -> list[str]:
    cols = ["lambda_p", "seed", "slots_simulated"]
    for name in ("su_packet_outage", "pu_outage", "empirical_phi", "collision_failure", "occupancy"):
        cols += [name, f"{name}_ci95", f"{name}_count"]
    cols += [f"delay_{l}" for l in range(M)] + ["delay_overflow", "status"]
    return cols


def run_simulate(scn: Scenario, jobs: int = 1) -> list[dict]:
    base = base_profile(scn)
    return _parallel_map(_simulate_point, [(scn, base, lp) for lp in scn.lambda_points()], jobs)


def compare(quantity: str, lp: float, analytical: float, empirical: float, stderr: float) -> dict:
    if stderr > 0:
        z = (empirical - analytical) / stderr
        ok = abs(z) <= Z_LIMIT
    else:
        z = 0.0 if abs(empirical - analytical) <= 1e-12 else math.inf
        ok = z == 0.0
    return {"lambda_p": lp, "quantity": quantity, "analytical": analytical, "empirical": empirical,
            "stderr": stderr, "z": z, "pass": ok}


def _binomial_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n) if n else math.nan


def validate_point(scn: Scenario, profile: OutageProfile, q) -> list[dict]:
    """Analytical vs empirical rows for one arrival rate, 3-sigma criterion.

    Proportions use the binomial standard error under the analytical value;
    phi uses the empirical standard error.
    """
    lp = profile.lambda_p
    rep = simulate_point(scn, lp, q)
    M = scn.M
    eps_s = su_outage(q, profile)
    phi = transmission_load(q, profile)
    pmf = delay_pmf(q, profile)
    n_su, n_pu = rep.su_packets, rep.pu_packets
    n_delay = int(rep.delay_counts.sum())
    rows = [
        compare("eps_s", lp, eps_s, rep.su_packet_outage.value, _binomial_se(eps_s, n_su)),
        compare("phi", lp, phi, rep.empirical_phi.value, rep.empirical_phi.stderr),
    ]
    eq31 = pu_outage_overall(phi, M, eps_s, profile.eps_p1, profile.eps_p2)
    cond = pu_outage_conditioned(q, profile)
    rows.append(compare("eps_p", lp, eq31, rep.pu_outage.value, _binomial_se(eq31, n_pu)))
    rows.append(compare("eps_p_conditioned", lp, cond, rep.pu_outage.value, _binomial_se(cond, n_pu)))
    for l in range(M):
        p = float(pmf.mass[l])
        rows.append(compare(f"delay_{l}", lp, p, rep.delay_share(l).value, _binomial_se(p, n_delay)))
    return rows


def _validate_point(args) -> list[dict]:
    scn, base, lp = args
    profile = base.with_lambda(lp)
    return validate_point(scn, profile, resolve_policy(scn, profile))


def run_validate(scn: Scenario, jobs: int = 1, profile_override: Optional[dict] = None) -> list[dict]:
    """Simulate every sweep point and compare against the closed forms.

    ``profile_override`` replaces the link-derived error probabilities; it
    is validated before any simulation starts.
    """
    if scn.sim is None or scn.sim.num_slots < 1:
        raise EmptyReportError("simulation needs a [sim] block with num_slots >= 1")
    if profile_override is not None:
        base = OutageProfile(lambda_p=0.0, **profile_override)
    else:
        base = base_profile(scn)
    chunks = _parallel_map(_validate_point, [(scn, base, lp) for lp in scn.lambda_points()], jobs)
    return [row for chunk in chunks for row in chunk]


# -- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oparq", description=__doc__)
    p.add_argument("command", choices=["analyze", "power-sweep", "optimize", "simulate", "validate", "echo-config"])
    p.add_argument("--scenario", required=True, help="scenario file (INI)")
    p.add_argument("--out", help="output path (default: [output] path, else stdout)")
    p.add_argument("--seed", type=int, help="override the simulation seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for sweep points")
    p.add_argument("--grid-step", type=float, help="override the optimizer grid step")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scn = Scenario.load(args.scenario).with_overrides(seed=args.seed, grid_step=args.grid_step)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = args.out or scn.output

    if args.command == "echo-config":
        text = scn.dumps()
        if out:
            with open(out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK

    runners = {
        "analyze": (run_analyze, ANALYZE_COLUMNS),
        "power-sweep": (run_power_sweep, POWER_COLUMNS),
        "optimize": (run_optimize, optimize_columns(scn.M)),
        "simulate": (run_simulate, simulate_columns(scn.M)),
        "validate": (run_validate, VALIDATE_COLUMNS),
    }
    fn, columns = runners[args.command]
    try:
        rows = fn(scn, jobs=args.jobs)
    except (InconsistentProfileError, EmptyReportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    text = write_csv(rows, columns, out)
    if not out:
        sys.stdout.write(text)

    if args.command == "validate":
        return EXIT_OK if all(r["pass"] for r in rows) else EXIT_VALIDATION
    if rows and all(r.get("status", "OK") != "OK" for r in rows):
        return EXIT_INFEASIBLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
