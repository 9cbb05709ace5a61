# verify.py
"""The property suite run by `cli verify`, at reduced replica counts."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from analysis import (
    dbar_bounds,
    estimate_discrepancy,
    estimate_max_tail,
    mixing_check,
    rw_exponent,
    stopping_rows,
    supermartingale_violations,
)
from assign import sample_many
from interaction import (
    InteractionModel,
    NearestNeighborKernel,
    Status,
    alpha,
    check_conditions,
    gamma,
    lambda_weight,
)
from lattice import Site, ball
from oracle import conditional_consistency, transfer_matrix_1d
from rates import decomposition_check, detailed_balance_residual, gibbs_conditional, update_prob
from replicas import fan_out
from rng import Purpose, stream
from sketch import run_backward, stop_statistics
from utils_serialization import dumps

logger = logging.getLogger(__name__)

IDENTITY_TOL = 1e-10
DECOMPOSITION_CASES = 1000
MAX_ELL = 8
MAX_ANNULUS = 8
CONTROL_RESOLUTION = 8.0
CONTROL_MAX_REPLICAS = 2_000_000


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float | None = None
    detail: str = ""


def skip_range_one(m: InteractionModel, i: Site, k: int, sigma: Mapping[Site, int]) -> float:
    """Broken update used as a negative control: range-1 events never flip."""
    return 0.0 if k == 1 else update_prob(m, i, k, sigma)


def _random_window(gen: np.random.Generator, sites) -> dict[Site, int]:
    spins = gen.integers(0, 2, size=len(sites)) * 2 - 1
    return {s: int(v) for s, v in zip(sites, spins)}


def check_normalization(m: InteractionModel) -> CheckResult:
    worst = 0.0
    for i in m.sites:
        rng = m.potential.max_range(i)
        K = rng if rng is not None else 64
        mass = math.fsum(lambda_weight(m, i, k) for k in range(K + 1))
        worst = max(worst, abs(mass + (1.0 - alpha(m, i, K)) - 1.0))
    return CheckResult("lambda_normalization", worst <= IDENTITY_TOL, worst)


def check_decomposition(m: InteractionModel, seed: int) -> CheckResult:
    gen = stream(seed, 0, Purpose.VERIFY)
    sites = list(m.sites)
    worst = 0.0
    for _ in range(DECOMPOSITION_CASES):
        i = sites[int(gen.integers(len(sites)))]
        ell = int(gen.integers(0, MAX_ELL + 1))
        sigma = _random_window(gen, list(ball(i, ell)))
        worst = max(worst, decomposition_check(m, i, sigma, ell))
    return CheckResult("decomposition", worst <= IDENTITY_TOL, worst, f"{DECOMPOSITION_CASES} cases, ell <= {MAX_ELL}")


def check_detailed_balance(m: InteractionModel, seed: int) -> CheckResult | None:
    gen = stream(seed, 1, Purpose.VERIFY)
    worst = 0.0
    for i in m.sites:
        rng = m.potential.max_range(i)
        if rng is None:
            return None
        for _ in range(100):
            worst = max(worst, detailed_balance_residual(m, i, _random_window(gen, list(ball(i, rng)))))
    return CheckResult("detailed_balance", worst <= 1e-12, worst)


def check_stopping(
    m: InteractionModel, seed: int, replicas: int, threads: int, max_events: int | None = None
) -> list[CheckResult]:
    start = [next(iter(m.sites))]
    records = fan_out(lambda r: run_backward(m, start, seed, r, max_events), replicas, threads)
    rows = stopping_rows(stop_statistics(records, (1.0, 2.0, 4.0)), gamma(m))
    out = [CheckResult(f"{r.quantity}{' ' + r.parameter if r.parameter else ''}", bool(r.passed), r.value,
                       f"bound {r.bound!r}") for r in rows]
    violations = sum(supermartingale_violations(m, rec) for rec in records)
    out.append(CheckResult("supermartingale_domination", violations == 0, float(violations)))
    return out


def check_coupling(
    m: InteractionModel, seed: int, replicas: int, threads: int, max_events: int | None = None
) -> list[CheckResult]:
    out = []
    rng = m.max_range()
    o = m.origin
    for L in (1, 2, 4):
        est = estimate_discrepancy(m, L, o, replicas, seed, threads, max_events)
        ok = est.passed
        if rng is not None and L >= rng:
            ok = ok and est.disagreements == 0
        out.append(CheckResult(f"discrepancy L={L}", ok, est.estimate, f"bound {est.bound!r}"))
    bounds = [dbar_bounds(m, L) for L in (1, 2, 4, 8)]
    b1 = [b.bound1 for b in bounds]
    decreasing = all(a > b or a == b == 0.0 for a, b in zip(b1, b1[1:]))
    out.append(CheckResult("dbar_coupling_bound_decreasing", decreasing, b1[-1]))
    if bounds[0].bound2_available:
        b2 = [b.bound2 for b in bounds]
        ok = all(a > b or a == b == 0.0 for a, b in zip(b2, b2[1:]))
        out.append(CheckResult("dbar_dobrushin_bound_decreasing", ok, b2[-1]))
    return out


def control_replicas(m: InteractionModel, window: list[Site], replicas: int) -> int | None:
    """Replicas the broken-sampler control needs to resolve the largest conditional gap.

    None when no bin conditional differs from 1/2, i.e. the broken update changes nothing.
    """
    o = m.origin
    bins = 2 ** (len(window) - 1)
    gap = 0.0
    for b in range(bins):
        zeta = {s: (1 if (b >> n) & 1 else -1) for n, s in enumerate(window) if s != o}
        zeta[o] = 1
        gap = max(gap, abs(gibbs_conditional(m, o, zeta) - 0.5))
    if gap <= 0.0:
        return None
    # gap / sqrt(bins / (4 n)) >= CONTROL_RESOLUTION
    needed = math.ceil(0.25 * bins * (CONTROL_RESOLUTION / gap) ** 2)
    return max(replicas, needed)


def check_consistency(
    m: InteractionModel, seed: int, replicas: int, threads: int = 1, max_events: int | None = None
) -> list[CheckResult]:
    o = m.origin
    R = m.max_range()
    window = list(ball(o, R))
    if len(window) - 1 > MAX_ANNULUS:
        return [CheckResult("conditional_consistency", True, None, f"skipped: annulus of {len(window) - 1} sites")]
    samples = [s.spins for s in sample_many(m, window, seed, replicas, threads, max_events=max_events)]
    report = conditional_consistency(samples, m, o, R)
    out = [CheckResult("conditional_consistency", report.passed, report.worst_z, f"{report.flagged} bins flagged")]

    # the broken sampler must be caught by the same test
    n = control_replicas(m, window, replicas)
    if n is None:
        out.append(CheckResult("mutation_control", False, None, "not run: no conditional differs from 1/2"))
        return out
    if n > CONTROL_MAX_REPLICAS:
        logger.warning("[check_consistency] mutation control needs %s replicas, cap is %s", n, CONTROL_MAX_REPLICAS)
        out.append(CheckResult("mutation_control", False, None, f"not run: needs {n} replicas"))
        return out
    broken = [
        s.spins
        for s in sample_many(m, window, seed + 1, n, threads, update=skip_range_one, max_events=max_events)
    ]
    control = conditional_consistency(broken, m, o, R)
    out.append(CheckResult("mutation_control", not control.passed, control.worst_z, f"broken sampler, {n} replicas"))
    return out


def check_chain(
    m: InteractionModel, seed: int, replicas: int, threads: int, max_events: int | None = None
) -> list[CheckResult]:
    J = m.potential.amplitude
    sites = [(0,), (1,), (2,)]
    samples = sample_many(m, sites, seed, replicas, threads, max_events=max_events)
    x = np.array([[s.spins[p] for p in sites] for s in samples], dtype=float)
    out = []
    for r in (1, 2):
        prod = x[:, 0] * x[:, r]
        se = prod.std(ddof=1) / math.sqrt(len(prod))
        exact = transfer_matrix_1d(m.beta, J, r)
        z = abs(prod.mean() - exact) / se if se > 0 else 0.0
        out.append(CheckResult(f"transfer_matrix r={r}", z <= 4.0, float(prod.mean()), f"exact {exact!r}"))

    report = mixing_check(
        m, (2, 4, 6), replicas, seed, walk_replicas=10 * replicas, threads=threads, max_events=max_events
    )
    for row in report.rows:
        out.append(CheckResult(f"mixing R={row.R}", row.passed, abs(row.covariance), f"bound {row.bound!r}"))
    rho = rw_exponent(m).rho
    if not math.isfinite(rho):
        out.append(CheckResult("max_tail_slope", True, None, "skipped: M = 0 almost surely"))
        return out
    tail = estimate_max_tail(m, range(2, 11), 10 * replicas, seed + 1, threads=threads)
    slope = tail.log_slope(range(2, 11))
    out.append(CheckResult("max_tail_slope", abs(slope + rho) <= 0.2 * rho, slope, f"rho {rho!r}"))
    return out


def check_determinism(m: InteractionModel, seed: int, threads: int, max_events: int | None = None) -> CheckResult:
    window = [next(iter(m.sites))]
    a = [dumps(s) for s in sample_many(m, window, seed, 200, 1, max_events=max_events)]
    b = [dumps(s) for s in sample_many(m, window, seed, 200, max(2, threads), max_events=max_events)]
    return CheckResult("determinism", a == b, None, "200 replicas, 1 thread vs many")


def run_suite(
    m: InteractionModel,
    seed: int,
    replicas: int = 20_000,
    threads: int = 1,
    max_events: int | None = None,
) -> list[CheckResult]:
    results = [check_normalization(m), check_decomposition(m, seed)]
    balance = check_detailed_balance(m, seed)
    if balance is not None:
        results.append(balance)

    report = check_conditions(m)
    if report.termination.status is not Status.PASS:
        results.append(CheckResult("termination_condition", False, report.termination.value, report.termination.detail))
        logger.warning("[run_suite] termination condition does not hold; sampling checks skipped")
        return results

    results.extend(check_stopping(m, seed, replicas, threads, max_events))
    if m.translation_invariant:
        results.extend(check_coupling(m, seed, replicas, threads, max_events))
        if m.max_range() is not None:
            results.extend(check_consistency(m, seed, replicas, threads, max_events))
        if m.dimension == 1 and isinstance(m.potential, NearestNeighborKernel):
            results.extend(check_chain(m, seed, replicas, threads, max_events))
    results.append(check_determinism(m, seed, threads, max_events))
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.warning("[run_suite] failed checks: %s", failed)
    return results
