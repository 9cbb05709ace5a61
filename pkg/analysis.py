# analysis.py
"""Bounds and their Monte Carlo checks.

Covers the coupling discrepancy, the two d̄ bounds, the stopping bounds, the
comparison random walk ξ (its mgf φ, the exponent ρ and the tail of its maximum M),
the mixing envelope and the heavy-tail expression for P(M >= |B_0(n)|).
Every Monte Carlo comparison is one-sided: estimate <= bound + 3 SE.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np
from scipy import stats

from assign import CoupledSampleResult, sample_coupled_many, sample_many
from errors import ConditionFailedError, ContractViolation, InconclusiveCheckError
from interaction import (
    InteractionModel,
    alpha,
    certified_sum,
    delta,
    dobrushin_r,
    gamma,
    lambda_weight,
    range_moment,
    safe_exp,
    sample_range,
    tail_sum,
)
from intervals import Interval
from lattice import Site, ball_size
from replicas import fan_out
from rng import Purpose, stream
from sketch import EventRecord, StopStatistics, replay

logger = logging.getLogger(__name__)

SE_MARGIN = 3.0
LAM_CAP = 700.0
INCREMENT_TABLE_TOL = 1e-15
INCREMENT_TABLE_MAX = 1 << 16
WALK_CHUNK = 4096
CSV_FIELDS = ("quantity", "parameter", "value", "ci_low", "ci_high", "bound", "pass")

NOT_SERIALIZED = {"serialize": False}


@dataclass(frozen=True)
class BoundRow:
    quantity: str
    parameter: str
    value: float
    ci_low: float | None = None
    ci_high: float | None = None
    bound: float | None = None
    passed: bool | None = None


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_bound_csv(rows: Iterable[BoundRow], fh: IO[str]) -> None:
    w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({
            "quantity": r.quantity,
            "parameter": r.parameter,
            "value": _fmt(r.value),
            "ci_low": _fmt(r.ci_low),
            "ci_high": _fmt(r.ci_high),
            "bound": _fmt(r.bound),
            "pass": _fmt(r.passed),
        })


def _require_translation_invariant(m: InteractionModel, operation: str) -> None:
    if not m.translation_invariant:
        raise ContractViolation(f"{operation} needs a translation-invariant model")


def _positive_gamma(m: InteractionModel, operation: str) -> Interval:
    g = gamma(m)
    if g.low <= 0.0:
        raise ConditionFailedError(f"{operation}: γ = [{g.low:.6g}, {g.high:.6g}] is not positive")
    return g


def _wilson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    ci = stats.binomtest(k, n).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


# ---------- Stopping bounds ----------

def stopping_rows(statistics: StopStatistics, g: Interval) -> list[BoundRow]:
    """Mean N_STOP against 1/γ and survival of T_STOP against e^{-γt}."""
    rows = []
    bound = 1.0 / g.low
    mean = statistics.mean_n_stop
    se = statistics.se_n_stop
    rows.append(BoundRow("mean_n_stop", "", mean, mean - 2 * se, mean + 2 * se, bound, mean <= bound + SE_MARGIN * se))
    for point in statistics.survival:
        env = math.exp(-g.low * point.t)
        se_t = math.sqrt(point.value * (1.0 - point.value) / statistics.count)
        rows.append(BoundRow(
            "t_stop_survival", f"t={point.t!r}", point.value, point.ci_low, point.ci_high, env,
            point.value <= env + SE_MARGIN * se_t,
        ))
    return rows


# ---------- Discrepancy and d̄ ----------

def discrepancy_bound(m: InteractionModel, L: int) -> float:
    """(1/γ)(1 - e^{-β S_0^{>L}})."""
    _require_translation_invariant(m, "discrepancy_bound")
    g = _positive_gamma(m, "discrepancy_bound")
    return delta(m, L) / g.low


@dataclass(frozen=True)
class DiscrepancyEstimate:
    L: int
    site: Site
    count: int
    disagreements: int
    estimate: float
    se: float
    ci_low: float
    ci_high: float
    bound: float
    passed: bool

    def row(self) -> BoundRow:
        return BoundRow("discrepancy", f"L={self.L}", self.estimate, self.ci_low, self.ci_high, self.bound, self.passed)


def summarize_discrepancy(results: Sequence[CoupledSampleResult], site: Site, L: int, bound: float) -> DiscrepancyEstimate:
    n = len(results)
    if n == 0:
        raise ContractViolation("no coupled samples to summarize")
    k = sum(not r.agree[site] for r in results)
    p = k / n
    se = math.sqrt(p * (1.0 - p) / n)
    lo, hi = _wilson(k, n)
    return DiscrepancyEstimate(L, site, n, k, p, se, lo, hi, bound, p <= bound + SE_MARGIN * se)


def estimate_discrepancy(
    m: InteractionModel,
    L: int,
    site: Site,
    replicas: int,
    seed: int,
    threads: int = 1,
    max_events: int | None = None,
) -> DiscrepancyEstimate:
    bound = discrepancy_bound(m, L)
    results = sample_coupled_many(m, L, [site], seed, replicas, threads, max_events)
    est = summarize_discrepancy(results, site, L, bound)
    logger.info("[estimate_discrepancy] L=%s estimate=%.6g bound=%.6g", L, est.estimate, bound)
    return est


@dataclass(frozen=True)
class DbarBounds:
    """Both d̄ bounds; each is None when its hypothesis (γ > 0, r < 1) fails."""

    L: int
    bound1: float | None
    bound2: float | None
    r: float
    gamma: Interval
    ordered: bool | None  # bound1 <= bound2, reported only when both hypotheses hold

    @property
    def bound1_available(self) -> bool:
        return self.bound1 is not None

    @property
    def bound2_available(self) -> bool:
        return self.bound2 is not None


def dbar_bounds(m: InteractionModel, L: int) -> DbarBounds:
    _require_translation_invariant(m, "dbar_bounds")
    g = gamma(m)
    bound1 = None
    if g.low > 0.0:
        bound1 = delta(m, L) / g.low
    else:
        logger.warning("[dbar_bounds] gamma=[%.6g, %.6g] not positive, the coupling bound is unavailable", g.low, g.high)
    r = dobrushin_r(m)
    bound2 = None
    if r < 1.0:
        sup_tail = max(tail_sum(m, i, L) for i in m.sites)
        bound2 = m.beta / (1.0 - r) * sup_tail
    else:
        logger.warning("[dbar_bounds] r=%.6g >= 1, the Dobrushin bound is unavailable", r)
    ordered = None
    if bound1 is not None and bound2 is not None:
        ordered = bound1 <= bound2
        if not ordered:
            logger.warning("[dbar_bounds] L=%s coupling bound %.6g exceeds Dobrushin bound %.6g", L, bound1, bound2)
    return DbarBounds(L, bound1, bound2, r, g, ordered)


# ---------- Comparison random walk ----------

@dataclass(frozen=True)
class RWSpec:
    """Increment law of ξ: -1 with probability λ(0), |B_0(k)| - 1 with probability λ(k)."""

    cdf: np.ndarray  # α(0..K)
    increments: np.ndarray  # ξ value for range k = 0..K
    tail_mass: float  # 1 - α(K), drawn through the scalar inverse CDF
    model: InteractionModel = field(repr=False, compare=False, metadata=NOT_SERIALIZED)

    @property
    def probabilities(self) -> np.ndarray:
        return np.diff(self.cdf, prepend=0.0)

    def increment(self, k: int) -> int:
        return -1 if k == 0 else ball_size(self.model.dimension, k) - 1

    def draw(self, u: np.ndarray) -> np.ndarray:
        k = np.searchsorted(self.cdf, u, side="left")
        out = np.empty(len(u), dtype=np.int64)
        inside = k < len(self.cdf)
        out[inside] = self.increments[k[inside]]
        for pos in np.flatnonzero(~inside):
            out[pos] = self.increment(sample_range(self.model, self.model.origin, float(u[pos])))
        return out

    def truncated_variance(self) -> float:
        p = self.probabilities
        x = self.increments.astype(float)
        mean = float(np.sum(p * x))
        return float(np.sum(p * x * x)) - mean**2


def rw_spec(m: InteractionModel) -> RWSpec:
    _require_translation_invariant(m, "rw_spec")
    i = m.origin
    rng = m.max_range()
    cdf = [alpha(m, i, 0)]
    k = 0
    while 1.0 - cdf[-1] > INCREMENT_TABLE_TOL and k < INCREMENT_TABLE_MAX:
        if rng is not None and k >= rng:
            break
        k += 1
        cdf.append(alpha(m, i, k))
    incs = np.array([-1] + [ball_size(m.dimension, j) - 1 for j in range(1, len(cdf))], dtype=np.int64)
    return RWSpec(np.array(cdf), incs, max(0.0, 1.0 - cdf[-1]), m)


def rw_phi(m: InteractionModel, lam: float, tol: float = 1e-10) -> Interval:
    """Certified bracket of φ(λ) = E e^{λξ}; the upper end is inf when the tail cannot be controlled."""
    _require_translation_invariant(m, "rw_phi")
    i = m.origin
    d = m.dimension
    head = lambda_weight(m, i, 0) * math.exp(-lam)

    def term(k: int) -> float:
        w = lambda_weight(m, i, k)
        return w * safe_exp(lam * (ball_size(d, k) - 1)) if w > 0.0 else 0.0

    try:
        body = certified_sum(
            m, i, term, 1,
            lambda K: m.beta * m.potential.exp_weighted_tail_bound(i, K, lam),
            tol,
        )
    except InconclusiveCheckError:
        partial = math.fsum(term(k) for k in range(1, 65))
        return Interval(head + partial, math.inf)
    return Interval(head + body.low, head + body.high)


@dataclass(frozen=True)
class RWExponent:
    rho: float  # certified lower end; inf when φ <= 1 on the whole scan
    rho_interval: Interval
    unbounded: bool
    drift: float  # E ξ = -γ


def rw_exponent(m: InteractionModel, rel_tol: float = 1e-10) -> RWExponent:
    """ρ = sup{λ > 0 : φ(λ) <= 1} by bracketing and bisection on the certified upper end of φ."""
    _require_translation_invariant(m, "rw_exponent")
    g = gamma(m)
    drift = -g.mid

    def below(lam: float) -> bool:
        return rw_phi(m, lam).high <= 1.0

    hi = 1.0
    while below(hi):
        hi *= 2.0
        if hi > LAM_CAP:
            logger.debug("[rw_exponent] φ <= 1 up to λ=%s; ρ unbounded", LAM_CAP)
            return RWExponent(math.inf, Interval(LAM_CAP, math.inf), True, drift)
    lo = 0.0
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if below(mid):
            lo = mid
        else:
            hi = mid
        if lo == 0.0 and hi < 1e-9:
            break
    if lo == 0.0:
        logger.warning("[rw_exponent] φ(λ) > 1 for every tested λ > 0: heavy-tailed increments, ρ = 0")
    return RWExponent(lo, Interval(lo, hi), False, drift)


@dataclass(frozen=True)
class MaxTail:
    thresholds: tuple[int, ...]
    counts: tuple[int, ...]
    probabilities: tuple[float, ...]
    ci_low: tuple[float, ...]
    ci_high: tuple[float, ...]
    replicas: int
    rho: float
    ceiling: int | None
    horizon: int | None
    bias_bound: float
    maxima: np.ndarray = field(repr=False, compare=False, metadata=NOT_SERIALIZED)

    def probability_at_least(self, level: int) -> float:
        return float(np.mean(self.maxima >= level))

    def log_slope(self, levels: Sequence[int]) -> float:
        """Least-squares slope of ln P̂(M >= m) over the levels with positive estimates."""
        pts = [(lv, self.probability_at_least(lv)) for lv in levels]
        pts = [(lv, p) for lv, p in pts if p > 0.0]
        if len(pts) < 2:
            raise ContractViolation("need two levels with positive tail estimates for a slope")
        x, y = zip(*pts)
        return float(np.polyfit(np.array(x, dtype=float), np.log(y), 1)[0])

    def mean_exp_rho_m(self) -> float:
        if not math.isfinite(self.rho):
            return 1.0
        return float(np.mean(np.exp(np.minimum(self.rho * self.maxima, LAM_CAP))))


def _walk_chunk(spec: RWSpec, size: int, ceiling: int | None, horizon: int | None, gen: np.random.Generator) -> np.ndarray:
    s = np.zeros(size, dtype=np.int64)
    top = np.zeros(size, dtype=np.int64)
    alive = np.ones(size, dtype=bool)
    steps = 0
    while alive.any():
        idx = np.flatnonzero(alive)
        s[idx] += spec.draw(gen.random(len(idx)))
        top[idx] = np.maximum(top[idx], s[idx])
        steps += 1
        if horizon is not None and steps >= horizon:
            break
        if ceiling is not None:
            done = s[idx] <= top[idx] - ceiling
            alive[idx[done]] = False
    return top


def estimate_max_tail(
    m: InteractionModel,
    thresholds: Sequence[int],
    replicas: int,
    seed: int,
    eps: float = 1e-6,
    horizon: int | None = None,
    threads: int = 1,
) -> MaxTail:
    """Empirical P(M >= m) for M = sup_n S_n of the comparison walk.

    With ρ > 0 a walk stops once it sits ceiling = ⌈ln(1/eps)/ρ⌉ below its running
    maximum, which leaves an exceedance probability of at most eps. With ρ = 0 a
    horizon is mandatory and the bias is estimated from the truncated variance of ξ.
    """
    _positive_gamma(m, "estimate_max_tail")
    if not 0.0 < eps < 1.0:
        raise ContractViolation(f"eps must be in (0, 1), got {eps}")
    spec = rw_spec(m)
    rho = rw_exponent(m).rho
    if rho > 0.0:
        ceiling = 1 if math.isinf(rho) else max(1, math.ceil(math.log(1.0 / eps) / rho))
        bias = eps
        if horizon is not None:
            logger.debug("[estimate_max_tail] ρ > 0; horizon %s ignored", horizon)
            horizon = None
    else:
        if horizon is None or horizon < 1:
            raise ContractViolation("ρ = 0: estimate_max_tail needs a positive horizon")
        ceiling = None
        g = gamma(m).low
        bias = min(1.0, spec.truncated_variance() / (g * g * horizon))

    chunks = math.ceil(replicas / WALK_CHUNK)

    def run(c: int) -> np.ndarray:
        size = min(WALK_CHUNK, replicas - c * WALK_CHUNK)
        return _walk_chunk(spec, size, ceiling, horizon, stream(seed, c, Purpose.RANDOM_WALK))

    maxima = np.concatenate(fan_out(run, chunks, threads))
    levels = tuple(int(t) for t in thresholds)
    counts = tuple(int(np.sum(maxima >= t)) for t in levels)
    cis = [_wilson(k, replicas) for k in counts]
    logger.info("[estimate_max_tail] %s walks, ρ=%.6g, ceiling=%s", replicas, rho, ceiling)
    return MaxTail(
        thresholds=levels,
        counts=counts,
        probabilities=tuple(k / replicas for k in counts),
        ci_low=tuple(c[0] for c in cis),
        ci_high=tuple(c[1] for c in cis),
        replicas=replicas,
        rho=rho,
        ceiling=ceiling,
        horizon=horizon,
        bias_bound=bias,
        maxima=maxima,
    )


# ---------- Mixing ----------

@dataclass(frozen=True)
class MixingRow:
    R: int
    half: int
    odd: bool
    covariance: float
    se: float
    tail: float
    bound: float
    passed: bool

    def row(self) -> BoundRow:
        return BoundRow(
            "covariance", f"R={self.R}", abs(self.covariance),
            abs(self.covariance) - 2 * self.se, abs(self.covariance) + 2 * self.se,
            self.bound, self.passed,
        )


@dataclass(frozen=True)
class MixingReport:
    rows: tuple[MixingRow, ...]
    rho: float
    tail: MaxTail
    mean_exp_rho_m: float


def covariance(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float]:
    """Sample covariance and its standard error from the influence function."""
    n = len(xs)
    mx, my = xs.mean(), ys.mean()
    infl = (xs - mx) * (ys - my)
    cov = float(infl.mean())
    se = float(infl.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return cov, se


def mixing_check(
    m: InteractionModel,
    R_values: Sequence[int],
    replicas: int,
    seed: int,
    walk_replicas: int = 1_000_000,
    eps: float = 1e-6,
    threads: int = 1,
    c_f: float = 2.0,
    c_g: float = 2.0,
    max_events: int | None = None,
) -> MixingReport:
    """|Cov(σ(0), σ(R e_1))| against 2 c_f c_g (|Δ_f| + |Δ_g|) P̂(M >= ⌈R/2⌉)."""
    _require_translation_invariant(m, "mixing_check")
    for R in R_values:
        if R < 1:
            raise ContractViolation(f"mixing needs disjoint supports, got R={R}")
    halves = sorted({math.ceil(R / 2) for R in R_values})
    tail = estimate_max_tail(m, halves, walk_replicas, seed, eps, threads=threads)
    o = m.origin
    # |Δ_f| + |Δ_g| for single-spin observables
    spread = 2.0
    rows = []
    for R in R_values:
        far = (R,) + o[1:]
        samples = sample_many(m, [o, far], seed, replicas, threads, max_events=max_events)
        xs = np.array([s.spins[o] for s in samples], dtype=float)
        ys = np.array([s.spins[far] for s in samples], dtype=float)
        cov, se = covariance(xs, ys)
        half = math.ceil(R / 2)
        p = tail.probability_at_least(half)
        bound = 2.0 * c_f * c_g * spread * p
        passed = abs(cov) <= bound + SE_MARGIN * se
        if R % 2:
            logger.info("[mixing_check] R=%s is odd; tail taken at ⌈R/2⌉=%s", R, half)
        rows.append(MixingRow(R, half, bool(R % 2), cov, se, p, bound, passed))
    return MixingReport(tuple(rows), tail.rho, tail, tail.mean_exp_rho_m())


# ---------- Heavy-tail expression ----------

def _upper_tail(m: InteractionModel, i: Site, k: int) -> float:
    """1 - α(k) = Σ_{j>k} λ(j)."""
    if k == 0:
        return -math.expm1(-2.0 * m.beta * tail_sum(m, i, 0))
    return -math.expm1(-m.beta * tail_sum(m, i, k))


def max_tail_asymptote(m: InteractionModel, n: int, method: str = "shells", tol: float = 1e-12) -> float:
    """(1/γ)[Σ_{k>n} λ(k)|B_0(k)| - |B_0(n)| Σ_{k>n+1} λ(k)].

    "shells" sums λ(k)|B_0(k)| shell by shell; "integrated" sums the tails 1 - α(k)
    against the ball increments |B_0(k+1)| - |B_0(k)| and adds the boundary terms.
    """
    _require_translation_invariant(m, "max_tail_asymptote")
    if n < 0:
        raise ContractViolation(f"n must be >= 0, got {n}")
    g = _positive_gamma(m, "max_tail_asymptote")
    i = m.origin
    d = m.dimension
    bn = ball_size(d, n)
    if method == "shells":
        value = range_moment(m, i, tol, first=n + 1).low - bn * _upper_tail(m, i, n + 1)
    elif method == "integrated":
        series = certified_sum(
            m, i,
            lambda k: _upper_tail(m, i, k) * (ball_size(d, k + 1) - ball_size(d, k)),
            n,
            lambda K: m.beta * m.potential.weighted_tail_bound(i, K + 1),
            tol,
        )
        value = series.low + _upper_tail(m, i, n) * bn - bn * _upper_tail(m, i, n + 1)
    else:
        raise ContractViolation(f"unknown method {method!r}; use 'shells' or 'integrated'")
    return value / g.mid


# ---------- Super-martingale domination ----------

def supermartingale_violations(m: InteractionModel, record: EventRecord) -> int:
    """Steps where |C_n| exceeds |start| + S_n for the walk driven by the record's ranges."""
    d = m.dimension
    base = len(record.start)
    walk = 0
    violations = 0
    for e, size in zip(record.events, replay(record)):
        walk += -1 if e.k == 0 else ball_size(d, e.k) - 1
        if size > base + walk:
            violations += 1
    return violations
