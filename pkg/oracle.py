# oracle.py
"""Independent ground truth: finite-volume enumeration and the 1-D transfer matrix."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from errors import ContractViolation, UnassignedSiteError
from interaction import InteractionModel, tail_sum
from lattice import Site, SiteSet, ball
from rates import gibbs_conditional

logger = logging.getLogger(__name__)

MAX_VOLUME = 20


@dataclass(frozen=True)
class GibbsTable:
    volume: tuple[Site, ...]
    configs: np.ndarray  # (2^n, n) of ±1
    probs: np.ndarray
    remainder: float = 0.0  # sup over the volume of the field left out beyond the radius

    def column(self, site: Site) -> int:
        try:
            return self.volume.index(site)
        except ValueError:
            raise ContractViolation(f"site {site} is not in the table volume") from None


def _radius(m: InteractionModel, volume: Sequence[Site], radius: int | None) -> int:
    if radius is not None:
        return radius
    ranges = [m.potential.max_range(v) for v in volume]
    if all(r is not None for r in ranges):
        return max(ranges, default=0)
    if m.truncation_radius is not None:
        return m.truncation_radius
    raise ContractViolation("infinite-range model needs an interaction radius for enumeration")


def exact_finite_gibbs(
    m: InteractionModel,
    volume: Iterable[Site],
    boundary: Mapping[Site, int] | None = None,
    radius: int | None = None,
) -> GibbsTable:
    """Normalized weights exp(β Σ_B J_B χ_B) over every configuration of the volume.

    boundary=None is the free boundary: only sets inside the volume count.
    """
    vol = tuple(SiteSet(volume))
    n = len(vol)
    if n == 0 or n > MAX_VOLUME:
        raise ContractViolation(f"volume has {n} sites; enumeration supports 1..{MAX_VOLUME}")
    R = _radius(m, vol, radius)
    index = {s: c for c, s in enumerate(vol)}

    seen = set()
    terms = []
    for v in vol:
        for k in range(1, R + 1):
            for t in m.potential.shell_terms(v, k):
                if t.key in seen:
                    continue
                seen.add(t.key)
                inside = [index[s] for s in t.sites if s in index]
                outside = [s for s in t.sites if s not in index]
                if outside and boundary is None:
                    continue
                ext = 1
                for s in outside:
                    if s not in boundary:
                        raise UnassignedSiteError(s, "exact_finite_gibbs")
                    ext *= boundary[s]
                terms.append((inside, t.coupling * ext))

    configs = np.array(list(product((-1, 1), repeat=n)), dtype=np.int8)
    energy = np.zeros(len(configs))
    for inside, coupling in terms:
        energy += coupling * np.prod(configs[:, inside], axis=1)
    logw = m.beta * energy
    w = np.exp(logw - logw.max())
    probs = w / w.sum()
    remainder = max(tail_sum(m, v, R) for v in vol)
    logger.debug("[exact_finite_gibbs] %s sites, %s terms, radius %s", n, len(terms), R)
    return GibbsTable(vol, configs, probs, remainder)


def condition_table(table: GibbsTable, fixed: Mapping[Site, int]) -> GibbsTable:
    """Conditional table on the sites of the volume not listed in fixed."""
    mask = np.ones(len(table.probs), dtype=bool)
    for site, s in fixed.items():
        mask &= table.configs[:, table.column(site)] == s
    keep = [c for c, s in enumerate(table.volume) if s not in fixed]
    if not keep:
        raise ContractViolation("conditioning on every site leaves nothing to enumerate")
    p = table.probs[mask]
    total = p.sum()
    if total <= 0:
        raise ContractViolation(f"conditioning event {dict(fixed)} has probability zero")
    return GibbsTable(
        tuple(table.volume[c] for c in keep),
        table.configs[mask][:, keep],
        p / total,
        table.remainder,
    )


def pair_correlation(table: GibbsTable, a: Site, b: Site) -> float:
    x = table.configs[:, table.column(a)].astype(float)
    y = table.configs[:, table.column(b)].astype(float)
    return float(np.sum(table.probs * x * y))


def magnetization(table: GibbsTable, site: Site) -> float:
    return float(np.sum(table.probs * table.configs[:, table.column(site)]))


def site_conditional(table: GibbsTable, site: Site, config: Mapping[Site, int]) -> float:
    """P(σ(site) = +1 | every other volume site as in config)."""
    others = {s: config[s] for s in table.volume if s != site}
    cond = condition_table(table, others)
    return float(cond.probs[cond.configs[:, 0] == 1].sum())


def transfer_matrix_1d(beta: float, J: float, r: int) -> float:
    """Infinite-volume E[σ(0)σ(r)] for the 1-D nearest-neighbour chain."""
    if r < 0:
        raise ContractViolation(f"distance must be >= 0, got {r}")
    if r == 0:
        return 1.0
    K = beta * J
    T = np.array([[math.exp(K), math.exp(-K)], [math.exp(-K), math.exp(K)]])
    w, V = np.linalg.eigh(T)
    top = int(np.argmax(np.abs(w)))
    spin = np.diag([1.0, -1.0])
    corr = 0.0
    for k in range(len(w)):
        if k == top:
            continue
        overlap = V[:, top] @ spin @ V[:, k]
        corr += overlap**2 * (w[k] / w[top]) ** r
    return float(corr)


# ---------- Conditional consistency ----------

@dataclass(frozen=True)
class BinResult:
    annulus: tuple[int, ...]
    count: int
    plus: int
    expected: float
    empirical: float
    z: float
    ci_low: float
    ci_high: float
    flagged: bool


@dataclass(frozen=True)
class ConsistencyReport:
    center: Site
    radius: int
    bins: tuple[BinResult, ...]
    worst_z: float
    threshold: float
    passed: bool

    @property
    def flagged(self) -> int:
        return sum(b.flagged for b in self.bins)


def conditional_consistency(
    samples: Sequence[Mapping[Site, int]],
    m: InteractionModel,
    center: Site,
    radius: int,
    min_count: int = 30,
    threshold: float = 4.0,
) -> ConsistencyReport:
    """Compare the empirical law of the center given its annulus with the Gibbs conditional."""
    rng = m.potential.max_range(center)
    if rng is None or rng > radius:
        raise ContractViolation(f"annulus radius {radius} does not cover the interaction range {rng}")
    annulus = tuple(s for s in ball(center, radius) if s != center)
    counts: dict[tuple[int, ...], list[int]] = {}
    for sample in samples:
        try:
            key = tuple(sample[s] for s in annulus)
            plus = sample[center] == 1
        except KeyError as e:
            raise UnassignedSiteError(e.args[0], "conditional_consistency") from None
        cell = counts.setdefault(key, [0, 0])
        cell[0] += 1
        cell[1] += int(plus)

    bins = []
    worst = 0.0
    for key in sorted(counts):
        n, k = counts[key]
        zeta = dict(zip(annulus, key))
        zeta[center] = 1
        p = gibbs_conditional(m, center, zeta)
        ci = stats.binomtest(k, n, p).proportion_ci(confidence_level=0.99, method="exact")
        se = math.sqrt(p * (1.0 - p) / n)
        z = (k / n - p) / se if se > 0 else (0.0 if k / n == p else math.inf)
        flagged = n < min_count
        if not flagged:
            worst = max(worst, abs(z))
        bins.append(BinResult(key, n, k, p, k / n, z, ci.low, ci.high, flagged))
    report = ConsistencyReport(center, radius, tuple(bins), worst, threshold, worst <= threshold)
    if report.flagged:
        logger.warning("[conditional_consistency] %s bins below %s samples", report.flagged, min_count)
    return report
