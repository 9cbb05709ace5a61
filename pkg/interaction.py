# interaction.py
"""Interactions {J_B}, their tail strengths and the range distribution λ_i(k).

A potential answers three kinds of questions about a site i:
  * which sets B ∋ i have escape radius exactly k (the least k with B ⊂ B_i(k)),
  * the tail strength S_i^{>k} = Σ_{B ∋ i, B ⊄ B_i(k)} |J_B|,
  * certified upper bounds for the weighted tails used by γ, the weighted moment and φ.
Infinite-range kernels keep a suffix table of shell strengths and close it with
an analytic majorant, so every tail is exact up to the (tiny) majorant slack.
"""
from __future__ import annotations

import enum
import logging
import math
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import special

from config import GAMMA_TOL
from errors import (
    ContractViolation,
    InconclusiveCheckError,
    SummabilityError,
)
from intervals import Interval
from lattice import (
    Site,
    SiteSet,
    add,
    ball_size,
    ball_size_coefficient,
    l1_distance,
    origin,
    shell_offsets,
    shell_size,
    shell_size_coefficient,
    sub,
)

logger = logging.getLogger(__name__)

K_MAX = 1 << 20
RANGE_SEARCH_MAX = 1 << 62
TABLE_MAX = 1 << 16
TABLE_TOL = 1e-16


def safe_exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


class Term(NamedTuple):
    sites: tuple[Site, ...]
    coupling: float
    key: tuple


# ---------- Potentials ----------

class Potential(ABC):
    dimension: int

    @property
    @abstractmethod
    def translation_invariant(self) -> bool: ...

    @abstractmethod
    def max_range(self, i: Site) -> int | None:
        """Largest escape radius of a set containing i, None when unbounded."""

    @abstractmethod
    def shell_terms(self, i: Site, k: int) -> tuple[Term, ...]: ...

    @abstractmethod
    def shell_strength(self, i: Site, k: int) -> float: ...

    @abstractmethod
    def tail_sum(self, i: Site, k: int) -> float: ...

    @abstractmethod
    def weighted_tail_bound(self, i: Site, k: int) -> float:
        """Upper bound on Σ_{m>k} |B(m)| · shell_strength(i, m)."""

    @abstractmethod
    def exp_weighted_tail_bound(self, i: Site, k: int, lam: float) -> float:
        """Upper bound on Σ_{m>k} shell_strength(i, m) · e^{lam (|B(m)| - 1)}."""

    @abstractmethod
    def default_sites(self) -> SiteSet: ...

    def describe(self) -> dict:
        return {"kind": type(self).__name__, "dimension": self.dimension}


class RadialKernel(Potential):
    """Translation-invariant pair potential J(0, r) = profile(‖r‖_1)."""

    range_: int | None = None

    def __init__(self, dimension: int, amplitude: float):
        if dimension < 1:
            raise ContractViolation(f"dimension must be >= 1, got {dimension}")
        self.dimension = dimension
        self.amplitude = float(amplitude)
        self._c_shell = shell_size_coefficient(dimension)
        self._c_ball = ball_size_coefficient(dimension)
        self._table_size, self._suffix = self._build_table()

    @abstractmethod
    def profile(self, m: int) -> float: ...

    @abstractmethod
    def majorant(self, k: int, power: int) -> float:
        """Upper bound on Σ_{m>k} m^power |profile(m)| (exact when power == 0)."""

    @property
    def translation_invariant(self) -> bool:
        return True

    def max_range(self, i: Site) -> int | None:
        return self.range_

    def default_sites(self) -> SiteSet:
        return SiteSet([origin(self.dimension)])

    def _remainder(self, k: int) -> float:
        if self.range_ is not None and k >= self.range_:
            return 0.0
        if self.dimension == 1:
            return 2.0 * self.majorant(k, 0)
        return self._c_shell * self.majorant(k, self.dimension - 1)

    def _build_table(self):
        if self.range_ is not None:
            size = self.range_
        else:
            size = 64
            if self.dimension > 1:
                scale = max(abs(self.amplitude), 1e-300)
                while size < TABLE_MAX and self._remainder(size) > TABLE_TOL * scale:
                    size *= 2
        rem = self._remainder(size)
        if not math.isfinite(rem):
            logger.debug("[RadialKernel] %s tail diverges", type(self).__name__)
            return size, None
        strengths = np.array([self._strength(m) for m in range(1, size + 1)], dtype=float)
        suffix = np.zeros(size + 1)
        suffix[:size] = np.cumsum(strengths[::-1])[::-1]
        suffix += rem
        return size, suffix

    def _strength(self, m: int) -> float:
        return shell_size(self.dimension, m) * abs(self.profile(m))

    def shell_strength(self, i: Site, k: int) -> float:
        if k < 1:
            return 0.0
        if self.range_ is not None and k > self.range_:
            return 0.0
        return self._strength(k)

    def shell_terms(self, i: Site, k: int) -> tuple[Term, ...]:
        if k < 1 or (self.range_ is not None and k > self.range_):
            return ()
        coupling = self.profile(k)
        if coupling == 0.0:
            return ()
        terms = []
        for r in shell_offsets(self.dimension, k):
            j = add(i, r)
            pair = (i, j) if i < j else (j, i)
            terms.append(Term((i, j), coupling, pair))
        return tuple(terms)

    def tail_sum(self, i: Site, k: int) -> float:
        if self._suffix is None:
            raise SummabilityError(f"{type(self).__name__} tail does not converge in d={self.dimension}")
        if k < 0:
            raise ContractViolation(f"tail radius must be >= 0, got {k}")
        if k < self._table_size:
            return float(self._suffix[k])
        return self._remainder(k)

    def weighted_tail_bound(self, i: Site, k: int) -> float:
        if self.range_ is not None:
            return math.fsum(
                ball_size(self.dimension, m) * self._strength(m) for m in range(k + 1, self.range_ + 1)
            )
        if self.dimension == 1:
            return 2.0 * (2.0 * self.majorant(k, 1) + self.majorant(k, 0))
        return self._c_ball * self._c_shell * self.majorant(k, 2 * self.dimension - 1)

    def exp_weighted_tail_bound(self, i: Site, k: int, lam: float) -> float:
        if lam <= 0.0:
            return self.tail_sum(i, k)
        if self.range_ is not None:
            return math.fsum(
                self._strength(m) * safe_exp(lam * (ball_size(self.dimension, m) - 1))
                for m in range(k + 1, self.range_ + 1)
            )
        return math.inf

    def describe(self) -> dict:
        return {**super().describe(), "amplitude": self.amplitude, "range": self.range_}


class NearestNeighborKernel(RadialKernel):
    range_ = 1

    def profile(self, m: int) -> float:
        return self.amplitude if m == 1 else 0.0

    def majorant(self, k: int, power: int) -> float:
        return abs(self.amplitude) if k < 1 else 0.0


class ExponentialKernel(RadialKernel):
    def __init__(self, dimension: int, amplitude: float, decay: float):
        if decay <= 0:
            raise ContractViolation(f"decay rate must be positive, got {decay}")
        self.decay = float(decay)
        super().__init__(dimension, amplitude)

    def profile(self, m: int) -> float:
        return self.amplitude * math.exp(-self.decay * m)

    def majorant(self, k: int, power: int) -> float:
        x = math.exp(-self.decay)
        m0 = k + 1
        if power == 0:
            return abs(self.amplitude) * x**m0 / (1.0 - x)
        # ratio test: (1 + 1/m)^p x decreases in m; sum explicitly until it drops below 1
        head = 0.0
        while (1.0 + 1.0 / m0) ** power * x >= 1.0:
            head += m0**power * x**m0
            m0 += 1
        q = (1.0 + 1.0 / m0) ** power * x
        return abs(self.amplitude) * (head + m0**power * x**m0 / (1.0 - q))

    def exp_weighted_tail_bound(self, i: Site, k: int, lam: float) -> float:
        if lam <= 0.0 or self.dimension > 1:
            return super().exp_weighted_tail_bound(i, k, lam)
        # d = 1: shell strength 2|A| e^{-a m}, |B(m)| - 1 = 2m
        q = math.exp(2.0 * lam - self.decay)
        if q >= 1.0:
            return math.inf
        return 2.0 * abs(self.amplitude) * q ** (k + 1) / (1.0 - q)

    def describe(self) -> dict:
        return {**super().describe(), "decay": self.decay}


class PowerLawKernel(RadialKernel):
    def __init__(self, dimension: int, amplitude: float, exponent: float):
        self.exponent = float(exponent)
        super().__init__(dimension, amplitude)

    def profile(self, m: int) -> float:
        return self.amplitude * float(m) ** (-self.exponent)

    def majorant(self, k: int, power: int) -> float:
        s = self.exponent - power
        if s <= 1.0:
            return math.inf
        return abs(self.amplitude) * float(special.zeta(s, k + 1))

    def describe(self) -> dict:
        return {**super().describe(), "exponent": self.exponent}


class ExplicitFamily(Potential):
    """Finite list of (B, J_B), optionally replicated by every lattice translation."""

    def __init__(self, dimension: int, terms: Sequence[tuple[Sequence[Site], float]], translate: bool = False):
        self.dimension = dimension
        templates = []
        for n, (sites, coupling) in enumerate(terms):
            block = tuple(sorted({tuple(int(c) for c in s) for s in sites}))
            if len(block) < 2:
                raise ContractViolation(f"term {n} has |B| = {len(block)}; every set needs |B| >= 2")
            if any(len(s) != dimension for s in block):
                raise ContractViolation(f"term {n} has sites outside Z^{dimension}")
            templates.append((block, float(coupling)))
        self.templates = tuple(templates)
        self.translate = bool(translate)
        self._lock = threading.Lock()
        self._incidence: dict[Site, dict[int, tuple[Term, ...]]] = {}

    @property
    def translation_invariant(self) -> bool:
        return self.translate

    def default_sites(self) -> SiteSet:
        if self.translate or not self.templates:
            return SiteSet([origin(self.dimension)])
        return SiteSet(s for block, _ in self.templates for s in block)

    def incidence(self, i: Site) -> dict[int, tuple[Term, ...]]:
        """Sets containing i grouped by escape radius."""
        with self._lock:
            cached = self._incidence.get(i)
            if cached is not None:
                return cached
        groups: dict[int, list[Term]] = {}
        for t, (block, coupling) in enumerate(self.templates):
            if self.translate:
                placed = []
                for anchor in block:
                    offset = sub(i, anchor)
                    placed.append(tuple(sorted(add(b, offset) for b in block)))
            else:
                placed = [block] if i in block else []
            for sites in placed:
                radius = max(l1_distance(i, b) for b in sites)
                groups.setdefault(radius, []).append(Term(sites, coupling, (t, sites)))
        frozen = {r: tuple(ts) for r, ts in sorted(groups.items())}
        with self._lock:
            self._incidence[i] = frozen
        return frozen

    def max_range(self, i: Site) -> int | None:
        return max(self.incidence(i), default=0)

    def shell_terms(self, i: Site, k: int) -> tuple[Term, ...]:
        return self.incidence(i).get(k, ())

    def shell_strength(self, i: Site, k: int) -> float:
        return math.fsum(abs(t.coupling) for t in self.shell_terms(i, k))

    def tail_sum(self, i: Site, k: int) -> float:
        if k < 0:
            raise ContractViolation(f"tail radius must be >= 0, got {k}")
        return math.fsum(
            abs(t.coupling) for r, ts in self.incidence(i).items() if r > k for t in ts
        )

    def weighted_tail_bound(self, i: Site, k: int) -> float:
        return math.fsum(
            ball_size(self.dimension, r) * self.shell_strength(i, r)
            for r in self.incidence(i) if r > k
        )

    def exp_weighted_tail_bound(self, i: Site, k: int, lam: float) -> float:
        return math.fsum(
            self.shell_strength(i, r) * safe_exp(lam * (ball_size(self.dimension, r) - 1))
            for r in self.incidence(i) if r > k
        )

    def describe(self) -> dict:
        return {**super().describe(), "terms": len(self.templates), "translate": self.translate}


# ---------- Model ----------

@dataclass(frozen=True, eq=False)
class InteractionModel:
    potential: Potential
    beta: float
    check_sites: SiteSet | None = None
    truncation_radius: int | None = None

    def __post_init__(self):
        if self.beta < 0:
            raise ContractViolation(f"beta must be non-negative, got {self.beta}")

    @property
    def dimension(self) -> int:
        return self.potential.dimension

    @property
    def translation_invariant(self) -> bool:
        return self.potential.translation_invariant

    @property
    def origin(self) -> Site:
        return origin(self.dimension)

    @property
    def sites(self) -> SiteSet:
        """Sites over which suprema are taken."""
        return self.check_sites if self.check_sites is not None else self.potential.default_sites()

    def max_range(self, i: Site | None = None) -> int | None:
        return self.potential.max_range(self.origin if i is None else i)

    def scaled(self, beta: float) -> "InteractionModel":
        return InteractionModel(self.potential, beta, self.check_sites, self.truncation_radius)


class Status(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ConditionResult:
    status: Status
    value: float | None
    detail: str = ""


@dataclass(frozen=True)
class ConditionReport:
    summability: ConditionResult
    weighted_moment: ConditionResult
    termination: ConditionResult
    dobrushin: ConditionResult
    gamma: Interval | None
    r: float | None

    @property
    def all_passed(self) -> bool:
        return all(
            c.status is Status.PASS
            for c in (self.summability, self.weighted_moment, self.termination, self.dobrushin)
        )


@dataclass(frozen=True)
class BetaCritical:
    value: float
    found: bool


# ---------- Strengths and the range distribution ----------

def total_strength(m: InteractionModel, i: Site) -> float:
    """Σ_{B ∋ i} |J_B| (β excluded)."""
    return m.potential.tail_sum(i, 0)


def tail_sum(m: InteractionModel, i: Site, k: int) -> float:
    return m.potential.tail_sum(i, k)


def shell_strength(m: InteractionModel, i: Site, k: int) -> float:
    return m.potential.shell_strength(i, k)


def big_m(m: InteractionModel, i: Site) -> float:
    return 2.0 * math.exp(m.beta * total_strength(m, i))


def lambda_weight(m: InteractionModel, i: Site, k: int) -> float:
    """λ_i(k); the k = 1 case subtracts e^{-2βS^{>0}}, matching λ_i(0)."""
    if k < 0:
        raise ContractViolation(f"range must be >= 0, got {k}")
    b = m.beta
    if k == 0:
        return math.exp(-2.0 * b * tail_sum(m, i, 0))
    upper = tail_sum(m, i, k)
    lower = 2.0 * tail_sum(m, i, 0) if k == 1 else tail_sum(m, i, k - 1)
    return math.exp(-b * upper) * -math.expm1(-b * (lower - upper))


def alpha(m: InteractionModel, i: Site, k: int) -> float:
    """CDF α_i(k) = Σ_{ℓ ≤ k} λ_i(ℓ)."""
    if k < 0:
        return 0.0
    if k == 0:
        return lambda_weight(m, i, 0)
    return math.exp(-m.beta * tail_sum(m, i, k))


def sample_range(m: InteractionModel, i: Site, u: float) -> int:
    """Inverse-CDF draw from λ_i: the least k with α_i(k) >= u."""
    if not 0.0 < u < 1.0:
        raise ContractViolation(f"sample_range needs u in (0, 1), got {u}")
    if u <= lambda_weight(m, i, 0):
        return 0

    def reached(k: int) -> bool:
        return alpha(m, i, k) >= u

    # α_i is nondecreasing in k: bracket by doubling, then bisect on (lo, hi]
    lo, hi = 0, 1
    while not reached(hi):
        lo, hi = hi, 2 * hi
        if hi > RANGE_SEARCH_MAX:
            raise SummabilityError(f"range search at {i} passed {RANGE_SEARCH_MAX} without reaching u={u}")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if reached(mid):
            hi = mid
        else:
            lo = mid
    return hi


def delta(m: InteractionModel, L: int) -> float:
    """δ(L) = sup_i (1 - e^{-β S_i^{>L}}) over the model's check sites."""
    return max(-math.expm1(-m.beta * tail_sum(m, i, L)) for i in m.sites)


def dobrushin_r(m: InteractionModel) -> float:
    return m.beta * max(total_strength(m, i) for i in m.sites)


# ---------- Certified series ----------

def certified_sum(
    m: InteractionModel,
    i: Site,
    term: Callable[[int], float],
    first: int,
    remainder: Callable[[int], float],
    tol: float,
) -> Interval:
    """Σ_{k >= first} term(k), truncated where remainder(K) bounds the rest below tol."""
    rng = m.potential.max_range(i)
    K = max(first, 16) if rng is None else max(first, rng)
    rem = remainder(K)
    while rem > tol:
        if K >= K_MAX:
            raise InconclusiveCheckError(f"series at site {i} did not certify below {tol:g}", rem)
        K *= 2
        rem = remainder(K)
    partial = math.fsum(term(k) for k in range(first, K + 1))
    return Interval(partial, partial + rem)


def range_moment(m: InteractionModel, i: Site, tol: float = GAMMA_TOL, first: int = 1) -> Interval:
    """Σ_{k >= first} |B_i(k)| λ_i(k), using λ_i(k) <= β · shell_strength for the remainder."""
    d = m.dimension
    return certified_sum(
        m,
        i,
        lambda k: ball_size(d, k) * lambda_weight(m, i, k),
        max(first, 1),
        lambda K: m.beta * m.potential.weighted_tail_bound(i, K),
        tol,
    )


def weighted_moment(m: InteractionModel, i: Site, tol: float = 1e-8, first: int = 1) -> Interval:
    """Σ_{k >= first} |B_i(k)| · shell_strength(i, k)."""
    d = m.dimension
    return certified_sum(
        m,
        i,
        lambda k: ball_size(d, k) * shell_strength(m, i, k),
        first,
        lambda K: m.potential.weighted_tail_bound(i, K),
        tol,
    )


def gamma(m: InteractionModel, site_set: SiteSet | None = None, tol: float = GAMMA_TOL) -> Interval:
    """γ = 1 - sup_i Σ_{k>=1} |B_i(k)| λ_i(k) as a certified interval."""
    sites = site_set if site_set is not None else m.sites
    moments = [range_moment(m, i, tol) for i in sites]
    out = Interval(1.0 - max(s.high for s in moments), 1.0 - max(s.low for s in moments))
    logger.debug("[gamma] beta=%s gamma=[%.12g, %.12g]", m.beta, out.low, out.high)
    return out


def check_conditions(m: InteractionModel, site_set: SiteSet | None = None) -> ConditionReport:
    sites = site_set if site_set is not None else m.sites

    try:
        strength = max(total_strength(m, i) for i in sites)
        summability = ConditionResult(Status.PASS, strength)
    except SummabilityError as e:
        summability = ConditionResult(Status.FAIL, None, str(e))
        strength = None

    try:
        if any(math.isinf(m.potential.weighted_tail_bound(i, 1)) for i in sites):
            moment = ConditionResult(Status.FAIL, None, "weighted moment diverges")
        else:
            moment = ConditionResult(Status.PASS, max(weighted_moment(m, i).high for i in sites))
    except InconclusiveCheckError as e:
        moment = ConditionResult(Status.INCONCLUSIVE, None, str(e))
    except SummabilityError as e:
        moment = ConditionResult(Status.FAIL, None, str(e))

    g = None
    try:
        g = gamma(m, sites)
        if g.low > 0.0:
            termination = ConditionResult(Status.PASS, 1.0 - g.mid)
        elif g.high <= 0.0:
            termination = ConditionResult(Status.FAIL, 1.0 - g.mid, "sup Σ |B(k)| λ(k) >= 1")
        else:
            termination = ConditionResult(Status.INCONCLUSIVE, 1.0 - g.mid, "interval straddles 1")
    except (InconclusiveCheckError, SummabilityError) as e:
        termination = ConditionResult(Status.INCONCLUSIVE, None, str(e))

    r = m.beta * strength if strength is not None else None
    if r is None:
        dob = ConditionResult(Status.FAIL, None, "interaction not summable")
    else:
        dob = ConditionResult(Status.PASS if r < 1.0 else Status.FAIL, r)

    report = ConditionReport(summability, moment, termination, dob, g, r)
    if not report.all_passed:
        logger.warning("[check_conditions] beta=%s: %s", m.beta, {
            "summability": summability.status.value,
            "weighted_moment": moment.status.value,
            "termination": termination.status.value,
            "dobrushin": dob.status.value,
        })
    return report


def beta_critical(m: InteractionModel, window: float = 10.0, points: int = 1000, rel_tol: float = 1e-9) -> BetaCritical:
    """First β at which the termination sufficient condition's left side reaches 1."""
    if not m.translation_invariant:
        raise ContractViolation("beta_critical needs a translation-invariant model")
    i = m.origin
    d = m.dimension
    s0 = tail_sum(m, i, 0)
    s1 = tail_sum(m, i, 1)
    inner = shell_strength(m, i, 1)
    far = weighted_moment(m, i, first=2).high

    def lhs(b: float) -> float:
        return 2 * d * math.exp(-b * s1) * (1.0 - math.exp(-b * s0) * math.exp(-b * inner)) + b * far

    lo = 0.0
    for j in range(1, points + 1):
        hi = window * j / points
        if lhs(hi) >= 1.0:
            while hi - lo > rel_tol * hi:
                mid = 0.5 * (lo + hi)
                if lhs(mid) >= 1.0:
                    hi = mid
                else:
                    lo = mid
            logger.debug("[beta_critical] root %.12g", hi)
            return BetaCritical(hi, True)
        lo = hi
    logger.warning("[beta_critical] no root in (0, %s]", window)
    return BetaCritical(window, False)
