# rates.py
"""Gibbs conditionals, spin-flip rates and the local update probabilities p_i^[k].

Spin windows are plain dicts Site -> ±1; a missing key is the unassigned state Δ
and reading it raises UnassignedSiteError naming the site.
"""
from __future__ import annotations

import logging
import math
from typing import Mapping

from scipy.special import expit

from errors import ContractViolation, UnassignedSiteError
from interaction import (
    InteractionModel,
    big_m,
    lambda_weight,
    shell_strength,
    tail_sum,
)
from intervals import Interval
from lattice import Site

logger = logging.getLogger(__name__)

SpinWindow = dict[Site, int]

P_TOL = 1e-12


def check_window(sigma: Mapping[Site, int]) -> None:
    for site, s in sigma.items():
        if s not in (-1, 1):
            raise ContractViolation(f"spin at {site} is {s}; spins must be ±1")


def chi(sites, sigma: Mapping[Site, int], operation: str = "") -> int:
    """χ_B(σ) = Π_{j ∈ B} σ(j)."""
    out = 1
    for j in sites:
        s = sigma.get(j)
        if s is None:
            raise UnassignedSiteError(j, operation)
        out *= s
    return out


def shell_field(m: InteractionModel, i: Site, k: int, sigma: Mapping[Site, int], operation: str = "shell_field") -> float:
    """Σ J_B χ_B(σ) over B ∋ i with escape radius exactly k."""
    if k < 1:
        return 0.0
    return math.fsum(t.coupling * chi(t.sites, sigma, operation) for t in m.potential.shell_terms(i, k))


def local_field(m: InteractionModel, i: Site, radius: int, sigma: Mapping[Site, int], operation: str = "local_field") -> float:
    """Σ J_B χ_B(σ) over B ∋ i with B ⊂ B_i(radius)."""
    return math.fsum(shell_field(m, i, k, sigma, operation) for k in range(1, radius + 1))


def _finite_range(m: InteractionModel, i: Site, operation: str) -> int:
    rng = m.potential.max_range(i)
    if rng is None:
        raise ContractViolation(
            f"{operation} needs a finite-range interaction at {i}; use the interval form with a radius"
        )
    return rng


# ---------- Conditionals ----------

def gibbs_conditional(m: InteractionModel, i: Site, zeta: Mapping[Site, int]) -> float:
    """P(σ(i) = ζ(i) | ζ off i) for a finite-range model."""
    rng = _finite_range(m, i, "gibbs_conditional")
    h = local_field(m, i, rng, zeta, "gibbs_conditional")
    return float(expit(2.0 * m.beta * h))


def gibbs_conditional_interval(m: InteractionModel, i: Site, zeta: Mapping[Site, int], radius: int) -> Interval:
    """Bracket of the conditional with every set escaping B_i(radius) bounded by S_i^{>radius}."""
    h = local_field(m, i, radius, zeta, "gibbs_conditional_interval")
    rest = tail_sum(m, i, radius)
    return Interval(float(expit(2.0 * m.beta * (h - rest))), float(expit(2.0 * m.beta * (h + rest))))


def truncated_conditional(m: InteractionModel, i: Site, zeta: Mapping[Site, int], L: int) -> float:
    """Conditional of the range-L truncated measure: only B ⊂ B_i(L) enter."""
    if L < 1:
        raise ContractViolation(f"truncation range must be >= 1, got {L}")
    h = local_field(m, i, L, zeta, "truncated_conditional")
    return float(expit(2.0 * m.beta * h))


# ---------- Rates ----------

def flip_rate_truncated(m: InteractionModel, i: Site, sigma: Mapping[Site, int], ell: int) -> float:
    """c_i^[ℓ](σ) = e^{-β S_i^{>ℓ}} exp(-β Σ_{B ∋ i, B ⊂ B_i(ℓ)} J_B χ_B(σ))."""
    if ell < 0:
        raise ContractViolation(f"ell must be >= 0, got {ell}")
    x = local_field(m, i, ell, sigma, "flip_rate_truncated")
    return math.exp(-m.beta * (tail_sum(m, i, ell) + x))


def flip_rate(m: InteractionModel, i: Site, sigma: Mapping[Site, int], k_max: int) -> Interval:
    c = flip_rate_truncated(m, i, sigma, k_max)
    return Interval(c, c * math.exp(2.0 * m.beta * tail_sum(m, i, k_max)))


def update_prob(m: InteractionModel, i: Site, k: int, sigma: Mapping[Site, int]) -> float:
    """Probability that the range-k update flips σ(i)."""
    if k < 0:
        raise ContractViolation(f"range must be >= 0, got {k}")
    if k == 0:
        return 0.5
    if lambda_weight(m, i, k) <= 0.0 or (k >= 2 and shell_strength(m, i, k) <= 0.0):
        raise ContractViolation(f"unsampleable range k={k} at site {i}: λ_i(k) = 0")
    b = m.beta
    inv_m = 1.0 / big_m(m, i)
    f = shell_field(m, i, k, sigma, "update_prob")
    a = shell_strength(m, i, k)
    if k == 1:
        # an empty first shell gives a = f = 0, so the update never flips
        num = math.exp(-b * a) * math.expm1(b * (a - f))
        den = -math.expm1(-2.0 * b * a - b * tail_sum(m, i, 1))
        p = inv_m * num / den
    else:
        x = local_field(m, i, k - 1, sigma, "update_prob")
        p = inv_m * math.exp(-b * (x + a)) * math.expm1(b * (a - f)) / -math.expm1(-b * a)
    if not -P_TOL <= p <= 1.0 + P_TOL:
        raise AssertionError(f"update probability {p!r} outside [0, 1] at site {i}, k={k}")
    return min(1.0, max(0.0, p))


def decomposition_check(m: InteractionModel, i: Site, sigma: Mapping[Site, int], ell: int) -> float:
    """|c_i^[ℓ](σ) - M_i (λ_i(0)/2 + Σ_{k=1}^{ℓ} λ_i(k) p_i^[k](-σ(i)|σ))|."""
    lhs = flip_rate_truncated(m, i, sigma, ell)
    terms = [0.5 * lambda_weight(m, i, 0)]
    for k in range(1, ell + 1):
        w = lambda_weight(m, i, k)
        if w > 0.0 and (k == 1 or shell_strength(m, i, k) > 0.0):
            terms.append(w * update_prob(m, i, k, sigma))
    rhs = big_m(m, i) * math.fsum(terms)
    return abs(lhs - rhs)


def detailed_balance_residual(m: InteractionModel, i: Site, sigma: Mapping[Site, int]) -> float:
    """|c_i(σ)/c_i(σ^i) - μ(σ^i)/μ(σ)| for a finite-range model."""
    rng = _finite_range(m, i, "detailed_balance_residual")
    if i not in sigma:
        raise UnassignedSiteError(i, "detailed_balance_residual")
    flipped = dict(sigma)
    flipped[i] = -sigma[i]
    ratio = flip_rate_truncated(m, i, sigma, rng) / flip_rate_truncated(m, i, flipped, rng)
    g = gibbs_conditional(m, i, sigma)
    return abs(ratio - (1.0 - g) / g)
