# lattice.py
"""Geometry of Z^d under the L1 norm: sites, finite site sets, balls and shells."""
from __future__ import annotations

import math
from functools import lru_cache
from typing import Iterable, Iterator

from errors import ContractViolation, LatticeOverflowError

Site = tuple[int, ...]

# coordinates stay inside signed 32-bit range
COORD_LIMIT = 2**31 - 1


def _check_site(site: Site) -> Site:
    for c in site:
        if not -COORD_LIMIT <= c <= COORD_LIMIT:
            raise LatticeOverflowError(f"coordinate {c} of {site} exceeds ±{COORD_LIMIT}")
    return site


def origin(d: int) -> Site:
    return (0,) * d


def add(i: Site, offset: Site) -> Site:
    return _check_site(tuple(a + b for a, b in zip(i, offset)))


def sub(i: Site, j: Site) -> Site:
    return tuple(a - b for a, b in zip(i, j))


class SiteSet:
    """Immutable finite set of sites, always iterated in lexicographic order."""

    __slots__ = ("_members", "_ordered")

    def __init__(self, sites: Iterable[Site] = ()):
        members = frozenset(tuple(int(c) for c in s) for s in sites)
        dims = {len(s) for s in members}
        if len(dims) > 1:
            raise ContractViolation(f"mixed dimensions in site set: {sorted(dims)}")
        self._members = members
        self._ordered = tuple(sorted(members))

    @property
    def dimension(self) -> int | None:
        return len(self._ordered[0]) if self._ordered else None

    def __iter__(self) -> Iterator[Site]:
        return iter(self._ordered)

    def __len__(self) -> int:
        return len(self._ordered)

    def __contains__(self, site) -> bool:
        return site in self._members

    def __eq__(self, other) -> bool:
        if isinstance(other, SiteSet):
            return self._members == other._members
        if isinstance(other, (set, frozenset)):
            return self._members == other
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._members)

    def __or__(self, other: Iterable[Site]) -> "SiteSet":
        return SiteSet(self._members | frozenset(other))

    def __sub__(self, other: Iterable[Site]) -> "SiteSet":
        return SiteSet(self._members - frozenset(other))

    def __le__(self, other: "SiteSet") -> bool:
        return self._members <= frozenset(other)

    def __repr__(self) -> str:
        return f"SiteSet({list(self._ordered)!r})"

    def union(self, *others: Iterable[Site]) -> "SiteSet":
        out = set(self._members)
        for o in others:
            out.update(o)
        return SiteSet(out)

    def remove(self, site: Site) -> "SiteSet":
        return SiteSet(self._members - {site})

    def shift(self, offset: Site) -> "SiteSet":
        return SiteSet(add(s, offset) for s in self._ordered)

    def as_frozenset(self) -> frozenset:
        return self._members


# ---------- Norm, balls, shells ----------

def l1_norm(i: Site) -> int:
    return sum(abs(c) for c in i)


def l1_distance(i: Site, j: Site) -> int:
    return sum(abs(a - b) for a, b in zip(i, j))


@lru_cache(maxsize=512)
def ball_offsets(d: int, k: int) -> tuple[Site, ...]:
    """All offsets r with ‖r‖_1 ≤ k, lexicographically sorted."""
    if d < 1 or k < 0:
        raise ContractViolation(f"ball_offsets needs d >= 1 and k >= 0, got d={d}, k={k}")

    def build(dims: int, budget: int) -> list[Site]:
        if dims == 0:
            return [()]
        out = []
        for c in range(-budget, budget + 1):
            for rest in build(dims - 1, budget - abs(c)):
                out.append((c,) + rest)
        return out

    return tuple(sorted(build(d, k)))


@lru_cache(maxsize=512)
def shell_offsets(d: int, k: int) -> tuple[Site, ...]:
    if k < 1:
        raise ContractViolation(f"shell radius must be >= 1, got {k}")
    return tuple(r for r in ball_offsets(d, k) if l1_norm(r) == k)


def ball(i: Site, k: int) -> SiteSet:
    if k < 0:
        raise ContractViolation(f"ball radius must be >= 0, got {k}")
    return SiteSet(add(i, r) for r in ball_offsets(len(i), k))


def shell(i: Site, k: int) -> SiteSet:
    return SiteSet(add(i, r) for r in shell_offsets(len(i), k))


@lru_cache(maxsize=4096)
def ball_size(d: int, k: int) -> int:
    """|B_i(k)| = Σ_{j=0}^{min(d,k)} 2^j C(d,j) C(k,j)."""
    if d < 1 or k < 0:
        raise ContractViolation(f"ball_size needs d >= 1 and k >= 0, got d={d}, k={k}")
    return sum(2**j * math.comb(d, j) * math.comb(k, j) for j in range(min(d, k) + 1))


def shell_size(d: int, k: int) -> int:
    if k < 1:
        raise ContractViolation(f"shell radius must be >= 1, got {k}")
    return ball_size(d, k) - ball_size(d, k - 1)


def ball_size_coefficient(d: int) -> float:
    """c with ball_size(d, m) <= c * m^d for every m >= 1."""
    return sum(2**j * math.comb(d, j) / math.factorial(j) for j in range(d + 1))


def shell_size_coefficient(d: int) -> float:
    """c with shell_size(d, m) <= c * m^(d-1) for every m >= 1."""
    return sum(2**j * math.comb(d, j) / math.factorial(j - 1) for j in range(1, d + 1))
