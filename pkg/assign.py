# assign.py
"""Forward spin assignment and the public sampling API."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

from errors import ContractViolation, CorruptedRecordError, UnassignedSiteError
from interaction import InteractionModel
from lattice import Site, SiteSet
from rates import SpinWindow, update_prob
from replicas import fan_out
from rng import Purpose, stream
from sketch import EventRecord, run_backward, run_backward_coupled

logger = logging.getLogger(__name__)

UpdateFn = Callable[[InteractionModel, Site, int, Mapping[Site, int]], float]


@dataclass(frozen=True)
class SampleResult:
    window: SiteSet
    spins: SpinWindow
    n_stop: int
    t_stop: float
    seed: int
    replica: int


@dataclass(frozen=True)
class CoupledSampleResult:
    L: int
    window: SiteSet
    spins_full: SpinWindow
    spins_truncated: SpinWindow
    records_equal: bool
    agree: dict[Site, bool]
    n_stop: int
    n_stop_truncated: int
    seed: int
    replica: int


def run_forward(
    m: InteractionModel,
    record: EventRecord,
    seed: int,
    replica: int = 0,
    purpose: Purpose = Purpose.FORWARD,
    update: UpdateFn = update_prob,
) -> SpinWindow:
    """Replay a terminated record from its oldest event to its newest; returns X on record.start.

    Event n uses the n-th uniform of the (seed, replica, purpose) stream: a fair coin
    when K = 0, otherwise a flip of X(I) with probability update(m, I, K, X).
    """
    if record.n_stop != len(record.events) or record.n_stop == 0:
        raise ContractViolation(f"record is not terminated (n_stop={record.n_stop}, events={len(record.events)})")
    u = stream(seed, replica, purpose).random(record.n_stop)
    x: SpinWindow = {}
    for e in reversed(record.events):
        draw = u[e.n - 1]
        if e.k == 0:
            x[e.site] = 1 if draw < 0.5 else -1
            continue
        current = x.get(e.site)
        if current is None:
            raise CorruptedRecordError(f"event {e.n} updates {e.site} before any spin was assigned there")
        try:
            p = update(m, e.site, e.k, x)
        except UnassignedSiteError as err:
            raise CorruptedRecordError(f"event {e.n} at {e.site} with K={e.k} read Δ at {err.site}") from err
        if draw < p:
            x[e.site] = -current
    missing = [s for s in record.start if s not in x]
    if missing:
        raise CorruptedRecordError(f"forward pass left {missing} unassigned")
    return {s: x[s] for s in record.start}


def sample_window(
    m: InteractionModel,
    window: Iterable[Site],
    seed: int,
    replica: int = 0,
    update: UpdateFn = update_prob,
    max_events: int | None = None,
) -> SampleResult:
    window = window if isinstance(window, SiteSet) else SiteSet(window)
    record = run_backward(m, window, seed, replica, max_events)
    spins = run_forward(m, record, seed, replica, update=update)
    return SampleResult(window, spins, record.n_stop, record.t_stop, seed, replica)


def sample_coupled(
    m: InteractionModel,
    L: int,
    window: Iterable[Site],
    seed: int,
    replica: int = 0,
    max_events: int | None = None,
) -> CoupledSampleResult:
    window = window if isinstance(window, SiteSet) else SiteSet(window)
    coupled = run_backward_coupled(m, L, window, seed, replica, max_events)
    full = run_forward(m, coupled.full, seed, replica, Purpose.FORWARD)
    if coupled.records_equal:
        truncated = dict(full)
    else:
        truncated = run_forward(m, coupled.truncated, seed, replica, Purpose.FORWARD_TRUNCATED)
    agree = {s: full[s] == truncated[s] for s in window}
    if coupled.records_equal and not all(agree.values()):
        raise AssertionError(f"equal records produced different spins (seed={seed}, replica={replica})")
    return CoupledSampleResult(
        L=L,
        window=window,
        spins_full=full,
        spins_truncated=truncated,
        records_equal=coupled.records_equal,
        agree=agree,
        n_stop=coupled.full.n_stop,
        n_stop_truncated=coupled.truncated.n_stop,
        seed=seed,
        replica=replica,
    )


def sample_many(
    m: InteractionModel,
    window: Iterable[Site],
    seed: int,
    replicas: int,
    threads: int = 1,
    update: UpdateFn = update_prob,
    max_events: int | None = None,
) -> list[SampleResult]:
    window = window if isinstance(window, SiteSet) else SiteSet(window)
    logger.info("[sample_many] %s replicas of %s sites, seed=%s", replicas, len(window), seed)
    return fan_out(lambda r: sample_window(m, window, seed, r, update, max_events), replicas, threads)


def sample_coupled_many(
    m: InteractionModel,
    L: int,
    window: Iterable[Site],
    seed: int,
    replicas: int,
    threads: int = 1,
    max_events: int | None = None,
) -> list[CoupledSampleResult]:
    window = window if isinstance(window, SiteSet) else SiteSet(window)
    logger.info("[sample_coupled_many] %s replicas, L=%s, seed=%s", replicas, L, seed)
    return fan_out(lambda r: sample_coupled(m, L, window, seed, r, max_events), replicas, threads)
