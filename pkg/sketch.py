# sketch.py
"""Backward sketch process: single and coupled runs, replay, and stopping statistics.

Both run_backward and run_backward_coupled go through one driver, so under the
same (seed, replica) the full record of a coupled run is the record a single
run produces. The truncated process C^[L] only skips growth events, hence
C^[L] ⊆ C at every step and a stream over C drives both.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

import config
from errors import ContractViolation, CorruptedRecordError, NonTerminationError
from interaction import InteractionModel, big_m, sample_range
from lattice import Site, SiteSet, ball
from rng import Purpose, open_uniform, stream
from utils_serialization import dumps

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Event:
    n: int
    site: Site
    k: int
    t: float


@dataclass(frozen=True)
class EventRecord:
    start: SiteSet
    events: tuple[Event, ...]
    n_stop: int
    t_stop: float

    def marks(self) -> list[tuple[Site, int]]:
        return [(e.site, e.k) for e in self.events]


@dataclass(frozen=True)
class CoupledRecord:
    L: int
    full: EventRecord
    truncated: EventRecord
    records_equal: bool
    first_divergence_step: int | None


@dataclass(frozen=True)
class SurvivalPoint:
    t: float
    value: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class StopStatistics:
    count: int
    mean_n_stop: float
    var_n_stop: float
    se_n_stop: float
    mean_t_stop: float
    survival: tuple[SurvivalPoint, ...]


def _apply(current: set, site: Site, k: int) -> None:
    if k == 0:
        current.discard(site)
    else:
        current.update(ball(site, k))


def _drive(
    m: InteractionModel,
    start: SiteSet,
    gen: np.random.Generator,
    max_events: int,
    L: int | None = None,
):
    if len(start) == 0:
        raise ContractViolation("backward sketch needs a nonempty start set")
    current = set(start)
    truncated = set(start) if L is not None else None
    rates: dict[Site, float] = {}
    full_events: list[Event] = []
    trunc_events: list[Event] = []
    diverged: int | None = None
    t = 0.0
    n = 0
    while current:
        if n >= max_events:
            raise NonTerminationError(max_events, len(current))
        sites = sorted(current)
        for j in sites:
            if j not in rates:
                rates[j] = big_m(m, j)
        cum = np.cumsum([rates[j] for j in sites])
        # draw order per event: waiting time, site, range
        t += gen.standard_exponential() / cum[-1]
        idx = min(int(np.searchsorted(cum, gen.random() * cum[-1], side="right")), len(sites) - 1)
        j = sites[idx]
        k = sample_range(m, j, open_uniform(gen))
        n += 1
        full_events.append(Event(n, j, k, t))
        _apply(current, j, k)
        if truncated is not None:
            if j in truncated and k <= L:
                trunc_events.append(Event(len(trunc_events) + 1, j, k, t))
                _apply(truncated, j, k)
            elif diverged is None:
                diverged = n
            if not truncated <= current:
                raise AssertionError(f"truncated sketch left the full sketch at step {n}")
    full = EventRecord(start, tuple(full_events), n, t)
    if truncated is None:
        return full, None, None
    t_trunc = trunc_events[-1].t if trunc_events else 0.0
    trunc = EventRecord(start, tuple(trunc_events), len(trunc_events), t_trunc)
    return full, trunc, diverged


def run_backward(
    m: InteractionModel,
    start: Iterable[Site],
    seed: int,
    replica: int = 0,
    max_events: int | None = None,
) -> EventRecord:
    start = start if isinstance(start, SiteSet) else SiteSet(start)
    gen = stream(seed, replica, Purpose.BACKWARD)
    record, _, _ = _drive(m, start, gen, max_events or config.MAX_EVENTS)
    logger.debug("[run_backward] seed=%s replica=%s n_stop=%s", seed, replica, record.n_stop)
    return record


def run_backward_coupled(
    m: InteractionModel,
    L: int,
    start: Iterable[Site],
    seed: int,
    replica: int = 0,
    max_events: int | None = None,
) -> CoupledRecord:
    if L < 1:
        raise ContractViolation(f"truncation range L must be >= 1, got {L}")
    start = start if isinstance(start, SiteSet) else SiteSet(start)
    gen = stream(seed, replica, Purpose.BACKWARD)
    full, trunc, diverged = _drive(m, start, gen, max_events or config.MAX_EVENTS, L)
    logger.debug(
        "[run_backward_coupled] seed=%s replica=%s L=%s n_stop=%s divergence=%s",
        seed, replica, L, full.n_stop, diverged,
    )
    return CoupledRecord(L, full, trunc, diverged is None, diverged)


def replay(record: EventRecord) -> list[int]:
    """Fold the sketch maps over a record; returns |C| after each event."""
    current = set(record.start)
    sizes = []
    last_t = 0.0
    for pos, e in enumerate(record.events, start=1):
        if e.n != pos:
            raise CorruptedRecordError(f"event {pos} carries step index {e.n}")
        if not current:
            raise CorruptedRecordError(f"set emptied before event {pos}")
        if e.site not in current:
            raise CorruptedRecordError(f"event {pos} fires at {e.site}, which is not in the sketch")
        if e.t < last_t:
            raise CorruptedRecordError(f"event {pos} goes back in time ({e.t} < {last_t})")
        last_t = e.t
        _apply(current, e.site, e.k)
        sizes.append(len(current))
    if current:
        raise CorruptedRecordError(f"record ends with {len(current)} sites still in the sketch")
    if len(record.events) != record.n_stop:
        raise CorruptedRecordError(f"n_stop={record.n_stop} but record holds {len(record.events)} events")
    return sizes


def dump_record_lines(record: EventRecord, seed: int, replica: int, model_hash: str, L: int | None = None) -> list[str]:
    header = {"header": {"seed": seed, "replica": replica, "model_hash": model_hash, "start": record.start, "L": L}}
    lines = [dumps(header)]
    lines.extend(dumps({"n": e.n, "site": e.site, "k": e.k, "t": e.t}) for e in record.events)
    return lines


def stop_statistics(records: Sequence[EventRecord], grid: Sequence[float] = (), level: float = 0.95) -> StopStatistics:
    if not records:
        raise ContractViolation("stop_statistics needs at least one record")
    n_stop = np.array([r.n_stop for r in records], dtype=float)
    t_stop = np.array([r.t_stop for r in records], dtype=float)
    count = len(records)
    var = float(n_stop.var(ddof=1)) if count > 1 else 0.0
    z = float(stats.norm.ppf(0.5 + level / 2.0))
    survival = []
    for t in grid:
        p = float(np.mean(t_stop > t))
        half = z * np.sqrt(p * (1.0 - p) / count)
        survival.append(SurvivalPoint(float(t), p, max(0.0, p - half), min(1.0, p + half)))
    return StopStatistics(
        count=count,
        mean_n_stop=float(n_stop.mean()),
        var_n_stop=var,
        se_n_stop=float(np.sqrt(var / count)),
        mean_t_stop=float(t_stop.mean()),
        survival=tuple(survival),
    )
