# replicas.py
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

from errors import ContractViolation

logger = logging.getLogger(__name__)

T = TypeVar("T")


def fan_out(func: Callable[[int], T], count: int, threads: int = 1) -> list[T]:
    """Map replica indices 0..count-1 through func; results come back in replica order."""
    if count < 1:
        raise ContractViolation(f"replica count must be positive, got {count}")
    if threads < 1:
        raise ContractViolation(f"thread count must be positive, got {threads}")
    if threads == 1:
        return [func(r) for r in range(count)]
    logger.debug("[fan_out] %s replicas on %s threads", count, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, range(count)))
