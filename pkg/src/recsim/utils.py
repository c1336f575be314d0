from collections.abc import Callable, Iterable
from concurrent.futures import ProcessPoolExecutor
from typing import TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def map_in_order(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> list[R]:
    """Apply fn to every item, in worker processes when workers > 1; results keep item order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def nearest_rank(sorted_values: np.ndarray, p: float) -> float:
    """Exact order statistic at percentile p: element ceil(p*n/100) of the sorted values (1-based)."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("percentile of an empty sample")
    # p is given in percent; scale to integers so 95 * 20 / 100 does not round up to 20.0000001.
    scaled = round(p * 1_000_000)
    rank = -(-scaled * n // 100_000_000)
    return float(sorted_values[max(rank, 1) - 1])


def top_share(values: np.ndarray) -> float:
    """Share of the total held by the largest quarter of the values."""
    n = len(values)
    if n == 0:
        raise ValueError("share of an empty sample")
    total = float(np.sum(values))
    if total <= 0:
        return 0.0
    k = max(1, n // 4)
    return float(np.sum(np.sort(values)[n - k :])) / total
