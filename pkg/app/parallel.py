"""Order-preserving evaluation of pure functions over parameter grids."""

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, TypeVar

from app.logger import logger


T = TypeVar("T")
R = TypeVar("R")


def map_points(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    """Apply fn to every item; results follow input order for any worker count.

    fn must be picklable (a module-level function or a functools.partial of one)
    when workers > 1.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    workers = min(workers, len(items))
    logger.debug(f"Evaluating {len(items)} grid points on {workers} processes")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
