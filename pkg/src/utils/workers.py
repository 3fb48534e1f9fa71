"""Bounded worker pool for independent jobs (pump-power sweeps, seed ensembles)."""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Any, Optional
import traceback

from src.utils.logging import get_logger
from src.utils.config import get_config

logger = get_logger()


class WorkerManager:
    """Runs independent jobs on a thread pool and limits concurrency."""

    def __init__(self, max_concurrent: Optional[int] = None):
        self.max_concurrent = max_concurrent or get_config().get('max_concurrent_operations', 4)
        logger.debug(f"Worker manager initialized with {self.max_concurrent} max concurrent operations")

    def map(self, func: Callable[[Any], Any], items: Iterable[Any], operation: str = "job") -> List[Any]:
        """Apply ``func`` to every item; results keep the input order.

        The first failing job's exception is re-raised after logging.
        """
        items = list(items)
        if self.max_concurrent <= 1 or len(items) <= 1:
            return [self._run(func, item, operation) for item in items]
        with ThreadPoolExecutor(max_workers=self.max_concurrent) as pool:
            futures = [pool.submit(self._run, func, item, operation) for item in items]
            return [future.result() for future in futures]

    @staticmethod
    def _run(func, item, operation):
        logger.debug(f"Starting {operation} for {item!r}")
        try:
            return func(item)
        except Exception as e:
            logger.error(f"Error in {operation} for {item!r}: {e}")
            logger.debug(traceback.format_exc())
            raise
