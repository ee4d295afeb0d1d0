import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, Hashable, Iterable, List, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")


class ResultCollector:
    """Thread-safe store of per-key results, read back in key order."""

    def __init__(self):
        self._results: Dict[Hashable, object] = {}
        self._lock = threading.Lock()

    def add(self, key, result):
        with self._lock:
            if key in self._results:
                raise ValueError(f"duplicate result key {key!r}")
            self._results[key] = result

    def ordered(self, keys) -> list:
        with self._lock:
            return [self._results[key] for key in keys]

    def __len__(self):
        with self._lock:
            return len(self._results)


class TrialPool:
    """Runs one task per key on a thread pool; output order follows the keys, not completion."""

    def __init__(self, threads: int = 1):
        if threads < 1:
            raise ValueError(f"threads must be at least 1, got {threads}")
        self.threads = threads

    def map(self, func: Callable[..., T], keys: Iterable) -> List[T]:
        keys = list(keys)
        collector = ResultCollector()

        def task(key):
            collector.add(key, func(key))

        if self.threads == 1 or len(keys) <= 1:
            for key in keys:
                task(key)
        else:
            with ThreadPoolExecutor(max_workers=self.threads) as executor:
                futures = [executor.submit(task, key) for key in keys]
                for future in futures:
                    # re-raises the first worker failure
                    future.result()
        logger.debug("collected %d results on %d thread(s)", len(collector), self.threads)
        return collector.ordered(keys)
