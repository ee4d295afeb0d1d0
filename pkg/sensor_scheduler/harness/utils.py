import functools
import logging
import sys
import time

import numpy as np

from ..processing.errors import BoundViolationError, ConfigError, SchedulingError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VIOLATION = 4


def exit_code_for(error: BaseException) -> int:
    # unreadable inputs and unwritable outputs are setup problems
    if isinstance(error, (ConfigError, OSError)):
        return EXIT_CONFIG
    if isinstance(error, BoundViolationError):
        return EXIT_VIOLATION
    return EXIT_NUMERIC


def error2exitcode(func):
    """Turn known failures of a CLI command into exit codes with a logged diagnostic."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            result = func(*args, **kwargs)
        except (SchedulingError, OSError, np.linalg.LinAlgError) as e:
            code = exit_code_for(e)
            logger.debug("command failed", exc_info=True)
            logger.error("%s: %s", type(e).__name__, e)
            print(f"error: {e}", file=sys.stderr)
            return code
        return EXIT_OK if result is None else result
    return wrapper


def log_call(message, debug=False):
    def decorator(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            level = logging.DEBUG if debug else logging.INFO
            logger.log(level, "%s: started", message)
            start = time.perf_counter()
            result = func(*args, **kwargs)
            logger.log(level, "%s: finished in %.2f s", message, time.perf_counter() - start)
            return result
        return wrapper
    return decorator


def substream_seed(seed: int, *key: int) -> int:
    """Deterministic 32-bit seed for the substream keyed by `key` (e.g. instance, trial, t)."""
    return int(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)).generate_state(1)[0])


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))
