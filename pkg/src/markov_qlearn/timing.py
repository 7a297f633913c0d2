import functools
import logging
import time


def log_timing(func):
    """Log the wall time of each call at INFO on the wrapped function's logger."""
    logger = logging.getLogger(func.__module__)

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        start_time = time.perf_counter()
        result = func(*args, **kwargs)
        logger.info(f"{func.__name__} execution time: {time.perf_counter() - start_time:.2f}s")
        return result
    return wrapper
