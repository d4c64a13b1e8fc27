"""Default knobs shared by the library and the cli."""
import os

CHUNK_EDGE = 4096
PATCH_EDGE = 512
PIPELINE_PATCH_EDGE = 4096

CACHE_CHUNKS = 64
THREADS = 8
BENCH_WORKERS = 8
PIPELINE_WORKERS = 3
RUNS = 5
FILL = 0

# whole-array baseline refuses blobs larger than this
MEMORY_BUDGET = 4 * 1024 ** 3

THREADS_ENV = 'WSTC_THREADS'


def threads_from_env(default: int=THREADS) -> int:
    """Return the worker count from ``WSTC_THREADS`` if it is set to a positive integer.

    Args:
        default (int, optional): Fallback when the variable is unset or unusable. Defaults to THREADS.

    Returns:
        int: thread count
    """
    raw = os.environ.get(THREADS_ENV, '').strip()
    if raw.isdigit() and int(raw) > 0:
        return int(raw)
    return default
