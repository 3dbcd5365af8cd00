"""Process-level tuning for long runs.

Estimator steps allocate and free multi-megabyte temporaries many times per
step. With default glibc settings each such block is mmap'd and returned to
the OS, so every allocation pays for fresh page faults. Raising the mmap and
trim thresholds keeps freed blocks in the heap for reuse.
"""
import ctypes
import ctypes.util

M_TRIM_THRESHOLD = -1
M_MMAP_THRESHOLD = -3

_done = False


def tune_allocator(threshold=1 << 30):
    """Returns True when the allocator was tuned (glibc only); idempotent."""
    global _done
    if _done:
        return True
    name = ctypes.util.find_library("c")
    if not name:
        return False
    try:
        libc = ctypes.CDLL(name)
        ok = libc.mallopt(M_MMAP_THRESHOLD, threshold) == 1 and libc.mallopt(M_TRIM_THRESHOLD, threshold) == 1
    except (OSError, AttributeError):
        return False
    _done = ok
    return ok
