"""Keep large numpy temporaries on the heap instead of mmap.

The solvers allocate multi-megabyte scratch arrays every right-hand-side
evaluation; with glibc defaults those cross the mmap threshold, get
returned to the kernel on free, and cost a page-zeroing fault on every
reallocation (measured ~40% of the whole step time).  Raising the
threshold once at import keeps the blocks reusable.
"""

import ctypes
import ctypes.util

M_TRIM_THRESHOLD = -1
M_MMAP_THRESHOLD = -3


def tune_allocator() -> bool:
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6")
        libc.mallopt(M_MMAP_THRESHOLD, 1 << 30)
        libc.mallopt(M_TRIM_THRESHOLD, 1 << 30)
        return True
    except (OSError, AttributeError):
        return False
