"""Backend selection for the numeric kernels.

``WMM_BACKEND`` picks the implementation at import time: ``numba`` (default
when numba imports cleanly) or ``numpy``. ``WMM_THREADS`` caps the numba
thread pool and the simulation worker pool.
"""

import contextlib
import os
import threading
import warnings

_VALID = ("numba", "numpy")
_local = threading.local()

# numba probes TBB before settling on another threading layer and warns when the
# installed TBB is too old; the fallback layer works, so the notice is noise
warnings.filterwarnings("ignore", message="The TBB threading layer requires")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _initial_backend():
    requested = os.environ.get("WMM_BACKEND", "").strip().lower()
    if requested and requested not in _VALID:
        warnings.warn(f"unknown WMM_BACKEND={requested!r}; using default")
        requested = ""
    if requested == "numba" and not HAVE_NUMBA:
        warnings.warn("WMM_BACKEND=numba requested but numba is unavailable")
        return "numpy"
    if requested:
        return requested
    return "numba" if HAVE_NUMBA else "numpy"


_current = _initial_backend()


def get_backend():
    return _current


def set_backend(name):
    """Switch kernels between ``"numba"`` and ``"numpy"``; returns the old name."""
    global _current
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    old, _current = _current, name
    return old


def thread_count():
    raw = os.environ.get("WMM_THREADS", "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        warnings.warn(f"ignoring non-integer WMM_THREADS={raw!r}")
        return os.cpu_count() or 1
    return max(1, n)


def apply_thread_cap():
    if HAVE_NUMBA:
        n = min(thread_count(), numba.config.NUMBA_NUM_THREADS)
        numba.set_num_threads(n)


def serial_kernels_active():
    return getattr(_local, "serial", False)


@contextlib.contextmanager
def serial_kernels():
    """Use the single-threaded kernel variants on this thread.

    Worker threads that already run in parallel use these so the numba
    thread pool is never entered from several threads at once.
    """
    old = serial_kernels_active()
    _local.serial = True
    try:
        yield
    finally:
        _local.serial = old
