"""Backend switch for the hot kernels.

Set ``PERMCHAIN_DISABLE_NUMBA=1`` to run the pure-numpy fallback paths. The
flag selects an implementation only; both paths produce the same numbers.
"""

import os
from typing import Any, Callable

DISABLED = os.environ.get("PERMCHAIN_DISABLE_NUMBA", "0").strip().lower() in ("1", "true", "yes")

try:
    from numba import njit as _numba_njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    NUMBA_AVAILABLE = False

    def _numba_njit(*args: Any, **kwargs: Any) -> Callable:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


USE_NUMBA = NUMBA_AVAILABLE and not DISABLED


def njit(*args: Any, **kwargs: Any) -> Callable:
    """``numba.njit`` with caching and GIL release on by default."""
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return _numba_njit(*args, **kwargs)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
