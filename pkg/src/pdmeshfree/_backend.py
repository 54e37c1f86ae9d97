"""Numba/NumPy backend selection for the hot per-node kernels.

The gradient-weight construction loops over every node and does small
dense linear algebra per node; that is the dominant cost on large
clouds.  When numba is importable those loops run as ahead-of-time
compiled kernels; otherwise (or when ``PDMESHFREE_NUMBA=0``) a pure
NumPy implementation with identical semantics is used.

Environment flag
----------------
``PDMESHFREE_NUMBA``:
    unset / ``"auto"``  use numba when importable (default)
    ``"1"``             require numba, raise if missing
    ``"0"``             force the pure NumPy path

``benchmarks/compare_backends.py`` at the repository root times the
two paths against each other.
"""

import os

_flag = os.environ.get("PDMESHFREE_NUMBA", "auto").strip().lower()

HAVE_NUMBA = False
if _flag in ("auto", "", "1"):
    try:
        import numba  # noqa: F401

        HAVE_NUMBA = True
    except ImportError:
        if _flag == "1":
            raise ImportError(
                "PDMESHFREE_NUMBA=1 but numba is not installed "
                "(pip install pdmeshfree[speed])"
            )
elif _flag != "0":
    raise ValueError(f"unrecognized PDMESHFREE_NUMBA value: {_flag!r}")

USE_NUMBA = HAVE_NUMBA and _flag != "0"


def backend_name() -> str:
    """Name of the active kernel backend: ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"


def set_num_threads(n: int) -> None:
    """Set the numba thread count; silently ignored on the NumPy path."""
    if USE_NUMBA and n > 0:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
