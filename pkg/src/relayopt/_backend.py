"""Kernel backend selection.

Hot Monte Carlo kernels in :mod:`relayopt.kernels` exist in two variants: a
numba ``@njit`` build and a vectorized pure-numpy build.  The active backend
is chosen once at import time from the environment:

* ``RELAYOPT_BACKEND=numba``  force numba (error if numba is unavailable)
* ``RELAYOPT_BACKEND=numpy``  force the pure-numpy path
* unset                       numba when importable, numpy otherwise

Both variants compute the same quantities; they may differ in the last few
floating-point bits because summation order differs.
"""

import os

_CHOICE = os.environ.get("RELAYOPT_BACKEND", "").strip().lower()

if _CHOICE not in ("", "numba", "numpy"):
    raise RuntimeError(
        f"RELAYOPT_BACKEND must be 'numba' or 'numpy', got {_CHOICE!r}"
    )

if _CHOICE == "numpy":
    NUMBA_ENABLED = False
else:
    try:
        import numba  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:
        if _CHOICE == "numba":
            raise
        NUMBA_ENABLED = False


def backend_name() -> str:
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return "numba" if NUMBA_ENABLED else "numpy"
