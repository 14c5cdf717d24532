"""Numba / numpy backend selection.

Hot numeric kernels come in two flavors: numba @njit loops and vectorized
numpy. The environment variable SOSPEC_BACKEND picks one:

    SOSPEC_BACKEND=auto    use numba when importable, else numpy (default)
    SOSPEC_BACKEND=numba   require numba, fail loudly if missing
    SOSPEC_BACKEND=numpy   force the pure-numpy fallback

The choice only affects speed. Each backend is deterministic on its own;
cross-backend results agree to floating-point roundoff (see tests).
"""

import os

_env = os.environ.get("SOSPEC_BACKEND", "auto").strip().lower()
if _env not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"SOSPEC_BACKEND must be one of auto|numba|numpy, got {_env!r}"
    )

try:
    from numba import njit  # noqa: F401

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        """Dummy decorator standing in for numba.njit when it is absent."""
        if len(args) == 1 and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


if _env == "numba" and not HAVE_NUMBA:
    raise ImportError("SOSPEC_BACKEND=numba but numba is not importable")

DEFAULT_BACKEND = "numba" if (_env != "numpy" and HAVE_NUMBA) else "numpy"
