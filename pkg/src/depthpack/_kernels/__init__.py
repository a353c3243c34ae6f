"""Block-codec kernel with a compiled core and a numpy fallback.

The backend is chosen once at import time: the Cython extension when it
built, otherwise the numpy implementation. Set DEPTHPACK_KERNELS=numpy (or
=native) to force a backend, e.g. for benchmarking.
"""

import os

from ._tables import BLOCK, DCT_BASIS, ZIGZAG


def load_backend(name: str):
    """Import a backend module by name ('native' or 'numpy')."""
    if name == "native":
        from . import _native

        return _native
    if name == "numpy":
        from . import _fallback

        return _fallback
    raise ValueError(f"unknown kernel backend {name!r}")


_requested = os.environ.get("DEPTHPACK_KERNELS", "").strip().lower()
if _requested == "numpy":
    BACKEND = "numpy"
elif _requested == "native":
    BACKEND = "native"  # raise below if it did not build
elif _requested == "":
    try:
        load_backend("native")
        BACKEND = "native"
    except ImportError:
        BACKEND = "numpy"
else:
    raise ImportError(f"DEPTHPACK_KERNELS={_requested!r} is not 'native' or 'numpy'")

_impl = load_backend(BACKEND)
encode_plane = _impl.encode_plane

__all__ = ["BACKEND", "BLOCK", "DCT_BASIS", "ZIGZAG", "encode_plane", "load_backend"]
