"""Kernel backend selection.

The compiled Cython extension is preferred; the numpy implementation is the
fallback.  Set OUSPEC_BACKEND=python or OUSPEC_BACKEND=compiled to force one.
"""
import os

_requested = os.environ.get("OUSPEC_BACKEND", "").strip().lower()

if _requested not in ("", "compiled", "python"):
    raise ImportError(
        f"OUSPEC_BACKEND={_requested!r} not understood (use 'compiled' or 'python')"
    )

if _requested == "python":
    from ouspec import _kernels_py as _impl
else:
    try:
        from ouspec import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "OUSPEC_BACKEND=compiled but the ouspec._kernels extension is "
                "not built; reinstall with a C compiler available"
            )
        from ouspec import _kernels_py as _impl

BACKEND = _impl.BACKEND
ecf_grid = _impl.ecf_grid
kn_dot = _impl.kn_dot
